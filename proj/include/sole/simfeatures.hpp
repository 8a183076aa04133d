#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "sole/errors.hpp"
#include "sole/kdtree.hpp"
#include "sole/pointcloud.hpp"
#include "sole/util.hpp"

namespace sole {

/// Overlap radii reported for every pair.
inline constexpr std::array<int, 5> kOverlapRadii = {1, 2, 3, 5, 10};

/// Fraction of points of `a` whose nearest point in the indexed cloud lies
/// within distance `d` (inclusive). An empty index yields 0.
inline double proportion_overlap(const PointCloud& a, const NeighborIndex& b, double d) {
  if (a.empty()) throw EmptyCloudError("proportion overlap of an empty cloud");
  if (!(d > 0.0)) throw ConfigError("overlap radius must be positive");
  if (b.empty()) return 0.0;
  std::size_t hits = 0;
  for (const Point& p : a)
    if (std::sqrt(b.nearest_squared(p)) <= d) ++hits;
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

inline double proportion_overlap(const PointCloud& a, const PointCloud& b, double d) {
  if (a.empty()) throw EmptyCloudError("proportion overlap of an empty cloud");
  return proportion_overlap(a, NeighborIndex(b), d);
}

/// Overlap in both directions at every radius in kOverlapRadii.
struct OverlapReport {
  std::array<double, kOverlapRadii.size()> q_pct{};  // share of Q near K*
  std::array<double, kOverlapRadii.size()> k_pct{};  // share of K* near Q
};

inline OverlapReport overlap_report(const PointCloud& q, const NeighborIndex& q_index,
                                    const PointCloud& k_star, const NeighborIndex& k_index) {
  OverlapReport r;
  if (q.empty() || k_star.empty()) throw EmptyCloudError("overlap report needs two nonempty clouds");
  // One nearest query per point serves all radii.
  auto fill = [](const PointCloud& a, const NeighborIndex& b, auto& out) {
    std::array<std::size_t, kOverlapRadii.size()> hits{};
    for (const Point& p : a) {
      const double dist = std::sqrt(b.nearest_squared(p));
      for (std::size_t i = 0; i < kOverlapRadii.size(); ++i)
        if (dist <= kOverlapRadii[i]) ++hits[i];
    }
    for (std::size_t i = 0; i < kOverlapRadii.size(); ++i)
      out[i] = static_cast<double>(hits[i]) / static_cast<double>(a.size());
  };
  fill(q, k_index, r.q_pct);
  fill(k_star, q_index, r.k_pct);
  return r;
}

// ---------------------------------------------------------------------------
// Jaccard index over rounded coordinate sets
// ---------------------------------------------------------------------------

/// Rounds half away from zero to `decimals` places, expressed as an integer
/// multiple of 10^-decimals so set membership is exact.
inline std::pair<std::int64_t, std::int64_t> rounded_key(Point p, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return {static_cast<std::int64_t>(std::round(p.x * scale)),
          static_cast<std::int64_t>(std::round(p.y * scale))};
}

inline double jaccard(const PointCloud& a, const PointCloud& b, int decimals) {
  if (decimals < 0 || decimals > 2) throw ConfigError("jaccard rounding must be 0, 1 or 2 decimals");
  std::set<std::pair<std::int64_t, std::int64_t>> sa, sb;
  for (const Point& p : a) sa.insert(rounded_key(p, decimals));
  for (const Point& p : b) sb.insert(rounded_key(p, decimals));
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& key : sa) common += sb.count(key);
  const std::size_t uni = sa.size() + sb.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// Minimum-distance distribution
// ---------------------------------------------------------------------------

struct MinDistStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double p10 = 0.0, p25 = 0.0, p50 = 0.0, p75 = 0.0, p90 = 0.0;
};

/// Summary of a distance sample: mean, population sd and interpolated
/// percentiles.
inline MinDistStats summarize_distances(std::vector<double> dists) {
  if (dists.empty()) throw EmptyCloudError("no distances to summarize");
  std::sort(dists.begin(), dists.end());
  const auto n = static_cast<double>(dists.size());
  double sum = 0.0;
  for (double d : dists) sum += d;
  const double mean = sum / n;
  double ss = 0.0;
  for (double d : dists) ss += (d - mean) * (d - mean);
  MinDistStats s;
  s.mean = mean;
  s.std = std::sqrt(ss / n);
  s.p10 = quantile_sorted(dists, 0.10);
  s.p25 = quantile_sorted(dists, 0.25);
  s.p50 = quantile_sorted(dists, 0.50);
  s.p75 = quantile_sorted(dists, 0.75);
  s.p90 = quantile_sorted(dists, 0.90);
  return s;
}

inline std::vector<double> nearest_distances(const PointCloud& q, const NeighborIndex& k_index) {
  std::vector<double> d;
  d.reserve(q.size());
  for (const Point& p : q) d.push_back(std::sqrt(k_index.nearest_squared(p)));
  return d;
}

inline MinDistStats min_dist_stats(const PointCloud& q, const NeighborIndex& k_index) {
  if (q.empty() || k_index.empty()) throw EmptyCloudError("min-distance statistics need two nonempty clouds");
  return summarize_distances(nearest_distances(q, k_index));
}

inline MinDistStats min_dist_stats(const PointCloud& q, const PointCloud& k_star) {
  if (q.empty() || k_star.empty()) throw EmptyCloudError("min-distance statistics need two nonempty clouds");
  return min_dist_stats(q, NeighborIndex(k_star));
}

}  // namespace sole
