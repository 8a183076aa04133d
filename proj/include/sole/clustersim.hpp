#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sole/errors.hpp"
#include "sole/kdtree.hpp"
#include "sole/pointcloud.hpp"
#include "sole/util.hpp"

namespace sole {

inline constexpr std::array<int, 2> kClusterCounts = {20, 100};
inline constexpr std::size_t kWardSeedingLimit = 5000;
inline constexpr int kKMeansMaxIterations = 300;

/// Agglomerative Ward hierarchy. The full merge sequence is computed once
/// with the nearest-neighbour-chain algorithm (O(n^2) time, O(n) memory),
/// then sorted by merge cost so it can be cut at any cluster count.
class WardHierarchy {
 public:
  explicit WardHierarchy(const PointCloud& cloud) : points_(cloud.points()) {
    if (points_.empty()) throw EmptyCloudError("Ward clustering of an empty cloud");
    build();
  }

  std::size_t size() const noexcept { return points_.size(); }

  /// Per-point cluster labels for a cut at k clusters. Labels are numbered by
  /// the first point (in input order) that each cluster contains.
  std::vector<int> labels(std::size_t k) const {
    const std::size_t n = points_.size();
    if (k < 1 || k > n) throw TooFewPointsError("Ward cut needs 1 <= k <= number of points");
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (std::size_t m = 0; m < n - k; ++m) {
      const std::size_t a = find(merges_[m].a), b = find(merges_[m].b);
      parent[std::max(a, b)] = std::min(a, b);
    }
    std::vector<int> label(n, -1), root_label(n, -1);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = find(i);
      if (root_label[r] < 0) root_label[r] = next++;
      label[i] = root_label[r];
    }
    return label;
  }

  std::vector<Point> centroids(std::size_t k) const {
    const std::vector<int> label = labels(k);
    std::vector<double> sx(k, 0.0), sy(k, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < points_.size(); ++i) {
      sx[label[i]] += points_[i].x;
      sy[label[i]] += points_[i].y;
      ++count[label[i]];
    }
    std::vector<Point> out(k);
    for (std::size_t c = 0; c < k; ++c)
      out[c] = {sx[c] / static_cast<double>(count[c]), sy[c] / static_cast<double>(count[c])};
    return out;
  }

 private:
  struct Merge {
    std::size_t a, b;  // representative original points of the two clusters
    double cost;
  };

  void build() {
    const std::size_t n = points_.size();
    // Cluster state lives in the slot of its lowest member.
    std::vector<double> cx(n), cy(n), size(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) cx[i] = points_[i].x, cy[i] = points_[i].y;
    std::vector<std::size_t> active(n);
    std::iota(active.begin(), active.end(), std::size_t{0});
    std::vector<std::size_t> pos(n);  // slot -> position in `active`
    std::iota(pos.begin(), pos.end(), std::size_t{0});

    auto cost = [&](std::size_t a, std::size_t b) {
      const double dx = cx[a] - cx[b], dy = cy[a] - cy[b];
      return size[a] * size[b] / (size[a] + size[b]) * (dx * dx + dy * dy);
    };

    std::vector<std::size_t> chain;
    merges_.reserve(n - 1);
    while (active.size() > 1) {
      if (chain.empty()) chain.push_back(active.front());
      const std::size_t a = chain.back();
      const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : n;
      std::size_t best = n;
      double best_cost = std::numeric_limits<double>::infinity();
      if (prev != n) {
        best = prev;
        best_cost = cost(a, prev);
      }
      for (std::size_t b : active) {
        if (b == a) continue;
        const double c = cost(a, b);
        if (c < best_cost || (c == best_cost && b != prev && best != prev && b < best)) {
          best_cost = c;
          best = b;
        }
      }
      if (best == prev) {
        chain.pop_back();
        chain.pop_back();
        const std::size_t keep = std::min(a, best), drop = std::max(a, best);
        merges_.push_back({keep, drop, best_cost});
        const double total = size[keep] + size[drop];
        cx[keep] = (size[keep] * cx[keep] + size[drop] * cx[drop]) / total;
        cy[keep] = (size[keep] * cy[keep] + size[drop] * cy[drop]) / total;
        size[keep] = total;
        const std::size_t p = pos[drop];
        active[p] = active.back();
        pos[active[p]] = p;
        active.pop_back();
      } else {
        chain.push_back(best);
      }
    }
    std::stable_sort(merges_.begin(), merges_.end(),
                     [](const Merge& x, const Merge& y) { return x.cost < y.cost; });
  }

  std::vector<Point> points_;
  std::vector<Merge> merges_;
};

/// Centroids of a Ward cut at k clusters. Clouds above kWardSeedingLimit
/// points are seeded from a uniform random subsample of that size.
inline std::vector<Point> ward_centroids(const PointCloud& cloud, std::size_t k, std::uint64_t seed = 0) {
  if (cloud.size() < k || k < 1) throw TooFewPointsError("Ward seeding needs at least k points");
  if (cloud.size() > kWardSeedingLimit) {
    const double rate = static_cast<double>(kWardSeedingLimit) / static_cast<double>(cloud.size());
    return WardHierarchy(downsample(cloud, rate, seed)).centroids(k);
  }
  return WardHierarchy(cloud).centroids(k);
}

struct Clustering {
  std::size_t k = 0;
  std::vector<int> assignments;
  std::vector<Point> centroids;
  std::vector<std::size_t> sizes;
  int iterations = 0;
  bool degenerate = false;  // some cluster ended empty
  std::vector<double> objective_history;  // within-cluster SS after each assignment
};

/// Lloyd's k-means from explicit initial centroids. Each round assigns every
/// point to its nearest centroid (ties to the lower index) and recomputes the
/// means; the run stops after the first round that leaves the centroids in
/// place, so a run that starts converged reports one iteration. An emptied
/// cluster keeps its previous centroid and is flagged.
inline Clustering kmeans(const PointCloud& cloud, const std::vector<Point>& init, int max_iter = kKMeansMaxIterations) {
  const std::size_t k = init.size();
  if (k < 1 || k > cloud.size()) throw TooFewPointsError("k-means needs 1 <= k <= number of points");
  if (max_iter < 1) throw ConfigError("k-means needs max_iter >= 1");
  Clustering out;
  out.k = k;
  out.centroids = init;
  out.assignments.assign(cloud.size(), -1);
  out.sizes.assign(k, 0);

  for (int round = 1; round <= max_iter; ++round) {
    const NeighborIndex centres{PointCloud(out.centroids)};
    double objective = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const Neighbor nb = centres.nearest(cloud[i]);
      out.assignments[i] = static_cast<int>(nb.index);
      objective += squared_distance(cloud[i], out.centroids[nb.index]);
    }
    out.objective_history.push_back(objective);

    std::vector<double> sx(k, 0.0), sy(k, 0.0);
    std::fill(out.sizes.begin(), out.sizes.end(), 0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto c = static_cast<std::size_t>(out.assignments[i]);
      sx[c] += cloud[i].x;
      sy[c] += cloud[i].y;
      ++out.sizes[c];
    }
    bool moved = false;
    out.degenerate = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (out.sizes[c] == 0) {
        out.degenerate = true;
        continue;
      }
      const Point mean{sx[c] / static_cast<double>(out.sizes[c]), sy[c] / static_cast<double>(out.sizes[c])};
      if (squared_distance(mean, out.centroids[c]) > 1e-18) moved = true;
      out.centroids[c] = mean;
    }
    out.iterations = round;
    if (!moved) break;
  }
  return out;
}

/// Total within-cluster variation normalized by cloud size: the sum over
/// nonempty clusters of the mean squared distance to the centroid, divided by
/// the number of points.
inline double total_within_variation(const PointCloud& cloud, const Clustering& cl) {
  std::vector<double> ss(cl.k, 0.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto c = static_cast<std::size_t>(cl.assignments[i]);
    ss[c] += squared_distance(cloud[i], cl.centroids[c]);
  }
  double tw = 0.0;
  for (std::size_t c = 0; c < cl.k; ++c)
    if (cl.sizes[c] > 0) tw += ss[c] / static_cast<double>(cl.sizes[c]);
  return tw / static_cast<double>(cloud.size());
}

struct ClusterMetrics {
  int k = 0;
  double cdm = 0.0;
  double cpm = 0.0;
  int im = 0;
  double twrm = 0.0;
  bool twrm_defined = true;
  bool degenerate = false;
};

namespace detail {

inline ClusterMetrics compare_clusterings(const PointCloud& q, const Clustering& cq, const PointCloud& k_star,
                                          const Clustering& ck) {
  ClusterMetrics m;
  m.k = static_cast<int>(cq.k);
  m.im = ck.iterations;
  m.degenerate = cq.degenerate || ck.degenerate;

  double centroid_ss = 0.0, proportion_ss = 0.0;
  std::size_t matched = 0;
  const auto nq = static_cast<double>(q.size()), nk = static_cast<double>(k_star.size());
  for (std::size_t i = 0; i < cq.k; ++i) {
    const double diff = static_cast<double>(cq.sizes[i]) / nq - static_cast<double>(ck.sizes[i]) / nk;
    proportion_ss += diff * diff;
    if (cq.sizes[i] > 0 && ck.sizes[i] > 0) {
      centroid_ss += squared_distance(cq.centroids[i], ck.centroids[i]);
      ++matched;
    }
  }
  m.cdm = matched > 0 ? std::sqrt(centroid_ss / static_cast<double>(matched)) : 0.0;
  m.cpm = std::sqrt(proportion_ss / static_cast<double>(cq.k));

  const double tw_q = total_within_variation(q, cq);
  const double tw_k = total_within_variation(k_star, ck);
  if (tw_q > 0.0) m.twrm = (tw_q - tw_k) / tw_q;
  else if (tw_k == 0.0) m.twrm = 0.0;
  else m.twrm_defined = false;
  return m;
}

}  // namespace detail

/// Cluster-structure comparison: Ward seeds on Q, k-means on Q, then k-means
/// on K* initialised from Q's final centroids. Cluster i of K* corresponds to
/// cluster i of Q.
inline ClusterMetrics cluster_metrics(const PointCloud& q, const PointCloud& k_star, std::size_t k,
                                      std::uint64_t seed = 0) {
  if (q.size() < k || k_star.size() < k) throw TooFewPointsError("cluster metrics need at least k points per cloud");
  const Clustering cq = kmeans(q, ward_centroids(q, k, seed));
  const Clustering ck = kmeans(k_star, cq.centroids);
  return detail::compare_clusterings(q, cq, k_star, ck);
}

/// Cluster metrics for every k in kClusterCounts, sharing one Ward hierarchy.
/// Entries are empty where either cloud has fewer than k points.
inline std::array<std::optional<ClusterMetrics>, kClusterCounts.size()> cluster_metrics_all(
    const PointCloud& q, const PointCloud& k_star, std::uint64_t seed = 0) {
  std::array<std::optional<ClusterMetrics>, kClusterCounts.size()> out;
  if (q.empty() || k_star.empty()) return out;
  const PointCloud seed_cloud =
      q.size() > kWardSeedingLimit
          ? downsample(q, static_cast<double>(kWardSeedingLimit) / static_cast<double>(q.size()), seed)
          : q;
  std::optional<WardHierarchy> tree;
  for (std::size_t i = 0; i < kClusterCounts.size(); ++i) {
    const auto k = static_cast<std::size_t>(kClusterCounts[i]);
    if (q.size() < k || k_star.size() < k) continue;
    if (!tree) tree.emplace(seed_cloud);
    const Clustering cq = kmeans(q, tree->centroids(k));
    const Clustering ck = kmeans(k_star, cq.centroids);
    out[i] = detail::compare_clusterings(q, cq, k_star, ck);
  }
  return out;
}

/// Within-cluster variation per candidate k (Ward-seeded k-means), for elbow
/// inspection.
inline std::vector<std::pair<int, double>> wcv_sweep(const PointCloud& cloud, const std::vector<int>& ks,
                                                     std::uint64_t seed = 0) {
  if (ks.empty()) return {};
  const int k_max = *std::max_element(ks.begin(), ks.end());
  if (static_cast<std::size_t>(k_max) > cloud.size()) throw TooFewPointsError("wcv sweep: k exceeds cloud size");
  const PointCloud seed_cloud =
      cloud.size() > kWardSeedingLimit
          ? downsample(cloud, static_cast<double>(kWardSeedingLimit) / static_cast<double>(cloud.size()), seed)
          : cloud;
  const WardHierarchy tree(seed_cloud);
  std::vector<std::pair<int, double>> out;
  for (int k : ks) {
    if (k < 1) throw ConfigError("wcv sweep: k must be positive");
    const Clustering cl = kmeans(cloud, tree.centroids(static_cast<std::size_t>(k)));
    out.emplace_back(k, total_within_variation(cloud, cl));
  }
  return out;
}

inline std::vector<int> default_wcv_ks() {
  std::vector<int> ks;
  for (int k = 10; k <= 500; k += 10) ks.push_back(k);
  return ks;
}

}  // namespace sole
