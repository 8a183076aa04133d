#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "sole/simfeatures.hpp"
#include "support.hpp"

using namespace sole;
using sole::testing::jitter;
using sole::testing::tread_cloud;

namespace {

PointCloud random_cloud(std::size_t n, double extent, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({rng.uniform(0, extent), rng.uniform(0, extent)});
  return c;
}

// O(nm) nearest distances and an independent percentile routine.
std::vector<double> brute_distances(const PointCloud& q, const PointCloud& k) {
  std::vector<double> out;
  for (const Point& a : q) {
    double best = INFINITY;
    for (const Point& b : k) best = std::min(best, std::hypot(a.x - b.x, a.y - b.y));
    out.push_back(best);
  }
  return out;
}

double percentile(std::vector<double> v, double pct) {
  std::sort(v.begin(), v.end());
  const double rank = pct / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  return v[lo] + (rank - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

TEST(ProportionOverlap, SelfIsOne) {
  const PointCloud a = tread_cloud(300, 1);
  for (int d : kOverlapRadii) EXPECT_EQ(proportion_overlap(a, a, d), 1.0);
}

TEST(ProportionOverlap, HandEnumeratedExample) {
  const PointCloud a{{0, 0}, {10, 0}};
  const PointCloud b{{0, 0}};
  EXPECT_EQ(proportion_overlap(a, b, 1), 0.5);
  EXPECT_EQ(proportion_overlap(b, a, 1), 1.0);
}

TEST(ProportionOverlap, RadiusIsInclusive) {
  const PointCloud a{{0, 0}};
  const PointCloud b{{3, 4}};
  EXPECT_EQ(proportion_overlap(a, b, 5), 1.0);
  EXPECT_EQ(proportion_overlap(a, b, 4.999), 0.0);
}

TEST(ProportionOverlap, EmptyCases) {
  EXPECT_EQ(proportion_overlap(PointCloud{{0, 0}}, PointCloud{}, 3), 0.0);
  EXPECT_THROW(proportion_overlap(PointCloud{}, PointCloud{{0, 0}}, 3), EmptyCloudError);
  EXPECT_THROW(proportion_overlap(PointCloud{{0, 0}}, PointCloud{{0, 0}}, 0), ConfigError);
}

TEST(ProportionOverlap, MonotoneInRadius) {
  const PointCloud a = random_cloud(200, 100, 2);
  const PointCloud b = random_cloud(150, 100, 3);
  double prev = 0.0;
  for (double d = 0.25; d <= 20; d += 0.25) {
    const double v = proportion_overlap(a, b, d);
    EXPECT_GE(v, prev);
    EXPECT_LE(v, 1.0);
    prev = v;
  }
}

TEST(OverlapReport, MatchesPerRadiusCalls) {
  const PointCloud q = random_cloud(200, 60, 4);
  const PointCloud k = random_cloud(180, 60, 5);
  const OverlapReport r = overlap_report(q, NeighborIndex(q), k, NeighborIndex(k));
  for (std::size_t i = 0; i < kOverlapRadii.size(); ++i) {
    EXPECT_EQ(r.q_pct[i], proportion_overlap(q, k, kOverlapRadii[i]));
    EXPECT_EQ(r.k_pct[i], proportion_overlap(k, q, kOverlapRadii[i]));
    if (i > 0) {
      EXPECT_GE(r.q_pct[i], r.q_pct[i - 1]);
      EXPECT_GE(r.k_pct[i], r.k_pct[i - 1]);
    }
  }
}

TEST(Jaccard, IdenticalDisjointAndEmpty) {
  const PointCloud a = random_cloud(100, 50, 6);
  for (int dec = 0; dec <= 2; ++dec) EXPECT_EQ(jaccard(a, a, dec), 1.0);
  EXPECT_EQ(jaccard(PointCloud{{0, 0}, {1, 1}}, PointCloud{{5, 5}, {7, 7}}, 0), 0.0);
  EXPECT_EQ(jaccard(PointCloud{}, PointCloud{}, 1), 0.0);
  EXPECT_THROW(jaccard(a, a, 3), ConfigError);
}

TEST(Jaccard, RoundingResolution) {
  const PointCloud a{{0, 0}};
  const PointCloud b{{0.4, 0}};
  EXPECT_EQ(jaccard(a, b, 0), 1.0);
  EXPECT_EQ(jaccard(a, b, 1), 0.0);
}

TEST(Jaccard, HalfRoundsAwayFromZero) {
  EXPECT_EQ(jaccard(PointCloud{{0.5, -0.5}}, PointCloud{{1, -1}}, 0), 1.0);
  EXPECT_EQ(jaccard(PointCloud{{2.5, 0}}, PointCloud{{3, 0}}, 0), 1.0);
}

TEST(Jaccard, SetSemanticsAndPartialOverlap) {
  // Duplicates collapse: {(0,0),(1,0)} vs {(0,0),(2,0)} -> 1/3.
  const PointCloud a{{0, 0}, {0.1, 0}, {1, 0}};
  const PointCloud b{{0, 0}, {2, 0}};
  EXPECT_DOUBLE_EQ(jaccard(a, b, 0), 1.0 / 3.0);
}

TEST(Jaccard, Symmetric) {
  const PointCloud a = random_cloud(80, 10, 7);
  const PointCloud b = random_cloud(90, 10, 8);
  for (int dec = 0; dec <= 2; ++dec) EXPECT_EQ(jaccard(a, b, dec), jaccard(b, a, dec));
}

TEST(MinDistStats, SelfIsZero) {
  const PointCloud a = tread_cloud(200, 9);
  const MinDistStats s = min_dist_stats(a, a);
  for (double v : {s.mean, s.std, s.p10, s.p25, s.p50, s.p75, s.p90}) EXPECT_EQ(v, 0.0);
}

TEST(MinDistStats, HandComputedExample) {
  const MinDistStats s = min_dist_stats(PointCloud{{0, 0}, {3, 0}}, PointCloud{{1, 0}});
  EXPECT_DOUBLE_EQ(s.mean, 1.5);
  EXPECT_DOUBLE_EQ(s.p50, 1.5);
  EXPECT_DOUBLE_EQ(s.std, 0.5);
  EXPECT_DOUBLE_EQ(s.p10, 1.1);
  EXPECT_DOUBLE_EQ(s.p90, 1.9);
}

TEST(MinDistStats, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const PointCloud q = random_cloud(200, 100, 10 + seed);
    const PointCloud k = random_cloud(200, 100, 20 + seed);
    const std::vector<double> d = brute_distances(q, k);
    double mean = 0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(d.size());
    double var = 0;
    for (double v : d) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(d.size()));
    const MinDistStats s = min_dist_stats(q, k);
    EXPECT_NEAR(s.mean, mean, 1e-9);
    EXPECT_NEAR(s.std, sd, 1e-9);
    EXPECT_NEAR(s.p10, percentile(d, 10), 1e-9);
    EXPECT_NEAR(s.p25, percentile(d, 25), 1e-9);
    EXPECT_NEAR(s.p50, percentile(d, 50), 1e-9);
    EXPECT_NEAR(s.p75, percentile(d, 75), 1e-9);
    EXPECT_NEAR(s.p90, percentile(d, 90), 1e-9);
  }
}

TEST(MinDistStats, OrderedAndNonNegative) {
  const MinDistStats s = min_dist_stats(random_cloud(100, 40, 30), random_cloud(50, 40, 31));
  EXPECT_GE(s.p10, 0.0);
  EXPECT_LE(s.p10, s.p25);
  EXPECT_LE(s.p25, s.p50);
  EXPECT_LE(s.p50, s.p75);
  EXPECT_LE(s.p75, s.p90);
  EXPECT_GE(s.std, 0.0);
}

TEST(MinDistStats, AddingCandidatesNeverIncreasesDistances) {
  const PointCloud a = random_cloud(100, 50, 32);
  const PointCloud b = random_cloud(60, 50, 33);
  PointCloud extra = b;
  for (const Point& p : random_cloud(40, 50, 34)) extra.push_back(p);
  const std::vector<double> d_b = nearest_distances(a, NeighborIndex(b));
  const std::vector<double> d_extra = nearest_distances(a, NeighborIndex(extra));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LE(d_extra[i], d_b[i]);
  const MinDistStats sb = min_dist_stats(a, b), se = min_dist_stats(a, extra);
  EXPECT_LE(se.mean, sb.mean);
  EXPECT_LE(se.p50, sb.p50);
  EXPECT_LE(se.p90, sb.p90);
}

TEST(MinDistStats, JitteredCopyIsCloserThanAnotherTread) {
  const PointCloud a = tread_cloud(800, 40);
  const PointCloud mate = jitter(a, 0.5, 41);
  const PointCloud other = tread_cloud(800, 42);
  EXPECT_LT(min_dist_stats(a, mate).p50, min_dist_stats(a, other).p50);
}

TEST(MinDistStats, EmptyThrows) {
  EXPECT_THROW(min_dist_stats(PointCloud{}, PointCloud{{1, 1}}), EmptyCloudError);
  EXPECT_THROW(min_dist_stats(PointCloud{{1, 1}}, PointCloud{}), EmptyCloudError);
}
