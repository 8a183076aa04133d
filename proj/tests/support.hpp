#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <cmath>
#include <vector>

#include "sole/kdtree.hpp"
#include "sole/pointcloud.hpp"
#include "sole/util.hpp"

namespace sole::testing {

/// A tread-like outline cloud: points spread uniformly along the perimeters
/// of a sole-shaped ellipse and a seeded layout of rectangular lugs of mixed
/// sizes. Centred near the origin, roughly 100 x 240 units.
inline PointCloud tread_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  struct Segment {
    Point a, b;
  };
  std::vector<Segment> segs;
  const double ax = 50.0, ay = 120.0;
  const int outline_steps = 64;
  for (int i = 0; i < outline_steps; ++i) {
    const double t0 = 2 * M_PI * i / outline_steps, t1 = 2 * M_PI * (i + 1) / outline_steps;
    // Narrower toward the heel for an asymmetric outline.
    auto rim = [&](double t) {
      const double widen = std::sin(t) > 0 ? 1.0 : 0.8;
      return Point{ax * widen * std::cos(t), ay * std::sin(t)};
    };
    segs.push_back({rim(t0), rim(t1)});
  }
  for (int lug = 0; lug < 18; ++lug) {
    const double w = rng.uniform(6, 22), h = rng.uniform(5, 18);
    const double cx = rng.uniform(-30, 30), cy = rng.uniform(-95, 95);
    const Point p0{cx - w / 2, cy - h / 2}, p1{cx + w / 2, cy - h / 2}, p2{cx + w / 2, cy + h / 2},
        p3{cx - w / 2, cy + h / 2};
    segs.push_back({p0, p1});
    segs.push_back({p1, p2});
    segs.push_back({p2, p3});
    segs.push_back({p3, p0});
  }
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& s : segs) cumulative.push_back(total += distance(s.a, s.b));
  PointCloud cloud;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform(0, total);
    std::size_t j = 0;
    while (cumulative[j] < u) ++j;
    const double start = j == 0 ? 0.0 : cumulative[j - 1];
    const double f = (u - start) / (cumulative[j] - start);
    cloud.push_back({segs[j].a.x + f * (segs[j].b.x - segs[j].a.x), segs[j].a.y + f * (segs[j].b.y - segs[j].a.y)});
  }
  return cloud;
}

inline PointCloud jitter(const PointCloud& cloud, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud out;
  for (const Point& p : cloud) out.push_back({p.x + rng.normal(0, sigma), p.y + rng.normal(0, sigma)});
  return out;
}

/// Median distance from each point of `a` to its nearest point in `b`.
inline double median_nn(const PointCloud& a, const PointCloud& b) {
  const NeighborIndex idx(b);
  std::vector<double> d;
  for (const Point& p : a) d.push_back(idx.nearest(p).distance);
  return median(d);
}

}  // namespace sole::testing
