#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sole/errors.hpp"
#include "sole/util.hpp"

namespace sole {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double squared_distance(Point a, Point b) noexcept {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

inline double distance(Point a, Point b) noexcept { return std::sqrt(squared_distance(a, b)); }

/// An ordered multiset of plane coordinates. Duplicates are allowed.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Point> points) : points_(std::move(points)) {}
  PointCloud(std::initializer_list<Point> points) : points_(points) {}

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const Point& operator[](std::size_t i) const { return points_[i]; }
  Point& operator[](std::size_t i) { return points_[i]; }
  auto begin() const noexcept { return points_.begin(); }
  auto end() const noexcept { return points_.end(); }
  auto begin() noexcept { return points_.begin(); }
  auto end() noexcept { return points_.end(); }
  void push_back(Point p) { points_.push_back(p); }
  void reserve(std::size_t n) { points_.reserve(n); }

  std::span<const Point> view() const noexcept { return points_; }
  const std::vector<Point>& points() const noexcept { return points_; }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::vector<Point> points_;
};

struct Bounds {
  double min_x, max_x, min_y, max_y;
  double width() const noexcept { return max_x - min_x; }
  double height() const noexcept { return max_y - min_y; }
};

inline Bounds bounds(const PointCloud& cloud) {
  if (cloud.empty()) throw EmptyCloudError("bounds of an empty point cloud");
  Bounds b{cloud[0].x, cloud[0].x, cloud[0].y, cloud[0].y};
  for (const Point& p : cloud) {
    b.min_x = std::min(b.min_x, p.x);
    b.max_x = std::max(b.max_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

inline Point centroid(const PointCloud& cloud) {
  if (cloud.empty()) throw EmptyCloudError("centroid of an empty point cloud");
  double sx = 0.0, sy = 0.0;
  for (const Point& p : cloud) {
    sx += p.x;
    sy += p.y;
  }
  const auto n = static_cast<double>(cloud.size());
  return {sx / n, sy / n};
}

// ---------------------------------------------------------------------------
// Rigid transforms
// ---------------------------------------------------------------------------

/// Rotation by `theta` radians about the origin followed by translation
/// (tx, ty): p' = R(theta) p + t.
struct RigidTransform {
  double theta = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  static RigidTransform identity() { return {}; }

  Point operator()(Point p) const noexcept {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c * p.x - s * p.y + tx, s * p.x + c * p.y + ty};
  }

  friend bool operator==(const RigidTransform&, const RigidTransform&) = default;
};

inline PointCloud apply(const RigidTransform& tf, const PointCloud& cloud) {
  const double c = std::cos(tf.theta), s = std::sin(tf.theta);
  std::vector<Point> out;
  out.reserve(cloud.size());
  for (const Point& p : cloud) out.push_back({c * p.x - s * p.y + tf.tx, s * p.x + c * p.y + tf.ty});
  return PointCloud(std::move(out));
}

/// outer ∘ inner: the transform that applies `inner` first.
inline RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner) {
  const double c = std::cos(outer.theta), s = std::sin(outer.theta);
  return {outer.theta + inner.theta, c * inner.tx - s * inner.ty + outer.tx,
          s * inner.tx + c * inner.ty + outer.ty};
}

inline RigidTransform invert(const RigidTransform& tf) {
  const double c = std::cos(-tf.theta), s = std::sin(-tf.theta);
  return {-tf.theta, -(c * tf.tx - s * tf.ty), -(s * tf.tx + c * tf.ty)};
}

// ---------------------------------------------------------------------------
// Sampling, partial cuts, reflection
// ---------------------------------------------------------------------------

/// Uniform sample without replacement of ceil(rate * n) points, returned in
/// input order.
inline PointCloud downsample(const PointCloud& cloud, double rate, std::uint64_t seed) {
  if (cloud.empty()) throw EmptyCloudError("downsample of an empty point cloud");
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("downsample rate must lie in (0, 1]");
  const std::size_t n = cloud.size();
  // Guard against 0.05 * 100 landing on 5.000000000000001.
  const std::size_t keep =
      std::min(n, static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9)));
  if (keep == n) return cloud;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < keep; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  std::vector<Point> out;
  out.reserve(keep);
  for (std::size_t i : idx) out.push_back(cloud[i]);
  return PointCloud(std::move(out));
}

enum class Region { Toe, Heel, Inside, Outside };
enum class Foot { Left, Right };

inline const char* to_string(Region r) {
  switch (r) {
    case Region::Toe: return "toe";
    case Region::Heel: return "heel";
    case Region::Inside: return "inside";
    case Region::Outside: return "outside";
  }
  return "?";
}

inline Region parse_region(const std::string& s) {
  if (s == "toe") return Region::Toe;
  if (s == "heel") return Region::Heel;
  if (s == "inside") return Region::Inside;
  if (s == "outside") return Region::Outside;
  throw ConfigError("unknown partial region '" + s + "'");
}

inline Foot parse_foot(const std::string& s) {
  if (s == "L" || s == "l" || s == "left") return Foot::Left;
  if (s == "R" || s == "r" || s == "right") return Foot::Right;
  throw ConfigError("unknown foot '" + s + "'");
}

inline const char* to_string(Foot f) { return f == Foot::Left ? "L" : "R"; }

/// A straight cut through a print. `keep(p)` selects the retained side.
struct CutPlan {
  bool vertical = false;  // true: cut at x = midpoint; false: at y = midpoint
  double midpoint = 0.0;
  bool keep_greater = false;  // keep coordinate > midpoint, else <= midpoint

  bool keep(Point p) const noexcept {
    const double v = vertical ? p.x : p.y;
    return keep_greater ? v > midpoint : v <= midpoint;
  }
};

/// Robust print midpoint: mean of the 0.025 and 0.975 quantiles per axis.
inline Point quantile_midpoint(const PointCloud& cloud) {
  if (cloud.empty()) throw EmptyCloudError("midpoint of an empty point cloud");
  std::vector<double> xs, ys;
  xs.reserve(cloud.size());
  ys.reserve(cloud.size());
  for (const Point& p : cloud) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  return {(quantile_sorted(xs, 0.025) + quantile_sorted(xs, 0.975)) / 2.0,
          (quantile_sorted(ys, 0.025) + quantile_sorted(ys, 0.975)) / 2.0};
}

/// `toe_up` states that the toe lies toward +y (scans captured toe-up).
inline CutPlan plan_cut(const PointCloud& cloud, Region region, Foot foot, bool toe_up = true) {
  const Point mid = quantile_midpoint(cloud);
  CutPlan plan;
  switch (region) {
    case Region::Toe:
    case Region::Heel:
      plan.vertical = false;
      plan.midpoint = mid.y;
      plan.keep_greater = (region == Region::Toe) == toe_up;
      break;
    case Region::Inside:
    case Region::Outside:
      // Left foot: the inside (medial) edge lies toward +x; right foot mirrors.
      plan.vertical = true;
      plan.midpoint = mid.x;
      plan.keep_greater = (region == Region::Inside) == (foot == Foot::Left);
      break;
  }
  return plan;
}

inline PointCloud apply_cut(const PointCloud& cloud, const CutPlan& plan) {
  std::vector<Point> out;
  for (const Point& p : cloud)
    if (plan.keep(p)) out.push_back(p);
  if (out.empty()) throw DegenerateCutError("partial cut discarded every point");
  return PointCloud(std::move(out));
}

inline PointCloud cut_partial(const PointCloud& cloud, Region region, Foot foot, bool toe_up = true) {
  if (cloud.empty()) throw EmptyCloudError("partial cut of an empty point cloud");
  return apply_cut(cloud, plan_cut(cloud, region, foot, toe_up));
}

/// Mirror about the print's north/south axis: x -> (min_x + max_x) - x.
inline PointCloud reflect(const PointCloud& cloud) {
  const Bounds b = bounds(cloud);
  const double axis_sum = b.min_x + b.max_x;
  std::vector<Point> out;
  out.reserve(cloud.size());
  for (const Point& p : cloud) out.push_back({axis_sum - p.x, p.y});
  return PointCloud(std::move(out));
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_points_csv(std::ostream& os, const PointCloud& cloud) {
  os << "x,y\n";
  for (const Point& p : cloud) os << format_double(p.x) << ',' << format_double(p.y) << '\n';
}

inline void write_points_csv(const std::string& path, const PointCloud& cloud) {
  std::ofstream os(path);
  if (!os) throw IOError("cannot write " + path);
  write_points_csv(os, cloud);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw FormatError("not a number: '" + std::string(s) + "'");
  return v;
}

inline PointCloud read_points_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("point CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y") throw FormatError("point CSV header must be 'x,y'");
  PointCloud cloud;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("point CSV row lacks a comma: " + line);
    const std::string_view v(line);
    const Point p{parse_double(v.substr(0, comma)), parse_double(v.substr(comma + 1))};
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw FormatError("non-finite coordinate");
    cloud.push_back(p);
  }
  return cloud;
}

inline PointCloud read_points_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IOError("cannot read " + path);
  return read_points_csv(is);
}

}  // namespace sole
