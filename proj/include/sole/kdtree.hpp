#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "sole/errors.hpp"
#include "sole/pointcloud.hpp"

namespace sole {

struct Neighbor {
  std::size_t index = 0;  // insertion position in the indexed cloud
  Point point;
  double distance = 0.0;
};

/// Balanced 2D KD-tree over a copy of a point cloud. Immutable after
/// construction, so concurrent queries are safe.
///
/// Nearest-neighbour queries are exact: the reported distance is computed the
/// same way a brute-force scan would (`sqrt(dx*dx + dy*dy)`), and equidistant
/// candidates resolve to the lowest insertion index.
class NeighborIndex {
 public:
  static constexpr std::size_t kLeafSize = 8;

  NeighborIndex() = default;

  explicit NeighborIndex(const PointCloud& cloud) : points_(cloud.points()) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::uint32_t{0});
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 2);
      build(0, points_.size(), 0);
    }
  }

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const std::vector<Point>& points() const noexcept { return points_; }

  Neighbor nearest(Point q) const {
    if (points_.empty()) throw EmptyCloudError("nearest-neighbour query on an empty index");
    Best best;
    search(0, q, best);
    const Point p = points_[best.index];
    return {best.index, p, distance(p, q)};
  }

  /// Squared distance to the nearest indexed point (no tie-break needed).
  double nearest_squared(Point q) const {
    if (points_.empty()) throw EmptyCloudError("nearest-neighbour query on an empty index");
    Best best;
    search(0, q, best);
    return best.d2;
  }

  /// True if some indexed point lies within `radius` (inclusive) of q.
  bool any_within(Point q, double radius) const {
    if (points_.empty()) return false;
    return any_within(0, q, radius * radius);
  }

 private:
  struct Node {
    std::uint32_t begin = 0, end = 0;  // range in order_ (leaves)
    std::int32_t left = -1, right = -1;
    std::uint8_t axis = 0;
    double split = 0.0;
    bool leaf() const noexcept { return left < 0; }
  };

  struct Best {
    std::size_t index = std::numeric_limits<std::size_t>::max();
    double d2 = std::numeric_limits<double>::infinity();
  };

  static double coord(Point p, int axis) noexcept { return axis == 0 ? p.x : p.y; }

  std::int32_t build(std::size_t begin, std::size_t end, int depth) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({});
    nodes_[id].begin = static_cast<std::uint32_t>(begin);
    nodes_[id].end = static_cast<std::uint32_t>(end);
    if (end - begin <= kLeafSize) return id;

    // Split on the axis of larger spread; fall back to depth parity on ties.
    double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    double hi[2] = {-lo[0], -lo[1]};
    for (std::size_t i = begin; i < end; ++i) {
      const Point p = points_[order_[i]];
      lo[0] = std::min(lo[0], p.x), hi[0] = std::max(hi[0], p.x);
      lo[1] = std::min(lo[1], p.y), hi[1] = std::max(hi[1], p.y);
    }
    const double spread_x = hi[0] - lo[0], spread_y = hi[1] - lo[1];
    const int axis = spread_x > spread_y ? 0 : (spread_y > spread_x ? 1 : depth % 2);
    if (std::max(spread_x, spread_y) == 0.0) return id;  // all coincident

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return coord(points_[a], axis) < coord(points_[b], axis);
                     });
    const double split = coord(points_[order_[mid]], axis);
    const std::int32_t left = build(begin, mid, depth + 1);
    const std::int32_t right = build(mid, end, depth + 1);
    Node& node = nodes_[id];
    node.axis = static_cast<std::uint8_t>(axis);
    node.split = split;
    node.left = left;
    node.right = right;
    return id;
  }

  void search(std::int32_t id, Point q, Best& best) const {
    const Node& node = nodes_[id];
    if (node.leaf()) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        const double d2 = squared_distance(points_[idx], q);
        if (d2 < best.d2 || (d2 == best.d2 && idx < best.index)) {
          best.d2 = d2;
          best.index = idx;
        }
      }
      return;
    }
    // Left subtree holds coordinates <= split, right holds >= split.
    const double diff = coord(q, node.axis) - node.split;
    const std::int32_t near = diff <= 0.0 ? node.left : node.right;
    const std::int32_t far = diff <= 0.0 ? node.right : node.left;
    search(near, q, best);
    // Equality still descends so equidistant lower indices are found.
    if (diff * diff <= best.d2) search(far, q, best);
  }

  bool any_within(std::int32_t id, Point q, double r2) const {
    const Node& node = nodes_[id];
    if (node.leaf()) {
      for (std::uint32_t i = node.begin; i < node.end; ++i)
        if (squared_distance(points_[order_[i]], q) <= r2) return true;
      return false;
    }
    const double diff = coord(q, node.axis) - node.split;
    const std::int32_t near = diff <= 0.0 ? node.left : node.right;
    const std::int32_t far = diff <= 0.0 ? node.right : node.left;
    if (any_within(near, q, r2)) return true;
    return diff * diff <= r2 && any_within(far, q, r2);
  }

  std::vector<Point> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace sole
