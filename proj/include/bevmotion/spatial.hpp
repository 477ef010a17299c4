#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "bevmotion/errors.hpp"
#include "bevmotion/geometry.hpp"

namespace bevmotion {

// Exact nearest-neighbor index over a point-cloud snapshot. Axis-aligned
// splitting tree, median split along the widest axis. Queries return exactly
// what an exhaustive scan would, with distance ties broken by the lowest
// source index. Immutable after construction; concurrent queries are safe.
class NnIndex {
 public:
  static constexpr std::size_t kNoExclude = std::numeric_limits<std::size_t>::max();

  struct Hit {
    std::size_t index = kNoExclude;
    double distance = std::numeric_limits<double>::infinity();
  };

  explicit NnIndex(const PointCloud& cloud) : NnIndex(cloud.points) {}

  explicit NnIndex(std::vector<Point3> points) : points_(std::move(points)) {
    if (points_.empty()) throw EmptyInputError("NnIndex: cannot index an empty cloud");
    order_.resize(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i)
      order_[i] = static_cast<std::uint32_t>(i);
    nodes_.reserve(2 * points_.size() / kLeafCapacity + 2);
    root_ = build(0, static_cast<std::uint32_t>(points_.size()));
  }

  std::size_t size() const { return points_.size(); }

  Hit nearest(const Point3& query) const {
    Best best;
    search_nearest(root_, query, best);
    return {best.index, std::sqrt(best.dist_sq)};
  }

  // Up to k_max points with distance <= radius, sorted by (distance, index).
  // Pass the query's own source index as exclude_index for same-cloud
  // neighborhood queries.
  std::vector<std::size_t> radius_neighbors(const Point3& query, double radius,
                                            std::size_t k_max,
                                            std::size_t exclude_index = kNoExclude) const {
    if (!(radius > 0.0)) throw ValidationError("radius_neighbors: radius must be > 0");
    if (k_max < 1) throw ValidationError("radius_neighbors: k_max must be >= 1");
    std::vector<std::pair<double, std::size_t>> found;
    search_radius(root_, query, radius * radius, exclude_index, found);
    std::sort(found.begin(), found.end());
    if (found.size() > k_max) found.resize(k_max);
    std::vector<std::size_t> out;
    out.reserve(found.size());
    for (const auto& [d2, idx] : found) out.push_back(idx);
    return out;
  }

 private:
  static constexpr std::uint32_t kLeafCapacity = 16;

  struct Node {
    double split = 0.0;
    std::int32_t axis = -1;  // -1 marks a leaf
    std::uint32_t left = 0, right = 0;
    std::uint32_t begin = 0, end = 0;  // leaf range into order_
  };

  struct Best {
    double dist_sq = std::numeric_limits<double>::infinity();
    std::size_t index = kNoExclude;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    Node node;
    if (end - begin <= kLeafCapacity) {
      node.begin = begin;
      node.end = end;
      nodes_.push_back(node);
      return static_cast<std::uint32_t>(nodes_.size() - 1);
    }
    Point3 lo = points_[order_[begin]], hi = lo;
    for (std::uint32_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double ca = points_[a][axis], cb = points_[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    node.axis = axis;
    node.split = points_[order_[mid]][axis];
    const std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(node);
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
  }

  void search_nearest(std::uint32_t node_id, const Point3& query, Best& best) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        const double d2 = (points_[idx] - query).squaredNorm();
        if (d2 < best.dist_sq || (d2 == best.dist_sq && idx < best.index)) {
          best.dist_sq = d2;
          best.index = idx;
        }
      }
      return;
    }
    const double delta = query[node.axis] - node.split;
    const std::uint32_t near = delta < 0.0 ? node.left : node.right;
    const std::uint32_t far = delta < 0.0 ? node.right : node.left;
    search_nearest(near, query, best);
    // <= keeps equal-distance candidates reachable so index tie-breaking is exact
    if (delta * delta <= best.dist_sq) search_nearest(far, query, best);
  }

  void search_radius(std::uint32_t node_id, const Point3& query, double radius_sq,
                     std::size_t exclude_index,
                     std::vector<std::pair<double, std::size_t>>& found) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        if (idx == exclude_index) continue;
        const double d2 = (points_[idx] - query).squaredNorm();
        if (d2 <= radius_sq) found.emplace_back(d2, idx);
      }
      return;
    }
    const double delta = query[node.axis] - node.split;
    const std::uint32_t near = delta < 0.0 ? node.left : node.right;
    const std::uint32_t far = delta < 0.0 ? node.right : node.left;
    search_radius(near, query, radius_sq, exclude_index, found);
    if (delta * delta <= radius_sq) search_radius(far, query, radius_sq, exclude_index, found);
  }

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::uint32_t root_ = 0;
};

}  // namespace bevmotion
