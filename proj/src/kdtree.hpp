// kdtree.hpp - static kd-tree for exact nearest-neighbour queries.
#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace voxshape::detail {

template <int Dim>
class KdTree {
 public:
  using Point = Eigen::Matrix<double, Dim, 1>;

  explicit KdTree(std::vector<Point> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!points_.empty()) root_ = build(0, static_cast<std::uint32_t>(points_.size()));
  }

  bool empty() const noexcept { return points_.empty(); }
  const std::vector<Point>& points() const noexcept { return points_; }

  struct Hit {
    std::uint32_t index = 0;
    double squared_distance = std::numeric_limits<double>::infinity();
  };

  Hit nearest(const Point& q) const {
    Hit best;
    if (!points_.empty()) search(root_, q, best);
    return best;
  }

 private:
  static constexpr std::uint32_t kLeafSize = 8;
  static constexpr std::int32_t kNone = -1;

  struct Node {
    std::uint32_t begin = 0, end = 0;  // range in order_
    int axis = -1;                     // -1 marks a leaf
    double split = 0.0;
    std::int32_t left = kNone, right = kNone;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end, -1, 0.0, kNone, kNone});
    if (end - begin <= kLeafSize) return id;

    Point lo = points_[order_[begin]], hi = lo;
    for (auto n = begin; n < end; ++n) {
      lo = lo.cwiseMin(points_[order_[n]]);
      hi = hi.cwiseMax(points_[order_[n]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::int32_t id, const Point& q, Hit& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.axis < 0) {
      for (auto n = node.begin; n < node.end; ++n) {
        const double d = (points_[order_[n]] - q).squaredNorm();
        if (d < best.squared_distance || (d == best.squared_distance && order_[n] < best.index)) {
          best.squared_distance = d;
          best.index = order_[n];
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const auto near = diff < 0.0 ? node.left : node.right;
    const auto far = diff < 0.0 ? node.right : node.left;
    search(near, q, best);
    if (diff * diff <= best.squared_distance) search(far, q, best);
  }

  std::vector<Point> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::int32_t root_ = 0;
};

using KdTree3 = KdTree<3>;
using KdTree6 = KdTree<6>;

}  // namespace voxshape::detail
