#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <vector>

#include "artrack/kinematics.hpp"

namespace artrack {

/// Static kd-tree for exact radius-limited nearest-neighbour queries.
/// Equidistant candidates resolve to the lowest point index.
class NearestNeighborIndex {
 public:
  NearestNeighborIndex() = default;

  explicit NearestNeighborIndex(std::vector<Vec3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!points_.empty()) build(0, static_cast<int>(points_.size()));
  }

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// Closest point with distance <= radius, or nothing.
  std::optional<int> query(const Vec3& q, double radius) const {
    if (nodes_.empty()) return std::nullopt;
    Best best{radius * radius, -1};
    search(0, q, best);
    if (best.index < 0) return std::nullopt;
    return best.index;
  }

 private:
  static constexpr int kLeafSize = 8;

  struct Node {
    int begin = 0, end = 0;
    int left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
  };

  struct Best {
    double d2;
    int index;
  };

  int build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (int i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
      const double ca = points_[a][axis], cb = points_[b][axis];
      return ca < cb || (ca == cb && a < b);
    });
    const double split = points_[order_[mid]][axis];
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    return id;
  }

  void search(int id, const Vec3& q, Best& best) const {
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 < best.d2 || (d2 == best.d2 && (best.index < 0 || idx < best.index))) best = {d2, idx};
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    search(near, q, best);
    if (diff * diff <= best.d2) search(far, q, best);
  }

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace artrack
