#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "flowreg/geometry.hpp"

namespace flowreg {

struct Neighbor {
  std::size_t index = 0;
  double sq_dist = std::numeric_limits<double>::infinity();

  /// Nearest first; equal distances resolve to the lower index.
  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
  }
};

inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Immutable 3-d tree over a copy of the indexed points. Queries are const
/// and may run concurrently.
class KdTree {
 public:
  KdTree() = default;

  explicit KdTree(std::span<const Point3> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 2);
      build(0, points_.size());
    }
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const PointCloud& points() const { return points_; }

  Neighbor nearest(const Point3& query) const {
    if (points_.empty()) throw Error(ErrorCode::EmptyGeometry, "nearest-neighbor query on an empty index");
    Neighbor best;
    search_nearest(0, query, best, std::numeric_limits<std::size_t>::max());
    return best;
  }

  /// Nearest point other than `exclude` (typically the query's own index).
  Neighbor nearest_excluding(const Point3& query, std::size_t exclude) const {
    if (points_.size() < 2) throw Error(ErrorCode::InsufficientPoints, "need at least two indexed points");
    Neighbor best;
    search_nearest(0, query, best, exclude);
    return best;
  }

  /// Up to k nearest points sorted nearest first.
  std::vector<Neighbor> knn(const Point3& query, std::size_t k,
                            std::optional<std::size_t> exclude = std::nullopt) const {
    std::vector<Neighbor> heap;
    if (k == 0 || points_.empty()) return heap;
    heap.reserve(k + 1);
    search_knn(0, query, k, exclude.value_or(std::numeric_limits<std::size_t>::max()), heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::size_t begin = 0, end = 0;  // range into order_
    std::size_t left = 0, right = 0;
    int axis = -1;                   // -1 marks a leaf
    double split = 0.0;
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return id;

    Point3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       return points_[a][axis] < points_[b][axis] ||
                              (points_[a][axis] == points_[b][axis] && a < b);
                     });
    const double split = points_[order_[mid]][axis];
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search_nearest(std::size_t node_id, const Point3& q, Neighbor& best, std::size_t exclude) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        if (idx == exclude) continue;
        const Neighbor cand{idx, squared_distance(q, points_[idx])};
        if (cand < best) best = cand;
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::size_t first = diff < 0.0 ? node.left : node.right;
    const std::size_t second = diff < 0.0 ? node.right : node.left;
    search_nearest(first, q, best, exclude);
    // Points on the split plane may sit on either side, so ties must be explored.
    if (diff * diff <= best.sq_dist) search_nearest(second, q, best, exclude);
  }

  void search_knn(std::size_t node_id, const Point3& q, std::size_t k, std::size_t exclude,
                  std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        if (idx == exclude) continue;
        const Neighbor cand{idx, squared_distance(q, points_[idx])};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::size_t first = diff < 0.0 ? node.left : node.right;
    const std::size_t second = diff < 0.0 ? node.right : node.left;
    search_knn(first, q, k, exclude, heap);
    if (heap.size() < k || diff * diff <= heap.front().sq_dist) search_knn(second, q, k, exclude, heap);
  }

  PointCloud points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace flowreg
