#include "tactex/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace tactex {

KdTree::KdTree(std::span<const Point3> points, std::size_t leaf_size)
    : points_(points.begin(), points.end()), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
    build(0, points_.size(), 0);
  }
}

int KdTree::build(std::size_t begin, std::size_t end, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{});
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= leaf_size_) return id;

  // split along the axis of largest extent
  Eigen::Vector3d lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as leaf
  (void)depth;

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::nearest_rec(int node, const Point3& q, Neighbor& best, double& best_sq) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      const std::size_t idx = order_[i];
      const double d = squared_distance(q, points_[idx]);
      if (d < best_sq || (d == best_sq && idx < best.index)) {
        best_sq = d;
        best.index = idx;
      }
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const int first = diff < 0 ? n.left : n.right;
  const int second = diff < 0 ? n.right : n.left;
  nearest_rec(first, q, best, best_sq);
  if (diff * diff <= best_sq) nearest_rec(second, q, best, best_sq);
}

KdTree::Neighbor KdTree::nearest(const Point3& q) const {
  if (points_.empty()) return {std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
  Neighbor best{std::numeric_limits<std::size_t>::max(), 0.0};
  double best_sq = std::numeric_limits<double>::infinity();
  nearest_rec(0, q, best, best_sq);
  best.distance = std::sqrt(best_sq);
  return best;
}

void KdTree::knn_rec(int node, const Point3& q, std::size_t k,
                     std::vector<std::pair<double, std::size_t>>& heap) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      const std::size_t idx = order_[i];
      const std::pair<double, std::size_t> cand{squared_distance(q, points_[idx]), idx};
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
  const double diff = q[n.axis] - n.split;
  const int first = diff < 0 ? n.left : n.right;
  const int second = diff < 0 ? n.right : n.left;
  knn_rec(first, q, k, heap);
  if (heap.size() < k || diff * diff <= heap.front().first) knn_rec(second, q, k, heap);
}

std::vector<KdTree::Neighbor> KdTree::knn(const Point3& q, std::size_t k) const {
  std::vector<Neighbor> out;
  if (points_.empty() || k == 0) return out;
  std::vector<std::pair<double, std::size_t>> heap;
  heap.reserve(k + 1);
  knn_rec(0, q, k, heap);
  std::sort_heap(heap.begin(), heap.end());
  out.reserve(heap.size());
  for (const auto& [d2, idx] : heap) out.push_back({idx, std::sqrt(d2)});
  return out;
}

std::vector<double> coverage_distances(std::span<const Point3> queries, const KdTree& measured) {
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(measured.nearest(q).distance);
  return out;
}

}  // namespace tactex
