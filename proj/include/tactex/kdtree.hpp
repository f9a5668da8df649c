#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "tactex/geometry.hpp"

namespace tactex {

/// Exact k-d tree over a fixed point set. Read-only after construction, so
/// concurrent queries are safe.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index;
    double distance;
  };

  KdTree() = default;
  explicit KdTree(std::span<const Point3> points, std::size_t leaf_size = 8);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  /// Nearest stored point. Distance is computed exactly as
  /// sqrt(dx*dx + dy*dy + dz*dz), matching a brute-force scan bit for bit.
  Neighbor nearest(const Point3& q) const;

  /// k nearest points, ascending by distance (ties by index).
  std::vector<Neighbor> knn(const Point3& q, std::size_t k) const;

  const Point3& point(std::size_t i) const { return points_[i]; }

 private:
  struct Node {
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::size_t begin = 0, end = 0;  // range into order_ (leaves)
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end, int depth);
  void nearest_rec(int node, const Point3& q, Neighbor& best, double& best_sq) const;
  void knn_rec(int node, const Point3& q, std::size_t k,
               std::vector<std::pair<double, std::size_t>>& heap) const;

  std::vector<Point3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_ = 8;
};

/// Squared distance in the evaluation order shared by KdTree and the
/// brute-force paths.
inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// Coverage distance of every query point against one index.
std::vector<double> coverage_distances(std::span<const Point3> queries, const KdTree& measured);

}  // namespace tactex
