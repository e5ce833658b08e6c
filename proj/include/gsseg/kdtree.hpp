#pragma once

#include "gsseg/types.hpp"

#include <span>
#include <vector>

namespace gsseg {

/// Static 3D kd-tree over a point set for exact k-nearest-neighbor queries.
///
/// Neighbors are ordered by (squared distance, index), so ties resolve toward the
/// lowest index and results match an exhaustive scan exactly.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points, int leaf_size = 16);

  std::size_t size() const { return points_.size(); }

  /// The k nearest points to `query`, skipping index `exclude` (pass -1 to keep all).
  std::vector<int> knn(const Vec3& query, int k, int exclude = -1) const;

  /// Same as knn, also returning the squared distances.
  void knn(const Vec3& query, int k, int exclude, std::vector<int>& indices,
           std::vector<double>& sq_distances) const;

 private:
  struct Node {
    int begin = 0;
    int end = 0;
    int left = -1;
    int right = -1;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
  };

  int build(int begin, int end);

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int leaf_size_;
};

/// Squared Euclidean distance evaluated in a fixed operation order.
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace gsseg
