#include "gsseg/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <utility>

namespace gsseg {
namespace {

struct Candidate {
  double sq_dist;
  int index;
  bool operator<(const Candidate& o) const {
    return sq_dist != o.sq_dist ? sq_dist < o.sq_dist : index < o.index;
  }
};

}  // namespace

KdTree::KdTree(std::span<const Vec3> points, int leaf_size)
    : points_(points.begin(), points.end()), order_(points.size()), leaf_size_(std::max(leaf_size, 1)) {
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
    build(0, static_cast<int>(points_.size()));
  }
}

int KdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end, -1, -1, -1, 0.0});
  if (end - begin <= leaf_size_) return id;

  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as a leaf

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];

  nodes_[id].axis = axis;
  nodes_[id].split = split;
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::knn(const Vec3& query, int k, int exclude, std::vector<int>& indices,
                 std::vector<double>& sq_distances) const {
  indices.clear();
  sq_distances.clear();
  if (k <= 0 || nodes_.empty()) return;

  // Max-heap of the best k so far; top() is the current worst.
  std::priority_queue<Candidate> best;
  const Candidate unbounded{std::numeric_limits<double>::infinity(), std::numeric_limits<int>::max()};
  auto worst = [&]() { return best.size() < static_cast<std::size_t>(k) ? unbounded : best.top(); };

  // Iterative descent with an explicit stack of (node, lower bound on squared distance).
  std::vector<std::pair<int, double>> stack;
  stack.emplace_back(0, 0.0);
  while (!stack.empty()) {
    const auto [node_id, bound] = stack.back();
    stack.pop_back();
    // Ties can still win on index, so only prune strictly farther subtrees.
    if (bound > worst().sq_dist) continue;
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = order_[i];
        if (idx == exclude) continue;
        const Candidate c{squared_distance(query, points_[idx]), idx};
        if (best.size() < static_cast<std::size_t>(k)) {
          best.push(c);
        } else if (c < best.top()) {
          best.pop();
          best.push(c);
        }
      }
      continue;
    }
    const double diff = query[node.axis] - node.split;
    const int near_child = diff < 0.0 ? node.left : node.right;
    const int far_child = diff < 0.0 ? node.right : node.left;
    stack.emplace_back(far_child, std::max(bound, diff * diff));
    stack.emplace_back(near_child, bound);
  }

  std::vector<Candidate> sorted;
  sorted.reserve(best.size());
  while (!best.empty()) {
    sorted.push_back(best.top());
    best.pop();
  }
  std::reverse(sorted.begin(), sorted.end());
  for (const Candidate& c : sorted) {
    indices.push_back(c.index);
    sq_distances.push_back(c.sq_dist);
  }
}

std::vector<int> KdTree::knn(const Vec3& query, int k, int exclude) const {
  std::vector<int> indices;
  std::vector<double> sq;
  knn(query, k, exclude, indices, sq);
  return indices;
}

}  // namespace gsseg
