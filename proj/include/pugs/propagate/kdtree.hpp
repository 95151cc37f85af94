#pragma once

#include "pugs/core/types.hpp"

#include <vector>

namespace pugs::propagation {

/// Static 3D kd-tree answering exact nearest-neighbor queries; ties go to the lowest point index.
class KdTree {
public:
  explicit KdTree(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  /// Index of the nearest point. Requires a non-empty tree.
  std::size_t nearest(const Vec3& query) const;

private:
  struct Node {
    std::size_t point;
    int axis;
    int left = -1;
    int right = -1;
  };

  int build(std::vector<std::size_t>& order, std::size_t begin, std::size_t end, int depth);
  void search(int node, const Vec3& q, std::size_t& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace pugs::propagation
