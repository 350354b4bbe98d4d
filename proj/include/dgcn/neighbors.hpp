#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "dgcn/linalg.hpp"

namespace dgcn {

enum class NeighborStrategy { BruteForce, KdTree };

std::string_view strategy_name(NeighborStrategy s);
NeighborStrategy strategy_from_name(std::string_view name);

// Exact k-nearest-neighbor lookup over Euclidean distance. Results are
// ordered by ascending distance, ties broken by ascending point index, and
// both strategies return identical lists.
class NeighborIndex {
 public:
  NeighborIndex() = default;
  NeighborIndex(Matrix points, NeighborStrategy strategy);

  std::vector<std::size_t> query(std::span<const double> x, std::size_t k) const;

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(points_.cols()); }
  NeighborStrategy strategy() const { return strategy_; }
  const Matrix& points() const { return points_; }

 private:
  struct Node {
    std::size_t begin = 0;  // range into order_
    std::size_t end = 0;
    Eigen::Index axis = -1;  // -1 for a leaf
    double split = 0.0;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t begin, std::size_t end);

  Matrix points_;
  NeighborStrategy strategy_ = NeighborStrategy::BruteForce;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

// Throws EmptyDataset for zero points.
NeighborIndex build_index(Matrix points, NeighborStrategy strategy = NeighborStrategy::BruteForce);

}  // namespace dgcn
