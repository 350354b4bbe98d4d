#include "dgcn/neighbors.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <string>
#include <utility>

#include "dgcn/error.hpp"

namespace dgcn {

namespace {

constexpr std::size_t kLeafSize = 16;

// (squared distance, index); lexicographic order is the result order.
using Candidate = std::pair<double, std::size_t>;

double squared_distance(const Matrix& points, std::size_t row, std::span<const double> x) {
  const double* p = points.row(static_cast<Eigen::Index>(row)).data();
  double sum = 0.0;
  for (std::size_t v = 0; v < x.size(); ++v) {
    const double diff = p[v] - x[v];
    sum += diff * diff;
  }
  return sum;
}

}  // namespace

std::string_view strategy_name(NeighborStrategy s) {
  return s == NeighborStrategy::KdTree ? "kd_tree" : "brute_force";
}

NeighborStrategy strategy_from_name(std::string_view name) {
  if (name == "brute_force") return NeighborStrategy::BruteForce;
  if (name == "kd_tree") return NeighborStrategy::KdTree;
  throw InvalidArgument("unknown neighbor strategy '" + std::string(name) + "'");
}

NeighborIndex::NeighborIndex(Matrix points, NeighborStrategy strategy)
    : points_(std::move(points)), strategy_(strategy) {
  if (points_.rows() == 0) throw EmptyDataset("neighbor index needs at least one point");
  order_.resize(size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (strategy_ == NeighborStrategy::KdTree) build(0, order_.size());
}

int NeighborIndex::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  Eigen::Index axis = 0;
  double widest = -1.0;
  for (Eigen::Index a = 0; a < points_.cols(); ++a) {
    double lo = points_(static_cast<Eigen::Index>(order_[begin]), a);
    double hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = points_(static_cast<Eigen::Index>(order_[i]), a);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > widest) {
      widest = hi - lo;
      axis = a;
    }
  }
  if (widest <= 0.0) return id;  // all points coincide

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                     return points_(static_cast<Eigen::Index>(a), axis) < points_(static_cast<Eigen::Index>(b), axis);
                   });
  const double split = points_(static_cast<Eigen::Index>(order_[mid]), axis);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[static_cast<std::size_t>(id)].axis = axis;
  nodes_[static_cast<std::size_t>(id)].split = split;
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

std::vector<std::size_t> NeighborIndex::query(std::span<const double> x, std::size_t k) const {
  if (x.size() != dims()) {
    throw DimensionMismatch("neighbor query has " + std::to_string(x.size()) + " coordinates, index has " +
                            std::to_string(dims()));
  }
  if (k == 0) throw InvalidArgument("neighbor query needs k >= 1");
  k = std::min(k, size());

  std::vector<Candidate> best;
  if (strategy_ == NeighborStrategy::BruteForce) {
    best.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) best.emplace_back(squared_distance(points_, i, x), i);
    std::partial_sort(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(k), best.end());
    best.resize(k);
  } else {
    // Max-heap of the k best so far; the top is the current worst.
    std::priority_queue<Candidate> heap;
    auto offer = [&](const Candidate& c) {
      if (heap.size() < k) {
        heap.push(c);
      } else if (c < heap.top()) {
        heap.pop();
        heap.push(c);
      }
    };
    // Depth-first with the near child explored first; the far child is kept
    // whenever the splitting plane is no farther than the current worst.
    auto visit = [&](auto&& self, int node_id) -> void {
      const Node& node = nodes_[static_cast<std::size_t>(node_id)];
      if (node.axis < 0) {
        for (std::size_t i = node.begin; i < node.end; ++i) offer({squared_distance(points_, order_[i], x), order_[i]});
        return;
      }
      const double diff = x[static_cast<std::size_t>(node.axis)] - node.split;
      const int near = diff < 0.0 ? node.left : node.right;
      const int far = diff < 0.0 ? node.right : node.left;
      self(self, near);
      if (heap.size() < k || diff * diff <= heap.top().first) self(self, far);
    };
    visit(visit, 0);
    best.resize(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
      best[i] = heap.top();
      heap.pop();
    }
  }

  std::vector<std::size_t> out;
  out.reserve(best.size());
  for (const auto& c : best) out.push_back(c.second);
  return out;
}

NeighborIndex build_index(Matrix points, NeighborStrategy strategy) {
  return NeighborIndex(std::move(points), strategy);
}

}  // namespace dgcn
