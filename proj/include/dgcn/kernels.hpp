#pragma once

#include <string_view>
#include <vector>

#include "dgcn/linalg.hpp"

namespace dgcn {

/*
  Correlation functions of a scaled distance d = ||theta_p * x_p - theta_q * x_q||.
  Every kernel equals 1 at d = 0 and decays monotonically:

    SquaredExp         exp(-0.5 d^2)
    AbsExp             exp(-d)
    Matern32           (1 + sqrt(3) d) exp(-sqrt(3) d)
    Matern52           (1 + sqrt(5) d + 5/3 d^2) exp(-sqrt(5) d)
    RationalQuadratic  (1 + 0.25 d)^-2

  RationalQuadratic uses the linear distance term, not the textbook d^2 form.
  There is no signal variance: the summed covariance has diagonal n_k.
*/
enum class KernelId { SquaredExp, AbsExp, Matern32, Matern52, RationalQuadratic };

std::string_view kernel_name(KernelId id);
// Throws InvalidArgument for unknown names.
KernelId kernel_from_name(std::string_view name);

class KernelSet {
 public:
  // All five kernels in canonical order.
  KernelSet();
  explicit KernelSet(std::vector<KernelId> kernels);

  static KernelSet single(KernelId id) { return KernelSet({id}); }

  const std::vector<KernelId>& kernels() const { return kernels_; }
  std::size_t size() const { return kernels_.size(); }
  KernelId operator[](std::size_t i) const { return kernels_[i]; }

  bool operator==(const KernelSet&) const = default;

 private:
  std::vector<KernelId> kernels_;
};

double kernel_value(KernelId id, double d);
// dk/dd; defined as 0 at d = 0 for every kernel.
double kernel_deriv(KernelId id, double d);

// Row-wise elementwise warp z_i = theta_i (*) x_i.
Matrix scale_points(const Matrix& x, const Matrix& theta);

// Euclidean distances between rows of za and zb.
Matrix pairwise_distances(const Matrix& za, const Matrix& zb);

/// Summed covariance K_s between two point sets. Theta blocks hold n_v
/// columns per kernel: columns [i*n_v, (i+1)*n_v) belong to kernel i.
/// When xa/xb and theta_a/theta_b are the same objects the result is
/// exactly symmetric.
Matrix cov_matrix(const KernelSet& set, const Matrix& xa, const Matrix& xb, const Matrix& theta_a,
                  const Matrix& theta_b);

}  // namespace dgcn
