#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace dgcn {

// Dense row-major storage for every covariance, design and weight matrix.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Lower Cholesky factor of A + jitter_used * I.
struct CholeskyFactor {
  Matrix lower;
  double jitter_used = 0.0;

  Eigen::Index size() const { return lower.rows(); }
};

// 0, 1e-8, 1e-7, ..., 1e-2
const std::vector<double>& default_jitter_ladder();

/// Factorizes a symmetric matrix, walking up the jitter ladder until the
/// factorization succeeds. The ladder must be strictly increasing.
///
/// Throws NotPositiveDefinite when the top rung still fails, DimensionMismatch
/// for a non-square input and InvalidArgument for an asymmetric one.
CholeskyFactor cholesky_jittered(const Matrix& a,
                                 std::span<const double> jitter_ladder = default_jitter_ladder());

// (L L^T) X = B by forward then backward substitution.
Matrix solve_spd(const CholeskyFactor& factor, const Matrix& b);
Vector solve_spd(const CholeskyFactor& factor, const Vector& b);

// L^{-1} B; used for predictive variances.
Matrix solve_lower(const CholeskyFactor& factor, const Matrix& b);

// (L L^T)^{-1}, needed by the likelihood gradient.
Matrix spd_inverse(const CholeskyFactor& factor);

double logdet(const CholeskyFactor& factor);

double max_abs(const Matrix& m);
bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

}  // namespace dgcn
