#include "dgcn/linalg.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "dgcn/error.hpp"

namespace dgcn {

namespace {

// Column-major copy for Eigen's blocked LLT; the row-major path is slower.
using ColMatrix = Eigen::MatrixXd;

bool try_factor(const ColMatrix& a, double jitter, Matrix& lower) {
  ColMatrix shifted = a;
  if (jitter > 0.0) shifted.diagonal().array() += jitter;
  Eigen::LLT<ColMatrix, Eigen::Lower> llt(shifted);
  if (llt.info() != Eigen::Success) return false;
  ColMatrix l = llt.matrixL();
  const auto diag = l.diagonal();
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    if (!(diag[i] > 0.0) || !std::isfinite(diag[i])) return false;
  }
  lower = l;
  return true;
}

}  // namespace

const std::vector<double>& default_jitter_ladder() {
  static const std::vector<double> ladder = {0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2};
  return ladder;
}

CholeskyFactor cholesky_jittered(const Matrix& a, std::span<const double> jitter_ladder) {
  if (a.rows() != a.cols()) {
    throw DimensionMismatch("cholesky_jittered: matrix is " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()));
  }
  if (jitter_ladder.empty()) throw InvalidArgument("cholesky_jittered: empty jitter ladder");
  for (std::size_t i = 1; i < jitter_ladder.size(); ++i) {
    if (!(jitter_ladder[i] > jitter_ladder[i - 1])) {
      throw InvalidArgument("cholesky_jittered: jitter ladder must be strictly increasing");
    }
  }
  if (!all_finite(a)) throw NotPositiveDefinite("cholesky_jittered: matrix has non-finite entries");

  const double scale = std::max(1.0, max_abs(a));
  if (a.size() > 0 && (a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidArgument("cholesky_jittered: matrix is not symmetric");
  }

  CholeskyFactor factor;
  if (a.rows() == 0) return factor;

  const ColMatrix col = a;
  for (double jitter : jitter_ladder) {
    if (try_factor(col, jitter, factor.lower)) {
      factor.jitter_used = jitter;
      return factor;
    }
  }
  throw NotPositiveDefinite("cholesky_jittered: factorization failed with jitter " +
                            std::to_string(jitter_ladder.back()));
}

Matrix solve_spd(const CholeskyFactor& factor, const Matrix& b) {
  if (factor.size() != b.rows()) {
    throw DimensionMismatch("solve_spd: factor side " + std::to_string(factor.size()) + " vs rhs rows " +
                            std::to_string(b.rows()));
  }
  ColMatrix x = b;
  factor.lower.triangularView<Eigen::Lower>().solveInPlace(x);
  factor.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

Vector solve_spd(const CholeskyFactor& factor, const Vector& b) {
  if (factor.size() != b.size()) {
    throw DimensionMismatch("solve_spd: factor side " + std::to_string(factor.size()) + " vs rhs size " +
                            std::to_string(b.size()));
  }
  Vector x = b;
  factor.lower.triangularView<Eigen::Lower>().solveInPlace(x);
  factor.lower.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

Matrix solve_lower(const CholeskyFactor& factor, const Matrix& b) {
  if (factor.size() != b.rows()) throw DimensionMismatch("solve_lower: shape mismatch");
  ColMatrix x = b;
  factor.lower.triangularView<Eigen::Lower>().solveInPlace(x);
  return x;
}

Matrix spd_inverse(const CholeskyFactor& factor) {
  const Eigen::Index n = factor.size();
  // inv(L L^T) = L^{-T} L^{-1}
  ColMatrix linv = ColMatrix::Identity(n, n);
  factor.lower.triangularView<Eigen::Lower>().solveInPlace(linv);
  Matrix inv(n, n);
  inv.noalias() = linv.transpose() * linv;
  // Exact symmetry; the product is symmetric only up to round-off.
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) inv(j, i) = inv(i, j);
  }
  return inv;
}

double logdet(const CholeskyFactor& factor) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < factor.size(); ++i) sum += std::log(factor.lower(i, i));
  return 2.0 * sum;
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

bool all_finite(const Matrix& m) { return m.allFinite(); }

bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace dgcn
