#include "dgcn/kernels.hpp"

#include <cmath>
#include <string>

#include "dgcn/error.hpp"

namespace dgcn {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kSqrt5 = 2.23606797749979;

void check_theta_block(const KernelSet& set, const Matrix& x, const Matrix& theta, const char* what) {
  if (theta.rows() != x.rows() || theta.cols() != x.cols() * static_cast<Eigen::Index>(set.size())) {
    throw DimensionMismatch(std::string("cov_matrix: ") + what + " theta block is " + std::to_string(theta.rows()) +
                            "x" + std::to_string(theta.cols()) + ", expected " + std::to_string(x.rows()) + "x" +
                            std::to_string(x.cols() * static_cast<Eigen::Index>(set.size())));
  }
}

}  // namespace

std::string_view kernel_name(KernelId id) {
  switch (id) {
    case KernelId::SquaredExp:
      return "squared_exp";
    case KernelId::AbsExp:
      return "abs_exp";
    case KernelId::Matern32:
      return "matern32";
    case KernelId::Matern52:
      return "matern52";
    case KernelId::RationalQuadratic:
      return "rational_quadratic";
  }
  return "unknown";
}

KernelId kernel_from_name(std::string_view name) {
  for (KernelId id : {KernelId::SquaredExp, KernelId::AbsExp, KernelId::Matern32, KernelId::Matern52,
                      KernelId::RationalQuadratic}) {
    if (kernel_name(id) == name) return id;
  }
  throw InvalidArgument("unknown kernel '" + std::string(name) + "'");
}

KernelSet::KernelSet()
    : kernels_{KernelId::SquaredExp, KernelId::AbsExp, KernelId::Matern32, KernelId::Matern52,
               KernelId::RationalQuadratic} {}

KernelSet::KernelSet(std::vector<KernelId> kernels) : kernels_(std::move(kernels)) {
  if (kernels_.empty()) throw InvalidArgument("kernel set must not be empty");
}

double kernel_value(KernelId id, double d) {
  switch (id) {
    case KernelId::SquaredExp:
      return std::exp(-0.5 * d * d);
    case KernelId::AbsExp:
      return std::exp(-d);
    case KernelId::Matern32:
      return (1.0 + kSqrt3 * d) * std::exp(-kSqrt3 * d);
    case KernelId::Matern52:
      return (1.0 + kSqrt5 * d + (5.0 / 3.0) * d * d) * std::exp(-kSqrt5 * d);
    case KernelId::RationalQuadratic: {
      const double base = 1.0 + 0.25 * d;
      return 1.0 / (base * base);
    }
  }
  return 0.0;
}

double kernel_deriv(KernelId id, double d) {
  if (d == 0.0) return 0.0;
  switch (id) {
    case KernelId::SquaredExp:
      return -d * std::exp(-0.5 * d * d);
    case KernelId::AbsExp:
      return -std::exp(-d);
    case KernelId::Matern32:
      return -3.0 * d * std::exp(-kSqrt3 * d);
    case KernelId::Matern52:
      // d/dd of (1 + a d + b d^2) e^{-a d} with a = sqrt5, b = 5/3
      return -(5.0 / 3.0) * d * (1.0 + kSqrt5 * d) * std::exp(-kSqrt5 * d);
    case KernelId::RationalQuadratic: {
      const double base = 1.0 + 0.25 * d;
      return -0.5 / (base * base * base);
    }
  }
  return 0.0;
}

Matrix scale_points(const Matrix& x, const Matrix& theta) {
  if (x.rows() != theta.rows() || x.cols() != theta.cols()) {
    throw DimensionMismatch("scale_points: x is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                            ", theta is " + std::to_string(theta.rows()) + "x" + std::to_string(theta.cols()));
  }
  return x.cwiseProduct(theta);
}

Matrix pairwise_distances(const Matrix& za, const Matrix& zb) {
  if (za.cols() != zb.cols()) throw DimensionMismatch("pairwise_distances: column mismatch");
  const Eigen::Index na = za.rows();
  const Eigen::Index nb = zb.rows();
  const Eigen::Index nv = za.cols();
  Matrix d(na, nb);
  for (Eigen::Index p = 0; p < na; ++p) {
    const double* zp = za.row(p).data();
    for (Eigen::Index q = 0; q < nb; ++q) {
      const double* zq = zb.row(q).data();
      double sq = 0.0;
      for (Eigen::Index v = 0; v < nv; ++v) {
        const double diff = zp[v] - zq[v];
        sq += diff * diff;
      }
      d(p, q) = std::sqrt(sq);
    }
  }
  return d;
}

Matrix cov_matrix(const KernelSet& set, const Matrix& xa, const Matrix& xb, const Matrix& theta_a,
                  const Matrix& theta_b) {
  if (xa.cols() != xb.cols()) throw DimensionMismatch("cov_matrix: point sets differ in dimension");
  check_theta_block(set, xa, theta_a, "first");
  check_theta_block(set, xb, theta_b, "second");

  const Eigen::Index nv = xa.cols();
  const bool same = (&xa == &xb) && (&theta_a == &theta_b);
  Matrix k = Matrix::Zero(xa.rows(), xb.rows());

  for (std::size_t i = 0; i < set.size(); ++i) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(i) * nv;
    const Matrix za = scale_points(xa, theta_a.middleCols(c0, nv));
    if (same) {
      const Matrix d = pairwise_distances(za, za);
      for (Eigen::Index p = 0; p < k.rows(); ++p) {
        k(p, p) += 1.0;
        for (Eigen::Index q = p + 1; q < k.cols(); ++q) {
          const double value = kernel_value(set[i], d(p, q));
          k(p, q) += value;
          k(q, p) += value;
        }
      }
    } else {
      const Matrix zb = scale_points(xb, theta_b.middleCols(c0, nv));
      const Matrix d = pairwise_distances(za, zb);
      for (Eigen::Index p = 0; p < k.rows(); ++p) {
        for (Eigen::Index q = 0; q < k.cols(); ++q) k(p, q) += kernel_value(set[i], d(p, q));
      }
    }
  }
  return k;
}

}  // namespace dgcn
