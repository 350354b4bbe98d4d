#include "dgcn/gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "dgcn/error.hpp"

namespace dgcn {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Matrix noisy_covariance(const GpBatch& batch, const KernelSet& set) {
  Matrix k = cov_matrix(set, batch.x, batch.x, batch.hyper.theta, batch.hyper.theta);
  k.diagonal() += batch.hyper.sigma2;
  return k;
}

}  // namespace

Prediction Prediction::empty(double alpha_level) {
  Prediction p;
  p.alpha_level = alpha_level;
  return p;
}

void validate_batch(const GpBatch& batch, const KernelSet& set) {
  const Eigen::Index n = batch.x.rows();
  if (n < 1) throw EmptyDataset("GP batch has no points");
  if (batch.y.size() != n) throw DimensionMismatch("GP batch: y has wrong length");
  if (batch.hyper.sigma2.size() != n) throw DimensionMismatch("GP batch: sigma2 has wrong length");
  if (batch.hyper.theta.rows() != n ||
      batch.hyper.theta.cols() != batch.x.cols() * static_cast<Eigen::Index>(set.size())) {
    throw DimensionMismatch("GP batch: theta block has wrong shape");
  }
  if (!all_finite(batch.y)) throw InvalidArgument("GP batch: non-finite target");
  if (!all_finite(batch.hyper.theta)) throw NonFiniteLoss("GP batch: non-finite length-scale");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(batch.hyper.sigma2[i] > 0.0) || !std::isfinite(batch.hyper.sigma2[i])) {
      throw NonFiniteLoss("GP batch: noise variance must be positive and finite");
    }
  }
}

double nll(const GpBatch& batch, const KernelSet& set, double* jitter) {
  validate_batch(batch, set);
  const CholeskyFactor factor = cholesky_jittered(noisy_covariance(batch, set));
  if (jitter) *jitter = factor.jitter_used;
  const Vector alpha = solve_spd(factor, batch.y);
  const double n = static_cast<double>(batch.y.size());
  return 0.5 * batch.y.dot(alpha) + 0.5 * logdet(factor) + n * kHalfLog2Pi;
}

HyperGradient nll_hyper_grad(const GpBatch& batch, const KernelSet& set) {
  validate_batch(batch, set);
  const Eigen::Index n = batch.x.rows();
  const Eigen::Index nv = batch.x.cols();

  const CholeskyFactor factor = cholesky_jittered(noisy_covariance(batch, set));
  const Vector alpha = solve_spd(factor, batch.y);

  HyperGradient out;
  out.jitter_used = factor.jitter_used;
  out.nll = 0.5 * batch.y.dot(alpha) + 0.5 * logdet(factor) + static_cast<double>(n) * kHalfLog2Pi;

  // dNLL/dK = 0.5 (K^{-1} - alpha alpha^T)
  Matrix g = spd_inverse(factor);
  g.noalias() -= alpha * alpha.transpose();
  g *= 0.5;

  out.d_sigma2 = g.diagonal();
  out.d_theta = Matrix::Zero(n, nv * static_cast<Eigen::Index>(set.size()));

  Matrix c(n, n);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(i) * nv;
    const Matrix z = scale_points(batch.x, batch.hyper.theta.middleCols(c0, nv));
    const Matrix d = pairwise_distances(z, z);
    // c_pq = 2 g_pq k'(d_pq) / d_pq; the pair (p, q) and (q, p) both move.
    for (Eigen::Index p = 0; p < n; ++p) {
      c(p, p) = 0.0;
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double dist = d(p, q);
        const double value = dist > 0.0 ? 2.0 * g(p, q) * kernel_deriv(set[i], dist) / dist : 0.0;
        c(p, q) = value;
        c(q, p) = value;
      }
    }
    // d/dtheta_pv = x_pv * sum_q c_pq (z_pv - z_qv)
    const Vector row_sum = c.rowwise().sum();
    const Matrix cz = c * z;
    auto block = out.d_theta.middleCols(c0, nv);
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index v = 0; v < nv; ++v) {
        block(p, v) = batch.x(p, v) * (z(p, v) * row_sum[p] - cz(p, v));
      }
    }
  }
  return out;
}

NetworkGradients nll_grad(const GpBatch& batch, const KernelSet& set, const Network& theta_net,
                          const ForwardCache& theta_cache, const Network& sigma_net, const ForwardCache& sigma_cache) {
  const HyperGradient hg = nll_hyper_grad(batch, set);
  NetworkGradients out;
  out.nll = hg.nll;
  out.jitter_used = hg.jitter_used;
  out.theta_net = mlp_backward(theta_net.params, theta_net.layers, theta_cache, hg.d_theta).params;
  const Matrix upstream_sigma = hg.d_sigma2;
  out.sigma_net = mlp_backward(sigma_net.params, sigma_net.layers, sigma_cache, upstream_sigma).params;
  return out;
}

double student_t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidAlpha("quantile level must lie in (0, 1)");
  if (!(df > 0.0)) throw InvalidArgument("Student-t quantile needs df > 0");
  return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

std::pair<double, double> confidence_interval(double mean, double variance, std::size_t n_train, double alpha_level,
                                              IntervalMode mode) {
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) {
    throw InvalidAlpha("alpha level " + std::to_string(alpha_level) + " is outside (0, 1)");
  }
  if (variance < 0.0) throw InvalidArgument("confidence_interval: negative variance");
  double half = 0.0;
  if (mode == IntervalMode::Literal) {
    if (n_train < 2) throw InvalidArgument("confidence_interval: needs at least two training points");
    const double n = static_cast<double>(n_train);
    half = student_t_quantile(1.0 - alpha_level / 2.0, n - 1.0) * std::sqrt(variance) / std::sqrt(n);
  } else {
    const boost::math::normal_distribution<double> normal;
    half = boost::math::quantile(normal, 1.0 - alpha_level / 2.0) * std::sqrt(variance);
  }
  return {mean - half, mean + half};
}

Prediction predict(const GpBatch& train, const Matrix& xstar, const HyperField& hyper_star, const KernelSet& set,
                   double alpha_level, bool include_noise, IntervalMode mode) {
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) {
    throw InvalidAlpha("alpha level " + std::to_string(alpha_level) + " is outside (0, 1)");
  }
  validate_batch(train, set);
  const Eigen::Index m = xstar.rows();
  if (m > 0 && xstar.cols() != train.x.cols()) throw DimensionMismatch("predict: test points have wrong dimension");
  if (hyper_star.theta.rows() != m || hyper_star.sigma2.size() != m) {
    throw DimensionMismatch("predict: hyperparameters do not match test points");
  }
  Prediction out = Prediction::empty(alpha_level);
  if (m == 0) return out;

  const CholeskyFactor factor = cholesky_jittered(noisy_covariance(train, set));
  out.max_jitter = factor.jitter_used;
  const Vector alpha = solve_spd(factor, train.y);

  const Matrix k_star = cov_matrix(set, train.x, xstar, train.hyper.theta, hyper_star.theta);  // N x M
  out.mean = k_star.transpose() * alpha;

  const Matrix v = solve_lower(factor, k_star);
  const double prior = static_cast<double>(set.size());
  out.variance.resize(m);
  out.ci_low.resize(m);
  out.ci_high.resize(m);
  const std::size_t n_train = static_cast<std::size_t>(train.x.rows());
  for (Eigen::Index j = 0; j < m; ++j) {
    double var = prior - v.col(j).squaredNorm();
    if (var < 0.0) {
      var = 0.0;
      ++out.clamped;
    }
    if (include_noise) var += hyper_star.sigma2[j];
    out.variance[j] = var;
    if (mode == IntervalMode::Literal && n_train < 2) {
      out.ci_low[j] = -std::numeric_limits<double>::infinity();
      out.ci_high[j] = std::numeric_limits<double>::infinity();
    } else {
      const auto [lo, hi] = confidence_interval(out.mean[j], var, n_train, alpha_level, mode);
      out.ci_low[j] = lo;
      out.ci_high[j] = hi;
    }
  }
  return out;
}

}  // namespace dgcn
