#pragma once

#include <cstddef>
#include <utility>

#include "dgcn/hypernet.hpp"
#include "dgcn/kernels.hpp"
#include "dgcn/linalg.hpp"

namespace dgcn {

inline constexpr double kSigma2Floor = 1e-6;

// Per-point hyperparameters: theta is N x (n_v * n_k), sigma2 has N entries.
struct HyperField {
  Matrix theta;
  Vector sigma2;
};

// Training points seen by one likelihood evaluation (targets standardized).
struct GpBatch {
  Matrix x;
  Vector y;
  HyperField hyper;
};

void validate_batch(const GpBatch& batch, const KernelSet& set);

// How confidence intervals are formed from the predictive variance.
//   Literal: mean +- t(1 - alpha/2, N - 1) * sqrt(var) / sqrt(N)
//   Normal:  mean +- z(1 - alpha/2) * sqrt(var)
enum class IntervalMode { Literal, Normal };

struct Prediction {
  Vector mean;
  Vector variance;
  Vector ci_low;
  Vector ci_high;
  double alpha_level = 0.05;
  // Number of negative variances clamped to zero.
  std::size_t clamped = 0;
  // Largest jitter any factorization needed.
  double max_jitter = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(mean.size()); }
  static Prediction empty(double alpha_level);
};

/// Negative log marginal likelihood of the batch under the summed kernel
///   0.5 y^T (K_s + D)^{-1} y + 0.5 log det(K_s + D) + 0.5 N log(2 pi),
/// with D = diag(sigma2). If jitter is non-null it receives the jitter used.
double nll(const GpBatch& batch, const KernelSet& set, double* jitter = nullptr);

// dNLL with respect to every per-point hyperparameter of the batch.
struct HyperGradient {
  double nll = 0.0;
  double jitter_used = 0.0;
  Matrix d_theta;   // N x (n_v * n_k)
  Vector d_sigma2;  // N
};

HyperGradient nll_hyper_grad(const GpBatch& batch, const KernelSet& set);

struct NetworkGradients {
  double nll = 0.0;
  double jitter_used = 0.0;
  MlpParams theta_net;
  MlpParams sigma_net;
};

/// Full chain from the likelihood into both networks. The caches must be the
/// forward passes that produced batch.hyper (theta = output + offset,
/// sigma2 = output + floor, both with unit derivative).
NetworkGradients nll_grad(const GpBatch& batch, const KernelSet& set, const Network& theta_net,
                          const ForwardCache& theta_cache, const Network& sigma_net, const ForwardCache& sigma_cache);

/// GP posterior at xstar. Variance is the diagonal of the posterior
/// covariance, clamped at zero; include_noise adds sigma2(x*).
Prediction predict(const GpBatch& train, const Matrix& xstar, const HyperField& hyper_star, const KernelSet& set,
                   double alpha_level, bool include_noise, IntervalMode mode = IntervalMode::Literal);

// Student-t quantile at probability p with df degrees of freedom.
double student_t_quantile(double p, double df);

// Interval around a single prediction. Literal mode needs n_train >= 2;
// throws InvalidAlpha unless 0 < alpha_level < 1.
std::pair<double, double> confidence_interval(double mean, double variance, std::size_t n_train, double alpha_level,
                                              IntervalMode mode = IntervalMode::Literal);

}  // namespace dgcn
