#pragma once

// Fixtures and independent reference implementations shared by the unit
// tests and the acceptance runner.

#include <Eigen/Dense>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dgcn/gp.hpp"
#include "dgcn/hypernet.hpp"
#include "dgcn/kernels.hpp"
#include "dgcn/trainer.hpp"

namespace dgcn::testing {

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline Vector random_vector(Rng& rng, Eigen::Index n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

// B B^T + n I: comfortably positive definite.
inline Matrix random_spd(Rng& rng, Eigen::Index n) {
  const Matrix b = random_matrix(rng, n, n);
  Matrix a = b * b.transpose();
  a.diagonal().array() += static_cast<double>(n);
  return a;
}

// Textbook kernel evaluation, written out independently of the library.
inline double ref_kernel(KernelId id, double d) {
  const double s3 = std::sqrt(3.0);
  const double s5 = std::sqrt(5.0);
  switch (id) {
    case KernelId::SquaredExp:
      return std::exp(-0.5 * d * d);
    case KernelId::AbsExp:
      return std::exp(-d);
    case KernelId::Matern32:
      return (1.0 + s3 * d) * std::exp(-s3 * d);
    case KernelId::Matern52:
      return (1.0 + s5 * d + 5.0 / 3.0 * d * d) * std::exp(-s5 * d);
    case KernelId::RationalQuadratic:
      return 1.0 / ((1.0 + 0.25 * d) * (1.0 + 0.25 * d));
  }
  return 0.0;
}

inline const std::vector<KernelId>& all_kernels() {
  static const std::vector<KernelId> ids{KernelId::SquaredExp, KernelId::AbsExp, KernelId::Matern32,
                                         KernelId::Matern52, KernelId::RationalQuadratic};
  return ids;
}

/// Stationary GP with one length-scale vector per kernel (theta_k, n_v
/// entries each) and a constant noise variance, evaluated with explicit
/// loops, a dense inverse and a determinant.
struct StationaryOracle {
  std::vector<KernelId> kernels;
  std::vector<Eigen::VectorXd> theta;
  double sigma2 = 0.0;

  double k(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      const double d = (theta[i].cwiseProduct(a) - theta[i].cwiseProduct(b)).norm();
      sum += ref_kernel(kernels[i], d);
    }
    return sum;
  }

  Eigen::MatrixXd gram(const Eigen::MatrixXd& xa, const Eigen::MatrixXd& xb) const {
    Eigen::MatrixXd g(xa.rows(), xb.rows());
    for (Eigen::Index p = 0; p < xa.rows(); ++p) {
      for (Eigen::Index q = 0; q < xb.rows(); ++q) g(p, q) = k(xa.row(p).transpose(), xb.row(q).transpose());
    }
    return g;
  }

  double nll(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const {
    Eigen::MatrixXd c = gram(x, x);
    c.diagonal().array() += sigma2;
    const Eigen::MatrixXd inv = c.inverse();
    const double n = static_cast<double>(y.size());
    return 0.5 * y.dot(inv * y) + 0.5 * std::log(c.determinant()) + 0.5 * n * std::log(2.0 * std::numbers::pi);
  }

  // Posterior mean and latent variance at the rows of xs.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> predict(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                                      const Eigen::MatrixXd& xs) const {
    Eigen::MatrixXd c = gram(x, x);
    c.diagonal().array() += sigma2;
    const Eigen::MatrixXd inv = c.inverse();
    const Eigen::MatrixXd ks = gram(x, xs);
    const Eigen::VectorXd mean = ks.transpose() * inv * y;
    Eigen::VectorXd var(xs.rows());
    for (Eigen::Index j = 0; j < xs.rows(); ++j) {
      var[j] = k(xs.row(j).transpose(), xs.row(j).transpose()) - ks.col(j).dot(inv * ks.col(j));
    }
    return {mean, var};
  }
};

// Theta layout expected by the library: kernel blocks of n_v columns.
inline HyperField constant_field(const StationaryOracle& o, Eigen::Index n) {
  const auto n_v = o.theta.front().size();
  HyperField h;
  h.theta.resize(n, n_v * static_cast<Eigen::Index>(o.kernels.size()));
  for (std::size_t i = 0; i < o.kernels.size(); ++i) {
    for (Eigen::Index r = 0; r < n; ++r) {
      h.theta.block(r, static_cast<Eigen::Index>(i) * n_v, 1, n_v) = o.theta[i].transpose();
    }
  }
  h.sigma2 = Vector::Constant(n, o.sigma2);
  return h;
}

inline Network make_network(std::vector<LayerSpec> layers, Rng& rng) {
  Network net;
  net.params = init_params(layers, rng);
  net.layers = std::move(layers);
  net.optimizer = OptimizerState::for_params(net.params);
  return net;
}

// Small Theta-net and sigma-net pair shaped like the trainer's, with the
// trainer's output conventions (offset for theta, floor for sigma2).
struct NetPair {
  Network theta;
  Network sigma;
  double theta_offset = 1.0;

  NetPair(std::size_t n_v, std::size_t n_k, Rng& rng, std::size_t hidden = 6) {
    theta = make_network({{n_v, hidden, Activation::Sigmoid},
                          {hidden, hidden, Activation::Sigmoid},
                          {hidden, hidden, Activation::ReLU},
                          {hidden, n_v * n_k, Activation::Linear}},
                         rng);
    sigma = make_network({{n_v, hidden, Activation::Sigmoid},
                          {hidden, hidden, Activation::Sigmoid},
                          {hidden, hidden, Activation::ReLU},
                          {hidden, 1, Activation::Softplus}},
                         rng);
    // Start around sigma2 = 0.05 so the likelihood is well conditioned.
    sigma.params.biases.back()[0] = std::log(std::expm1(0.05));
  }

  HyperField forward(const Matrix& x, ForwardCache* tc, ForwardCache* sc) const {
    Rng unused(0);
    const RegularizerSpec none{0.0, 0.0};
    HyperField h;
    h.theta = mlp_forward(theta.params, theta.layers, x, none, false, unused, tc);
    h.theta.array() += theta_offset;
    h.sigma2 = mlp_forward(sigma.params, sigma.layers, x, none, false, unused, sc).col(0).array() + kSigma2Floor;
    return h;
  }

  double nll_at(const Matrix& x, const Vector& y, const KernelSet& set) const {
    return nll(GpBatch{x, y, forward(x, nullptr, nullptr)}, set);
  }
};

// Largest relative error over coordinates whose finite difference exceeds
// `floor`, comparing analytic gradients with central differences of f.
template <typename F>
double max_fd_error(MlpParams& params, const MlpParams& analytic, F&& f, double step, double floor) {
  std::vector<double> flat = params.flatten();
  const std::vector<double> grad = analytic.flatten();
  double worst = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + step;
    params.assign_flat(flat);
    const double up = f();
    flat[i] = saved - step;
    params.assign_flat(flat);
    const double down = f();
    flat[i] = saved;
    params.assign_flat(flat);
    const double fd = (up - down) / (2.0 * step);
    if (std::abs(fd) > floor) worst = std::max(worst, std::abs(grad[i] - fd) / std::abs(fd));
  }
  return worst;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dgcn_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

// y = sin(3x) on N evenly spaced points of [0, 2 pi].
inline Dataset sine_fixture(std::size_t n) {
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(n), 1);
  d.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double x = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1);
    d.x(static_cast<Eigen::Index>(i), 0) = x;
    d.y[static_cast<Eigen::Index>(i)] = std::sin(3.0 * x);
  }
  d.column_names = {"x"};
  d.target_name = "y";
  return d;
}

}  // namespace dgcn::testing
