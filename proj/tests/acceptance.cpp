// Acceptance runner. Prints one PASS/FAIL/SKIP line per criterion.
//
//   dgcn_acceptance            all criteria
//   dgcn_acceptance 3 11       selected criteria
//
// Exit status: 1 if any selected criterion failed, 77 if every selected
// criterion was skipped for lack of data, 0 otherwise.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dgcn/bench.hpp"
#include "dgcn/config.hpp"
#include "dgcn/error.hpp"
#include "dgcn/gp.hpp"
#include "dgcn/linalg.hpp"
#include "dgcn/persistence.hpp"
#include "dgcn/timeseries.hpp"
#include "dgcn/trainer.hpp"
#include "support.hpp"

using namespace dgcn;
using dgcn::testing::all_kernels;
using dgcn::testing::constant_field;
using dgcn::testing::NetPair;
using dgcn::testing::random_matrix;
using dgcn::testing::random_vector;
using dgcn::testing::StationaryOracle;

namespace {

// Pinned tolerances and thresholds.
constexpr double kOracleTol = 1e-10;        // 1
constexpr double kGradRelTol = 1e-4;        // 2
constexpr double kGradFdFloor = 1e-8;       // 2
constexpr double kJitterCap = 1e-6;         // 3
constexpr double kPsdPassFraction = 0.99;   // 3
constexpr double kKnnTol = 1e-12;           // 4
constexpr int kNonstationaryWins = 8;       // 5, out of 10 seeds
constexpr double kBostonLo = 2.0;           // 6
constexpr double kBostonHi = 3.4;           // 6
constexpr double kConcreteCap = 5.21;       // 7
constexpr double kConcreteBandLo = 3.3;     // 7
constexpr double kConcreteBandHi = 4.8;     // 7
constexpr double kCatsCap = 1000.0;         // 8
constexpr double kBatchedRatioCap = 12.0;   // 9
constexpr double kFullBatchDoubling = 2.0;  // 9
constexpr double kCiTol = 1e-6;             // 12

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

Outcome verdict(bool ok, const std::string& detail) { return {ok ? Status::Pass : Status::Fail, detail}; }

template <typename... Args>
std::string fmt(const Args&... args) {
  std::ostringstream s;
  s << std::setprecision(4);
  (s << ... << args);
  return s.str();
}

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("DGCN_DATA_DIR")) return env;
  return DGCN_DATA_DIR;
}

std::filesystem::path data_file(const char* env_name, const char* file) {
  if (const char* env = std::getenv(env_name)) return env;
  return data_dir() / file;
}

// ---------------------------------------------------------------------------
// 1. Constant hypernetworks against a textbook stationary GP.

// Output layer weights zeroed, so every input maps to the bias.
NetPair constant_nets(const StationaryOracle& o, Eigen::Index n_v, Rng& rng) {
  NetPair nets(static_cast<std::size_t>(n_v), o.kernels.size(), rng);
  nets.theta.params.weights.back().setZero();
  for (std::size_t k = 0; k < o.kernels.size(); ++k) {
    nets.theta.params.biases.back().segment(static_cast<Eigen::Index>(k) * n_v, n_v) =
        o.theta[k].array() - nets.theta_offset;
  }
  nets.sigma.params.weights.back().setZero();
  nets.sigma.params.biases.back()[0] = std::log(std::expm1(o.sigma2 - kSigma2Floor));
  return nets;
}

Outcome stationary_oracle() {
  Rng rng(101);
  std::vector<std::vector<KernelId>> sets;
  for (KernelId id : all_kernels()) sets.push_back({id});
  sets.push_back(all_kernels());
  double worst_nll = 0.0, worst_mean = 0.0, worst_var = 0.0;
  int problems = 0;
  for (const auto& ids : sets) {
    const KernelSet set{ids};
    for (int trial = 0; trial < 50; ++trial, ++problems) {
      std::uniform_int_distribution<Eigen::Index> nd(2, 30), vd(1, 4);
      const Eigen::Index n = nd(rng), n_v = vd(rng);
      StationaryOracle o{ids, {}, std::exp(std::uniform_real_distribution<double>(std::log(1e-3), 0.0)(rng))};
      for (std::size_t k = 0; k < ids.size(); ++k) o.theta.push_back(random_vector(rng, n_v, 0.3, 2.0));
      const NetPair nets = constant_nets(o, n_v, rng);

      const Matrix x = random_matrix(rng, n, n_v, -2.0, 2.0);
      const Vector y = random_vector(rng, n, -2.0, 2.0);
      const Matrix xs = random_matrix(rng, 10, n_v, -2.5, 2.5);
      const HyperField h = nets.forward(x, nullptr, nullptr);
      const HyperField hs = nets.forward(xs, nullptr, nullptr);

      const GpBatch b{x, y, h};
      const double ours = nll(b, set);
      const double ref = o.nll(x, y);
      worst_nll = std::max(worst_nll, std::abs(ours - ref) / std::max(1.0, std::abs(ref)));

      const Prediction p = predict(b, xs, hs, set, 0.05, false);
      const auto [mean, var] = o.predict(x, y, xs);
      worst_mean = std::max(worst_mean, (p.mean - mean).cwiseAbs().maxCoeff());
      worst_var = std::max(worst_var, (p.variance - var.cwiseMax(0.0)).cwiseAbs().maxCoeff());
    }
  }
  const bool ok = worst_nll < kOracleTol && worst_mean < kOracleTol && worst_var < kOracleTol;
  return verdict(ok, fmt(problems, " problems; max |dNLL| ", worst_nll, ", |dmean| ", worst_mean, ", |dvar| ",
                         worst_var, " (tol ", kOracleTol, ")"));
}

// ---------------------------------------------------------------------------
// 2. Network gradients against central differences.
//
// Gradient entries down to 1e-8 on an NLL of order 10 are below what double
// precision differences resolve, so the difference quotients come from a
// separate long-double evaluation of networks, kernels and likelihood.

using Real = long double;
using RMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using RVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

Real ref_activation(Activation a, Real v) {
  switch (a) {
    case Activation::Sigmoid:
      return 1.0L / (1.0L + std::exp(-v));
    case Activation::ReLU:
      return v > 0.0L ? v : 0.0L;
    case Activation::Linear:
      return v;
    case Activation::Softplus:
      return v > 30.0L ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  return v;
}

RMatrix ref_forward(const std::vector<LayerSpec>& layers, const std::vector<Real>& flat, const RMatrix& x) {
  RMatrix h = x;
  std::size_t at = 0;
  for (const LayerSpec& l : layers) {
    const auto in = static_cast<Eigen::Index>(l.in_units), out = static_cast<Eigen::Index>(l.out_units);
    RMatrix w(out, in);  // row-major, as flattened
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) w(r, c) = flat[at++];
    }
    RVector b(out);
    for (Eigen::Index r = 0; r < out; ++r) b[r] = flat[at++];
    RMatrix pre = h * w.transpose();
    pre.rowwise() += b.transpose();
    h = pre.unaryExpr([&](Real v) { return ref_activation(l.activation, v); });
  }
  return h;
}

Real ref_kernel_ld(KernelId id, Real d) {
  const Real s3 = std::sqrt(3.0L), s5 = std::sqrt(5.0L);
  switch (id) {
    case KernelId::SquaredExp:
      return std::exp(-0.5L * d * d);
    case KernelId::AbsExp:
      return std::exp(-d);
    case KernelId::Matern32:
      return (1.0L + s3 * d) * std::exp(-s3 * d);
    case KernelId::Matern52:
      return (1.0L + s5 * d + 5.0L / 3.0L * d * d) * std::exp(-s5 * d);
    case KernelId::RationalQuadratic:
      return 1.0L / ((1.0L + 0.25L * d) * (1.0L + 0.25L * d));
  }
  return 0.0L;
}

struct LongDoubleNll {
  std::vector<LayerSpec> theta_layers, sigma_layers;
  std::vector<KernelId> kernels;
  RMatrix x;
  RVector y;
  Real theta_offset = 1.0L;

  Real operator()(const std::vector<Real>& theta_flat, const std::vector<Real>& sigma_flat) const {
    const Eigen::Index n = x.rows(), nv = x.cols();
    RMatrix theta = ref_forward(theta_layers, theta_flat, x).array() + theta_offset;
    RVector sigma2 = ref_forward(sigma_layers, sigma_flat, x).col(0).array() + static_cast<Real>(kSigma2Floor);
    RMatrix c = RMatrix::Zero(n, n);
    for (std::size_t k = 0; k < kernels.size(); ++k) {
      const Eigen::Index off = static_cast<Eigen::Index>(k) * nv;
      for (Eigen::Index p = 0; p < n; ++p) {
        for (Eigen::Index q = 0; q < n; ++q) {
          Real d2 = 0.0L;
          for (Eigen::Index v = 0; v < nv; ++v) {
            const Real diff = theta(p, off + v) * x(p, v) - theta(q, off + v) * x(q, v);
            d2 += diff * diff;
          }
          c(p, q) += ref_kernel_ld(kernels[k], std::sqrt(d2));
        }
      }
    }
    c.diagonal() += sigma2;
    const Eigen::LLT<RMatrix> llt(c);
    const RVector alpha = llt.solve(y);
    Real logdet = 0.0L;
    for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0L * std::log(llt.matrixL()(i, i));
    return 0.5L * y.dot(alpha) + 0.5L * logdet + 0.5L * n * std::log(2.0L * std::numbers::pi_v<Real>);
  }
};

std::vector<Real> widen(const std::vector<double>& v) { return {v.begin(), v.end()}; }

// Largest relative error of `analytic` against central differences of f
// over coordinates whose difference quotient exceeds the floor.
template <typename F>
double fd_worst(std::vector<Real> at, const std::vector<double>& analytic, F&& f) {
  const Real h = 1e-6L;
  double worst = 0.0;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const Real saved = at[i];
    at[i] = saved + h;
    const Real up = f(at);
    at[i] = saved - h;
    const Real down = f(at);
    at[i] = saved;
    const double fd = static_cast<double>((up - down) / (2.0L * h));
    if (std::abs(fd) > kGradFdFloor) worst = std::max(worst, std::abs(analytic[i] - fd) / std::abs(fd));
  }
  return worst;
}

Outcome gradient_fidelity() {
  std::vector<std::vector<KernelId>> sets;
  for (KernelId id : all_kernels()) sets.push_back({id});
  sets.push_back(all_kernels());
  double worst = 0.0, worst_value = 0.0;
  int problems = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(202, seed));
    for (const auto& ids : sets) {
      const KernelSet set{ids};
      std::uniform_int_distribution<Eigen::Index> nd(10, 12), vd(1, 3);
      const Eigen::Index n = nd(rng), n_v = vd(rng);
      const NetPair nets(static_cast<std::size_t>(n_v), ids.size(), rng);
      const Matrix x = random_matrix(rng, n, n_v);
      const Vector y = random_vector(rng, n);
      ForwardCache tc, sc;
      const HyperField h = nets.forward(x, &tc, &sc);
      const NetworkGradients g = nll_grad(GpBatch{x, y, h}, set, nets.theta, tc, nets.sigma, sc);

      const LongDoubleNll ref{nets.theta.layers, nets.sigma.layers, ids, x.cast<Real>(), y.cast<Real>(),
                              static_cast<Real>(nets.theta_offset)};
      const auto theta_at = widen(nets.theta.params.flatten());
      const auto sigma_at = widen(nets.sigma.params.flatten());
      const double base = static_cast<double>(ref(theta_at, sigma_at));
      worst_value = std::max(worst_value, std::abs(base - g.nll) / std::max(1.0, std::abs(base)));
      worst = std::max(worst, fd_worst(theta_at, g.theta_net.flatten(), [&](const auto& t) { return ref(t, sigma_at); }));
      worst = std::max(worst, fd_worst(sigma_at, g.sigma_net.flatten(), [&](const auto& s) { return ref(theta_at, s); }));
      ++problems;
    }
  }
  return verdict(worst < kGradRelTol && worst_value < 1e-10,
                 fmt(problems, " problems; max relative gradient error ", worst, " (tol ", kGradRelTol,
                     "), NLL agreement with the long-double reference ", worst_value));
}

// ---------------------------------------------------------------------------
// 3. Factorization of random non-stationary covariances.

Outcome psd_robustness() {
  Rng rng(303);
  int ok = 0, failed = 0;
  double worst_jitter = 0.0;
  const int draws = 500;
  for (int i = 0; i < draws; ++i) {
    std::uniform_int_distribution<Eigen::Index> nd(5, 60), vd(1, 6);
    const Eigen::Index n = nd(rng), n_v = vd(rng);
    const Matrix x = random_matrix(rng, n, n_v, -3.0, 3.0);
    const Matrix theta = random_matrix(rng, n, n_v * 5, 0.05, 3.0);
    Vector sigma2(n);
    std::uniform_real_distribution<double> ls(std::log(1e-6), 0.0);
    for (Eigen::Index r = 0; r < n; ++r) sigma2[r] = std::exp(ls(rng));
    Matrix c = cov_matrix(KernelSet{}, x, x, theta, theta);
    c.diagonal() += sigma2;
    try {
      const CholeskyFactor f = cholesky_jittered(c);
      worst_jitter = std::max(worst_jitter, f.jitter_used);
      if (f.jitter_used <= kJitterCap) ++ok;
    } catch (const NotPositiveDefinite&) {
      ++failed;
    }
  }
  const double frac = static_cast<double>(ok) / draws;
  return verdict(frac >= kPsdPassFraction, fmt(ok, "/", draws, " factored with jitter <= ", kJitterCap, " (",
                                               failed, " failures, max jitter ", worst_jitter, ")"));
}

// ---------------------------------------------------------------------------
// 4. k = N neighbor prediction against the full posterior.

Outcome knn_exactness() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(mix_seed(404, seed));
    std::uniform_int_distribution<Eigen::Index> nd(20, 80), vd(1, 4);
    Dataset d;
    d.x = random_matrix(rng, nd(rng), vd(rng), -2.0, 2.0);
    d.y = (d.x.rowwise().sum().array().sin() + 0.1 * random_vector(rng, d.x.rows()).array()).matrix();
    TrainConfig c;
    c.batch_size = 16;
    c.max_epochs = 3;
    c.seed = seed;
    c.theta_net.hidden = {8, 8};
    c.theta_net.activations = {Activation::Sigmoid, Activation::ReLU};
    c.sigma_net = c.theta_net;
    const TrainedModel m = fit(d, c);
    const Matrix probe = random_matrix(rng, 30, d.x.cols(), -2.5, 2.5);
    const Prediction a = predict_batched(m, probe, m.size(), 0.05, true);
    const Prediction b = predict_full(m, probe, 0.05, true);
    worst = std::max({worst, (a.mean - b.mean).cwiseAbs().maxCoeff(), (a.variance - b.variance).cwiseAbs().maxCoeff(),
                      (a.ci_low - b.ci_low).cwiseAbs().maxCoeff(), (a.ci_high - b.ci_high).cwiseAbs().maxCoeff()});
  }
  return verdict(worst < kKnnTol, fmt("20 models; max abs difference ", worst, " (tol ", kKnnTol, ")"));
}

// ---------------------------------------------------------------------------
// 5. Piecewise-frequency fixture, learned versus stationary length-scales.

Dataset piecewise(Rng& rng, std::size_t n) {
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(n), 1);
  d.y.resize(static_cast<Eigen::Index>(n));
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = u(rng);
    d.x(static_cast<Eigen::Index>(i), 0) = x;
    d.y[static_cast<Eigen::Index>(i)] =
        x < 1.0 ? std::sin(2.0 * std::numbers::pi * x) : std::sin(2.0 * std::numbers::pi * 6.0 * x);
  }
  return d;
}

TrainConfig piecewise_config(std::uint64_t seed) {
  TrainConfig c;
  c.batch_size = 90;
  c.max_epochs = 300;
  c.patience = 0;
  c.seed = seed;
  c.optimizer.learning_rate = 1e-2;
  c.theta_net.hidden = {16, 16};
  c.theta_net.activations = {Activation::Sigmoid, Activation::ReLU};
  c.sigma_net = c.theta_net;
  return c;
}

Outcome nonstationarity_win() {
  int wins = 0;
  std::ostringstream per_seed;
  per_seed << std::setprecision(3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(505, seed));
    const Dataset all = piecewise(rng, 120);
    std::vector<std::size_t> order(120);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const Dataset train = all.subset({order.begin(), order.begin() + 90});
    const Dataset test = all.subset({order.begin() + 90, order.end()});

    const TrainConfig c = piecewise_config(seed);
    const double ours = rmse(test.y, predict_full(fit(train, c), test.x, 0.05, false).mean);
    const double base = rmse(test.y, predict_stationary(fit_stationary(train, c, KernelId::SquaredExp), test.x));
    if (ours <= base) ++wins;
    per_seed << (seed ? " " : "") << ours << "/" << base;
  }
  return verdict(wins >= kNonstationaryWins,
                 fmt(wins, "/10 seeds at or below the stationary baseline (need ", kNonstationaryWins,
                     "); test RMSE ours/stationary: ", per_seed.str()));
}

// ---------------------------------------------------------------------------
// 6, 7. Benchmark datasets.

TrainConfig boston_config() {
  TrainConfig c;
  c.batch_size = 1000;  // whole training fold
  c.optimizer.learning_rate = 1e-2;
  return c;
}

TrainConfig concrete_config() {
  TrainConfig c;
  c.batch_size = 200;
  c.predict_k = 1000;
  c.optimizer.learning_rate = 1e-2;
  return c;
}

Outcome boston() {
  const auto path = data_file("DGCN_BOSTON", "boston.csv");
  if (!std::filesystem::exists(path)) return {Status::Skip, "missing " + path.string() + " (scripts/fetch_datasets.py)"};
  const Dataset d = load_csv(path.string(), "medv");
  const BenchReport r = run_protocol(d, protocol_preset("boston-raw"), boston_config());
  return verdict(r.mean >= kBostonLo && r.mean <= kBostonHi,
                 fmt(r.runs.size(), " runs; RMSE mean ", r.mean, " +- ", r.std, " (band [", kBostonLo, ", ",
                     kBostonHi, "]), ", std::setprecision(0), std::fixed, r.wall_seconds, " s"));
}

Outcome concrete() {
  const auto path = data_file("DGCN_CONCRETE", "concrete.csv");
  if (!std::filesystem::exists(path)) return {Status::Skip, "missing " + path.string() + " (scripts/fetch_datasets.py)"};
  const Dataset d = load_csv(path.string());
  const Protocol p = protocol_preset("concrete");
  const BenchReport ours = run_protocol(d, p, concrete_config());
  const BenchReport base = stationary_baseline(d, p, concrete_config());
  const bool in_band = ours.mean >= kConcreteBandLo && ours.mean <= kConcreteBandHi;
  return verdict(ours.mean <= kConcreteCap && ours.mean < base.mean && in_band,
                 fmt(ours.runs.size(), " runs; RMSE mean ", ours.mean, " +- ", ours.std, " vs stationary ", base.mean,
                     " (cap ", kConcreteCap, ", band [", kConcreteBandLo, ", ", kConcreteBandHi, "])"));
}

// ---------------------------------------------------------------------------
// 8. CATS.

Outcome cats() {
  const auto series_path = data_file("DGCN_CATS_SERIES", "cats.csv");
  const auto truth_path = data_file("DGCN_CATS_TRUTH", "cats_truth.csv");
  if (!std::filesystem::exists(series_path) || !std::filesystem::exists(truth_path)) {
    return {Status::Skip, "BLOCKED: CATS series not available (place " + series_path.string() + " and " +
                              truth_path.string() + ")"};
  }
  const std::vector<double> series = load_series(series_path.string());
  const std::vector<double> truth = load_series(truth_path.string());
  CliConfig defaults;
  std::vector<LagSpec> lags;
  for (std::size_t l : defaults.cats_lags) lags.push_back(LagSpec{l, {0}});
  const CatsResult r = cats_protocol(series, lags, defaults.train, truth);
  return verdict(r.e1 <= kCatsCap, fmt("E1 ", r.e1, " (cap ", kCatsCap, ")"));
}

// ---------------------------------------------------------------------------
// 9. Training time against data size.

Outcome timing_shape() {
  TimingOptions batched;
  batched.sizes = {3200, 25600};
  batched.batch_sizes = {200};
  batched.epochs = 100;
  const auto b = timing_benchmark(batched);

  TimingOptions full;
  full.sizes = {1600, 3200};
  full.batch_sizes = {0};
  full.epochs = 2;
  const auto f = timing_benchmark(full);

  if (b[0].skipped || b[1].skipped || f[0].skipped || f[1].skipped) {
    return {Status::Fail, "a timing row was skipped: " + b[0].reason + b[1].reason + f[0].reason + f[1].reason};
  }
  const double batched_ratio = b[1].seconds / b[0].seconds;
  const double full_ratio = f[1].sec_per_epoch / f[0].sec_per_epoch;
  return verdict(batched_ratio <= kBatchedRatioCap && full_ratio > kFullBatchDoubling,
                 fmt("N_b=200 x100 epochs: ", b[0].seconds, " s at 3200, ", b[1].seconds, " s at 25600, ratio ",
                     batched_ratio, " (cap ", kBatchedRatioCap, "); full batch per epoch: ", f[0].sec_per_epoch,
                     " s at 1600, ", f[1].sec_per_epoch, " s at 3200, ratio ", full_ratio, " (need > ",
                     kFullBatchDoubling, ")"));
}

// ---------------------------------------------------------------------------
// 10. Lag embedding table row.

Outcome lag_table() {
  const std::vector<double> s{2, 3, 1, 6, 7, 3, 9, 1};
  const LagEmbedding e = lag_embed(s, LagSpec{2, {0, 1, 2}});
  const auto row = std::find(e.times.begin(), e.times.end(), std::size_t{3}) - e.times.begin();
  if (row == static_cast<std::ptrdiff_t>(e.times.size())) return {Status::Fail, "no row for t = 3"};
  const auto r = static_cast<Eigen::Index>(row);
  const bool ok = e.inputs.row(r) == Eigen::RowVector2d(2, 3) && e.targets.row(r) == Eigen::RowVector3d(1, 6, 7);
  std::ostringstream got;
  got << "t=3 inputs (" << e.inputs(r, 0) << "," << e.inputs(r, 1) << ") outputs (" << e.targets(r, 0) << ","
      << e.targets(r, 1) << "," << e.targets(r, 2) << ")";
  return verdict(ok, got.str() + ", expected inputs (2,3) outputs (1,6,7)");
}

// ---------------------------------------------------------------------------
// 11. Persistence.

Outcome persistence() {
  Rng rng(1111);
  Dataset d;
  d.x = random_matrix(rng, 60, 3);
  d.y = (d.x.col(0).array().sin() + d.x.col(1).array() * d.x.col(2).array()).matrix();
  TrainConfig c;
  c.batch_size = 20;
  c.max_epochs = 5;
  c.theta_net.hidden = {8, 8};
  c.theta_net.activations = {Activation::Sigmoid, Activation::ReLU};
  const TrainedModel m = fit(d, c);

  const auto dir = std::filesystem::temp_directory_path() / ("dgcn_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "m.dgcn").string();
  save_model(m, path);
  const TrainedModel back = load_model(path);
  std::filesystem::remove_all(dir);

  Matrix grid(21 * 21, 3);
  for (int i = 0; i < 21; ++i) {
    for (int j = 0; j < 21; ++j) grid.row(i * 21 + j) << -2.0 + 0.2 * i, -2.0 + 0.2 * j, 0.1 * (i - j);
  }
  bool identical = true;
  for (std::size_t k : {std::size_t{0}, std::size_t{7}}) {
    const Prediction a = predict_batched(m, grid, k, 0.05, true);
    const Prediction b = predict_batched(back, grid, k, 0.05, true);
    identical = identical && a.mean == b.mean && a.variance == b.variance && a.ci_low == b.ci_low &&
                a.ci_high == b.ci_high;
  }

  const std::vector<std::uint8_t> bytes = serialize_model(m);
  int rejected = 0, attempts = 0;
  auto expect_reject = [&](std::vector<std::uint8_t> corrupt) {
    ++attempts;
    try {
      deserialize_model(corrupt);
    } catch (const Error&) {
      ++rejected;
    }
  };
  for (std::size_t at : {std::size_t{0}, std::size_t{4}, std::size_t{9}, bytes.size() / 3, bytes.size() - 1}) {
    auto flipped = bytes;
    flipped[at] ^= 0x01;
    expect_reject(flipped);
  }
  expect_reject({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2)});
  expect_reject({});
  return verdict(identical && rejected == attempts,
                 fmt(identical ? "bit-identical" : "DIFFERENT", " predictions on 441 probes; ", rejected, "/",
                     attempts, " corrupted files rejected"));
}

// ---------------------------------------------------------------------------
// 12. Interval half-width against an independent Student-t quantile.

// Regularized incomplete beta by Lentz's continued fraction.
double beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  double c = 1.0, d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m < 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + aa * d;
    d = std::abs(d) < tiny ? 1.0 / tiny : 1.0 / d;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    h *= d * c;
    aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + aa * d;
    d = std::abs(d) < tiny ? 1.0 / tiny : 1.0 / d;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h;
}

double inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                                b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double t_cdf(double t, double nu) {
  const double tail = 0.5 * inc_beta(0.5 * nu, 0.5, nu / (nu + t * t));
  return t >= 0.0 ? 1.0 - tail : tail;
}

double t_quantile_oracle(double p, double nu) {
  double lo = 0.0, hi = 1.0;
  while (t_cdf(hi, nu) < p) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (t_cdf(mid, nu) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Outcome ci_literal() {
  // Spot values of the oracle itself, from a 40-digit root solve.
  const double spot = std::max(std::abs(t_quantile_oracle(0.975, 100.0) - 1.9839715185235523),
                               std::abs(t_quantile_oracle(0.995, 4.0) - 4.604094871349993));
  if (spot > 1e-9) return {Status::Fail, fmt("quantile oracle self-check off by ", spot)};

  Rng rng(1212);
  Dataset d;
  d.x = random_matrix(rng, 40, 2);
  d.y = d.x.col(0).array().cos().matrix();
  TrainConfig c;
  c.batch_size = 40;
  c.max_epochs = 5;
  c.theta_net.hidden = {6, 6};
  c.theta_net.activations = {Activation::Sigmoid, Activation::ReLU};
  c.sigma_net = c.theta_net;
  const TrainedModel m = fit(d, c);
  const Matrix probe = random_matrix(rng, 25, 2, -1.5, 1.5);

  double worst = 0.0;
  int checked = 0;
  for (double alpha : {0.01, 0.05, 0.1, 0.32, 0.5, 0.9}) {
    for (std::size_t k : {std::size_t{2}, std::size_t{3}, std::size_t{10}, std::size_t{40}}) {
      for (bool noise : {false, true}) {
        const Prediction p = predict_batched(m, probe, k, alpha, noise);
        const double n = static_cast<double>(k);
        const double t = t_quantile_oracle(1.0 - alpha / 2.0, n - 1.0);
        for (Eigen::Index j = 0; j < probe.rows(); ++j) {
          const double half = 0.5 * (p.ci_high[j] - p.ci_low[j]);
          const double expect = t * std::sqrt(p.variance[j]) / std::sqrt(n);
          worst = std::max(worst, std::abs(half - expect));
          worst = std::max(worst, std::abs(0.5 * (p.ci_high[j] + p.ci_low[j]) - p.mean[j]));
          ++checked;
        }
      }
    }
  }
  return verdict(worst < kCiTol, fmt(checked, " intervals; max |half-width - t sqrt(V/N)| ", worst, " (tol ", kCiTol, ")"));
}

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
};

const std::map<int, Criterion>& criteria() {
  static const std::map<int, Criterion> all{
      {1, {"stationary oracle equivalence", stationary_oracle}},
      {2, {"gradient fidelity", gradient_fidelity}},
      {3, {"PSD robustness", psd_robustness}},
      {4, {"kNN exactness", knn_exactness}},
      {5, {"non-stationarity win", nonstationarity_win}},
      {6, {"Boston housing raw-target RMSE", boston}},
      {7, {"concrete RMSE", concrete}},
      {8, {"CATS E1", cats}},
      {9, {"timing shape", timing_shape}},
      {10, {"lag table row", lag_table}},
      {11, {"persistence", persistence}},
      {12, {"literal CI half-width", ci_literal}},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (!criteria().contains(id)) {
      std::cerr << "unknown criterion '" << argv[i] << "' (1-12)\n";
      return 2;
    }
    selected.push_back(id);
  }
  if (selected.empty()) {
    for (const auto& [id, c] : criteria()) selected.push_back(id);
  }

  int failed = 0, skipped = 0;
  for (int id : selected) {
    const Criterion& c = criteria().at(id);
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    std::cout << "criterion " << std::setw(2) << id << " " << tag << "  " << c.name << ": " << o.detail << " ["
              << std::fixed << std::setprecision(1) << secs << " s]" << std::defaultfloat << std::endl;
    if (o.status == Status::Fail) ++failed;
    if (o.status == Status::Skip) ++skipped;
  }
  if (failed > 0) return 1;
  if (skipped == static_cast<int>(selected.size())) return 77;
  return 0;
}
