#include "dgcn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "dgcn/error.hpp"
#include "dgcn/parallel.hpp"

namespace dgcn {

namespace {

std::vector<LayerSpec> stack_layers(const NetSpec& spec, std::size_t n_in, std::size_t n_out, Activation output) {
  std::vector<LayerSpec> layers;
  std::size_t width = n_in;
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    layers.push_back({width, spec.hidden[i], spec.activations[i]});
    width = spec.hidden[i];
  }
  layers.push_back({width, n_out, output});
  return layers;
}

Network make_network(std::vector<LayerSpec> layers, Rng& rng) {
  Network net;
  net.params = init_params(layers, rng);
  net.layers = std::move(layers);
  net.optimizer = OptimizerState::for_params(net.params);
  return net;
}

Matrix rows_of(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Vector rows_of(const Vector& v, const std::vector<std::size_t>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(rows[i])];
  return out;
}

HyperField rows_of(const HyperField& h, const std::vector<std::size_t>& rows) {
  return {rows_of(h.theta, rows), rows_of(h.sigma2, rows)};
}

void check_gradients_finite(const NetworkGradients& g, std::size_t epoch, std::size_t batch) {
  auto finite = [](const MlpParams& p) {
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      if (!p.weights[l].allFinite() || !p.biases[l].allFinite()) return false;
    }
    return true;
  };
  if (!std::isfinite(g.nll) || !finite(g.theta_net) || !finite(g.sigma_net)) {
    throw NonFiniteLoss("non-finite likelihood or gradient at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batch) + " (nll = " + std::to_string(g.nll) + ")");
  }
}

// Runs `epochs` epochs over model.x / model.y, appending to the log.
void train_epochs(TrainedModel& model, std::size_t epochs) {
  const TrainConfig& cfg = model.config;
  const std::size_t n = model.size();
  const std::size_t batch_size = std::min(cfg.batch_size, n);
  OptimizerConfig sigma_opt = cfg.optimizer;
  if (cfg.sigma_learning_rate > 0.0) sigma_opt.learning_rate = cfg.sigma_learning_rate;

  Rng rng(mix_seed(cfg.seed, 1000 + model.epochs_trained));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  std::size_t stalled = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    const std::size_t epoch = static_cast<std::size_t>(model.epochs_trained);
    std::shuffle(order.begin(), order.end(), rng);
    const auto batches = partition_batches(order, batch_size, model.dims());

    double nll_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& rows = batches[b];
      GpBatch batch;
      batch.x = rows_of(model.x, rows);
      batch.y = rows_of(model.y, rows);

      ForwardCache theta_cache;
      ForwardCache sigma_cache;
      batch.hyper.theta = mlp_forward(model.theta_net.params, model.theta_net.layers, batch.x, cfg.regularizer, true,
                                      rng, &theta_cache);
      batch.hyper.theta.array() += cfg.theta_offset;
      const Matrix s = mlp_forward(model.sigma_net.params, model.sigma_net.layers, batch.x, cfg.regularizer, true, rng,
                                   &sigma_cache);
      batch.hyper.sigma2 = s.col(0).array() + kSigma2Floor;

      NetworkGradients grads;
      try {
        grads = nll_grad(batch, cfg.kernels, model.theta_net, theta_cache, model.sigma_net, sigma_cache);
      } catch (const NotPositiveDefinite& err) {
        throw NotPositiveDefinite(std::string(err.what()) + " (epoch " + std::to_string(epoch) + ", batch " +
                                  std::to_string(b) + ", " + std::to_string(rows.size()) + " points)");
      }
      check_gradients_finite(grads, epoch, b);
      if (grads.jitter_used > 0.0) model.log.jitter_events.push_back({epoch, b, grads.jitter_used});

      optimizer_step(model.theta_net.optimizer, model.theta_net.params, grads.theta_net, cfg.optimizer);
      optimizer_step(model.sigma_net.optimizer, model.sigma_net.params, grads.sigma_net, sigma_opt);
      nll_sum += grads.nll;
    }

    const double mean_nll = nll_sum / static_cast<double>(n);
    model.log.epochs.push_back({epoch, mean_nll, batches.size()});
    ++model.epochs_trained;

    const double improvement = (best - mean_nll) / std::max(std::abs(best), 1e-12);
    if (std::isfinite(best) && improvement < cfg.early_stop_tol) {
      ++stalled;
    } else {
      stalled = 0;
    }
    best = std::min(best, mean_nll);
    if (cfg.patience > 0 && stalled >= cfg.patience) {
      model.log.early_stopped = true;
      break;
    }
  }
}

}  // namespace

void validate_config(const TrainConfig& config) {
  if (config.batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (config.max_epochs < 1) throw InvalidArgument("max_epochs must be >= 1");
  if (config.kernels.size() == 0) throw InvalidArgument("kernel set must not be empty");
  for (const NetSpec* spec : {&config.theta_net, &config.sigma_net}) {
    if (spec->hidden.size() != spec->activations.size()) {
      throw InvalidArgument("hidden layer widths and activations differ in length");
    }
    for (std::size_t w : spec->hidden) {
      if (w == 0) throw InvalidArgument("hidden layers need at least one unit");
    }
  }
  if (!(config.regularizer.dropout_rate >= 0.0 && config.regularizer.dropout_rate < 1.0)) {
    throw InvalidArgument("dropout_rate must lie in [0, 1)");
  }
  if (!(config.regularizer.input_noise_std >= 0.0)) throw InvalidArgument("input_noise_std must be >= 0");
  validate_optimizer(config.optimizer);
  if (config.sigma_learning_rate < 0.0) throw InvalidArgument("sigma_learning_rate must be >= 0");
  if (!(config.sigma2_init > kSigma2Floor)) throw InvalidArgument("sigma2_init must exceed the noise floor");
  if (!(config.early_stop_tol >= 0.0)) throw InvalidArgument("early_stop_tol must be >= 0");
}

std::vector<LayerSpec> theta_layers(const TrainConfig& config, std::size_t n_v) {
  return stack_layers(config.theta_net, n_v, n_v * config.kernels.size(), Activation::Linear);
}

std::vector<LayerSpec> sigma_layers(const TrainConfig& config, std::size_t n_v) {
  return stack_layers(config.sigma_net, n_v, 1, Activation::Softplus);
}

std::vector<std::vector<std::size_t>> partition_batches(const std::vector<std::size_t>& order, std::size_t batch_size,
                                                        std::size_t n_v) {
  if (batch_size == 0) throw InvalidArgument("partition_batches: batch size must be >= 1");
  std::vector<std::vector<std::size_t>> batches;
  const std::size_t min_tail = std::max<std::size_t>(8, n_v + 2);
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
    if (!batches.empty() && batch.size() < batch_size && batch.size() < min_tail) {
      batches.back().insert(batches.back().end(), batch.begin(), batch.end());
    } else {
      batches.push_back(std::move(batch));
    }
  }
  return batches;
}

std::size_t TrainedModel::default_k() const {
  const std::size_t k = config.predict_k > 0 ? config.predict_k : config.batch_size;
  return std::min(k, size());
}

HyperField TrainedModel::hyper(const Matrix& x_std) const {
  HyperField h;
  Rng unused(0);
  if (x_std.rows() == 0) {
    h.theta.resize(0, x.cols() * static_cast<Eigen::Index>(config.kernels.size()));
    h.sigma2.resize(0);
    return h;
  }
  h.theta = mlp_forward(theta_net.params, theta_net.layers, x_std, config.regularizer, false, unused);
  h.theta.array() += config.theta_offset;
  const Matrix s = mlp_forward(sigma_net.params, sigma_net.layers, x_std, config.regularizer, false, unused);
  h.sigma2 = s.col(0).array() + kSigma2Floor;
  return h;
}

TrainedModel fit(const Dataset& data, const TrainConfig& config) {
  validate_config(config);
  validate_dataset(data, 2);

  TrainedModel model;
  model.config = config;
  model.scaler = Scaler::fit(data, config.standardize_y);
  model.x = model.scaler.transform_x(data.x);
  model.y = model.scaler.transform_y(data.y);
  model.column_names = data.column_names;
  model.target_name = data.target_name;

  Rng init(mix_seed(config.seed, 0));
  model.theta_net = make_network(theta_layers(config, data.dims()), init);
  model.sigma_net = make_network(sigma_layers(config, data.dims()), init);
  // softplus(b) + floor = sigma2_init
  model.sigma_net.params.biases.back()[0] = std::log(std::expm1(config.sigma2_init - kSigma2Floor));

  train_epochs(model, config.max_epochs);
  model.index = build_index(model.x, config.neighbor_strategy);
  return model;
}

TrainedModel update(const TrainedModel& model, const Dataset& new_data, std::size_t epochs) {
  if (new_data.dims() != model.dims()) {
    throw SchemaMismatch("update: new data has " + std::to_string(new_data.dims()) + " inputs, model has " +
                         std::to_string(model.dims()));
  }
  validate_dataset(new_data, 1);

  TrainedModel out = model;
  const Matrix xs = model.scaler.transform_x(new_data.x);
  const Vector ys = model.scaler.transform_y(new_data.y);
  const Eigen::Index n0 = out.x.rows();
  out.x.conservativeResize(n0 + xs.rows(), Eigen::NoChange);
  out.x.bottomRows(xs.rows()) = xs;
  out.y.conservativeResize(n0 + ys.size());
  out.y.tail(ys.size()) = ys;

  if (epochs > 0) train_epochs(out, epochs);
  out.index = build_index(out.x, out.config.neighbor_strategy);
  return out;
}

Prediction predict_batched(const TrainedModel& model, const Matrix& xstar_raw, std::size_t k, double alpha_level,
                           bool include_noise, IntervalMode mode) {
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) throw InvalidAlpha("alpha level must lie in (0, 1)");
  if (xstar_raw.rows() == 0) return Prediction::empty(alpha_level);
  if (static_cast<std::size_t>(xstar_raw.cols()) != model.dims()) {
    throw SchemaMismatch("prediction input has " + std::to_string(xstar_raw.cols()) + " columns, model expects " +
                         std::to_string(model.dims()));
  }
  if (k == 0) k = model.default_k();
  k = std::min(k, model.size());

  const Matrix xs = model.scaler.transform_x(xstar_raw);
  const HyperField star = model.hyper(xs);
  const HyperField train = model.hyper(model.x);

  // Neighbor sets in ascending index order, so k = N reproduces the full
  // training set exactly.
  std::map<std::vector<std::size_t>, std::vector<std::size_t>> groups;
  for (Eigen::Index j = 0; j < xs.rows(); ++j) {
    auto nn = model.index.query(std::span<const double>(xs.row(j).data(), static_cast<std::size_t>(xs.cols())), k);
    std::sort(nn.begin(), nn.end());
    groups[std::move(nn)].push_back(static_cast<std::size_t>(j));
  }
  std::vector<const std::pair<const std::vector<std::size_t>, std::vector<std::size_t>>*> work;
  for (const auto& g : groups) work.push_back(&g);

  const Eigen::Index m = xs.rows();
  Prediction out = Prediction::empty(alpha_level);
  out.mean.resize(m);
  out.variance.resize(m);
  out.ci_low.resize(m);
  out.ci_high.resize(m);
  std::vector<std::size_t> clamped(work.size(), 0);
  std::vector<double> jitter(work.size(), 0.0);

  parallel_for(work.size(), [&](std::size_t g) {
    const auto& [neighbors, targets] = *work[g];
    GpBatch batch{rows_of(model.x, neighbors), rows_of(model.y, neighbors), rows_of(train, neighbors)};
    const Prediction p =
        predict(batch, rows_of(xs, targets), rows_of(star, targets), model.config.kernels, alpha_level, include_noise,
                mode);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const auto j = static_cast<Eigen::Index>(targets[t]);
      const auto i = static_cast<Eigen::Index>(t);
      out.mean[j] = p.mean[i];
      out.variance[j] = p.variance[i];
      out.ci_low[j] = p.ci_low[i];
      out.ci_high[j] = p.ci_high[i];
    }
    clamped[g] = p.clamped;
    jitter[g] = p.max_jitter;
  });
  out.clamped = std::accumulate(clamped.begin(), clamped.end(), std::size_t{0});
  out.max_jitter = jitter.empty() ? 0.0 : *std::max_element(jitter.begin(), jitter.end());

  const double mu = model.scaler.y_mean;
  const double sd = model.scaler.y_std;
  out.mean = (out.mean.array() * sd + mu).matrix();
  out.variance *= sd * sd;
  out.ci_low = (out.ci_low.array() * sd + mu).matrix();
  out.ci_high = (out.ci_high.array() * sd + mu).matrix();
  return out;
}

Prediction predict_full(const TrainedModel& model, const Matrix& xstar_raw, double alpha_level, bool include_noise,
                        IntervalMode mode) {
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) throw InvalidAlpha("alpha level must lie in (0, 1)");
  if (xstar_raw.rows() == 0) return Prediction::empty(alpha_level);
  if (static_cast<std::size_t>(xstar_raw.cols()) != model.dims()) {
    throw SchemaMismatch("prediction input has wrong column count");
  }
  const Matrix xs = model.scaler.transform_x(xstar_raw);
  const GpBatch batch{model.x, model.y, model.hyper(model.x)};
  Prediction out =
      predict(batch, xs, model.hyper(xs), model.config.kernels, alpha_level, include_noise, mode);
  const double mu = model.scaler.y_mean;
  const double sd = model.scaler.y_std;
  out.mean = (out.mean.array() * sd + mu).matrix();
  out.variance *= sd * sd;
  out.ci_low = (out.ci_low.array() * sd + mu).matrix();
  out.ci_high = (out.ci_high.array() * sd + mu).matrix();
  return out;
}

double heldout_nll(const TrainedModel& model, const Dataset& data) {
  if (data.dims() != model.dims()) throw SchemaMismatch("heldout_nll: column count differs");
  validate_dataset(data, 1);
  const Matrix xs = model.scaler.transform_x(data.x);
  const GpBatch batch{xs, model.scaler.transform_y(data.y), model.hyper(xs)};
  return nll(batch, model.config.kernels) / static_cast<double>(data.size());
}

}  // namespace dgcn
