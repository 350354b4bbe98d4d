#include "dgcn/timeseries.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dgcn/error.hpp"
#include "dgcn/parallel.hpp"

namespace dgcn {

namespace {

constexpr std::size_t kCatsBlockLength = 20;
constexpr std::size_t kCatsBlocks = 5;

Matrix lag_row(std::span<const double> tail, std::size_t n_lags) {
  Matrix row(1, static_cast<Eigen::Index>(n_lags));
  for (std::size_t i = 0; i < n_lags; ++i) row(0, static_cast<Eigen::Index>(i)) = tail[tail.size() - n_lags + i];
  return row;
}

void append(Prediction& dst, const Prediction& src, Eigen::Index at) {
  dst.mean[at] = src.mean[0];
  dst.variance[at] = src.variance[0];
  dst.ci_low[at] = src.ci_low[0];
  dst.ci_high[at] = src.ci_high[0];
  dst.clamped += src.clamped;
  dst.max_jitter = std::max(dst.max_jitter, src.max_jitter);
}

Prediction sized(std::size_t n, double alpha_level) {
  Prediction p = Prediction::empty(alpha_level);
  const auto m = static_cast<Eigen::Index>(n);
  p.mean.resize(m);
  p.variance.resize(m);
  p.ci_low.resize(m);
  p.ci_high.resize(m);
  return p;
}

}  // namespace

void validate_lags(const LagSpec& spec) {
  if (spec.n_lags < 1) throw InvalidArgument("n_lags must be >= 1");
  if (spec.horizons.empty()) throw InvalidArgument("at least one horizon is required");
  if (!std::is_sorted(spec.horizons.begin(), spec.horizons.end()) ||
      std::adjacent_find(spec.horizons.begin(), spec.horizons.end()) != spec.horizons.end()) {
    throw InvalidArgument("horizons must be strictly ascending");
  }
}

Dataset LagEmbedding::dataset(std::size_t horizon_index) const {
  if (horizon_index >= spec.horizons.size()) throw InvalidArgument("horizon index out of range");
  Dataset d;
  d.x = inputs;
  d.y = targets.col(static_cast<Eigen::Index>(horizon_index));
  for (std::size_t i = spec.n_lags; i > 0; --i) d.column_names.push_back("lag" + std::to_string(i));
  d.target_name = "y_t+" + std::to_string(spec.horizons[horizon_index]);
  return d;
}

LagEmbedding lag_embed(std::span<const double> series, const LagSpec& spec) {
  validate_lags(spec);
  const std::size_t len = series.size();
  const std::size_t reach = spec.n_lags + spec.max_horizon();
  if (len <= reach) {
    throw SeriesTooShort("series of length " + std::to_string(len) + " is too short for " +
                         std::to_string(spec.n_lags) + " lags and horizon " + std::to_string(spec.max_horizon()));
  }

  LagEmbedding out;
  out.spec = spec;
  std::vector<std::size_t> starts;  // 0-based index of y_t
  for (std::size_t t = spec.n_lags; t + spec.max_horizon() < len; ++t) {
    bool ok = true;
    for (std::size_t i = t - spec.n_lags; i < t && ok; ++i) ok = std::isfinite(series[i]);
    for (std::size_t h : spec.horizons) ok = ok && std::isfinite(series[t + h]);
    if (ok) starts.push_back(t);
  }

  const auto rows = static_cast<Eigen::Index>(starts.size());
  out.inputs.resize(rows, static_cast<Eigen::Index>(spec.n_lags));
  out.targets.resize(rows, static_cast<Eigen::Index>(spec.horizons.size()));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::size_t t = starts[static_cast<std::size_t>(r)];
    for (std::size_t i = 0; i < spec.n_lags; ++i) out.inputs(r, static_cast<Eigen::Index>(i)) = series[t - spec.n_lags + i];
    for (std::size_t h = 0; h < spec.horizons.size(); ++h) {
      out.targets(r, static_cast<Eigen::Index>(h)) = series[t + spec.horizons[h]];
    }
    out.times.push_back(t + 1);
  }
  return out;
}

BlockSpec BlockSpec::cats() {
  BlockSpec b;
  for (std::size_t i = 1; i <= kCatsBlocks; ++i) b.blocks.emplace_back(i * 1000 - 19, i * 1000);
  return b;
}

void BlockSpec::validate() const {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].first < 1 || blocks[i].second < blocks[i].first) throw InvalidArgument("malformed block range");
    if (i > 0 && blocks[i].first <= blocks[i - 1].second) throw InvalidArgument("blocks must be disjoint and ascending");
  }
}

std::size_t BlockSpec::total() const {
  std::size_t n = 0;
  for (const auto& [a, b] : blocks) n += b - a + 1;
  return n;
}

Prediction forecast_recursive(const TrainedModel& model, std::span<const double> history, std::size_t steps,
                              std::size_t k, double alpha_level) {
  const std::size_t n_lags = model.dims();
  if (history.size() < n_lags) {
    throw SeriesTooShort("history has " + std::to_string(history.size()) + " values, model needs " +
                         std::to_string(n_lags));
  }
  Prediction out = sized(steps, alpha_level);
  std::vector<double> tail(history.end() - static_cast<std::ptrdiff_t>(n_lags), history.end());
  for (std::size_t s = 0; s < steps; ++s) {
    const Prediction p = predict_batched(model, lag_row(tail, n_lags), k, alpha_level, false);
    append(out, p, static_cast<Eigen::Index>(s));
    tail.push_back(p.mean[0]);
  }
  return out;
}

std::vector<TrainedModel> fit_direct(std::span<const double> series, std::size_t n_lags, std::size_t steps,
                                     const TrainConfig& config) {
  LagSpec spec{n_lags, {}};
  for (std::size_t h = 0; h < steps; ++h) spec.horizons.push_back(h);
  const LagEmbedding emb = lag_embed(series, spec);
  std::vector<TrainedModel> models;
  for (std::size_t h = 0; h < steps; ++h) {
    TrainConfig c = config;
    c.seed = mix_seed(config.seed, 100 + h);
    models.push_back(fit(emb.dataset(h), c));
  }
  return models;
}

Prediction forecast_direct(const std::vector<TrainedModel>& models, std::span<const double> history, std::size_t k,
                           double alpha_level) {
  Prediction out = sized(models.size(), alpha_level);
  if (models.empty()) return out;
  const std::size_t n_lags = models.front().dims();
  if (history.size() < n_lags) throw SeriesTooShort("history is shorter than the lag count");
  const Matrix row = lag_row(history, n_lags);
  for (std::size_t h = 0; h < models.size(); ++h) {
    append(out, predict_batched(models[h], row, k, alpha_level, false), static_cast<Eigen::Index>(h));
  }
  return out;
}

double e1_score(std::span<const double> truth, std::span<const double> pred) {
  constexpr std::size_t kExpected = kCatsBlocks * kCatsBlockLength;
  if (truth.size() != kExpected || pred.size() != kExpected) {
    throw ShapeMismatch("E1 needs exactly 100 values (5 blocks of 20), got " + std::to_string(truth.size()) + " and " +
                        std::to_string(pred.size()));
  }
  double total = 0.0;
  for (std::size_t b = 0; b < kCatsBlocks; ++b) {
    double block = 0.0;
    for (std::size_t i = b * kCatsBlockLength; i < (b + 1) * kCatsBlockLength; ++i) {
      const double e = truth[i] - pred[i];
      block += e * e;
    }
    total += block / 100.0;
  }
  return total;
}

std::size_t select_lags(std::span<const double> series, std::span<const std::size_t> candidates,
                        const TrainConfig& config) {
  if (candidates.empty()) throw InvalidArgument("select_lags: no candidates");
  std::size_t best_lags = candidates.front();
  double best_nll = std::numeric_limits<double>::infinity();
  for (std::size_t lags : candidates) {
    const LagEmbedding emb = lag_embed(series, LagSpec{lags, {0}});
    const TrainedModel model = fit(emb.dataset(), config);
    const double final_nll = model.log.epochs.back().mean_nll;
    if (final_nll < best_nll) {
      best_nll = final_nll;
      best_lags = lags;
    }
  }
  return best_lags;
}

CatsResult cats_protocol(std::span<const double> series, const std::vector<LagSpec>& per_block_lags,
                         const TrainConfig& config, std::span<const double> truth, ForecastMode mode, std::size_t k) {
  const BlockSpec blocks = BlockSpec::cats();
  if (series.size() != 5000) throw ShapeMismatch("CATS series must have 5000 values");
  if (per_block_lags.size() != blocks.blocks.size()) throw InvalidArgument("need one lag spec per block");
  if (!truth.empty() && truth.size() != blocks.total()) throw ShapeMismatch("truth must hold 100 values");

  const std::size_t n_blocks = blocks.blocks.size();
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::size_t n_lags = per_block_lags[b].n_lags;
    const std::size_t start = blocks.blocks[b].first;  // 1-based
    if (n_lags >= start) throw SeriesTooShort("CATS: not enough history before block " + std::to_string(b + 1));
    for (std::size_t i = start - 1 - n_lags; i < start - 1; ++i) {
      if (!std::isfinite(series[i])) throw InvalidArgument("CATS: missing value inside the forecast history");
    }
  }

  // Each block sees only the values strictly before its start.
  std::vector<Prediction> per_block(n_blocks);
  parallel_for(n_blocks, [&](std::size_t b) {
    const std::size_t start = blocks.blocks[b].first;
    const std::size_t length = blocks.blocks[b].second - start + 1;
    const auto prefix = series.first(start - 1);
    const std::size_t n_lags = per_block_lags[b].n_lags;
    TrainConfig c = config;
    c.seed = mix_seed(config.seed, b);
    if (mode == ForecastMode::Recursive) {
      const TrainedModel model = fit(lag_embed(prefix, LagSpec{n_lags, {0}}).dataset(), c);
      per_block[b] = forecast_recursive(model, prefix, length, k);
    } else {
      per_block[b] = forecast_direct(fit_direct(prefix, n_lags, length, c), prefix, k);
    }
  });

  CatsResult result;
  result.detail = sized(blocks.total(), 0.05);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const Prediction& p = per_block[b];
    for (Eigen::Index i = 0; i < p.mean.size(); ++i) {
      const auto at = static_cast<Eigen::Index>(result.predictions.size());
      result.detail.mean[at] = p.mean[i];
      result.detail.variance[at] = p.variance[i];
      result.detail.ci_low[at] = p.ci_low[i];
      result.detail.ci_high[at] = p.ci_high[i];
      result.predictions.push_back(p.mean[i]);
    }
    result.detail.clamped += p.clamped;
    result.detail.max_jitter = std::max(result.detail.max_jitter, p.max_jitter);
    result.lags_used.push_back(per_block_lags[b].n_lags);
  }

  if (!truth.empty()) {
    result.e1 = e1_score(truth, result.predictions);
    for (std::size_t b = 0; b < blocks.blocks.size(); ++b) {
      double s = 0.0;
      for (std::size_t i = b * kCatsBlockLength; i < (b + 1) * kCatsBlockLength; ++i) {
        const double e = truth[i] - result.predictions[i];
        s += e * e;
      }
      result.block_scores.push_back(s / 100.0);
    }
  }
  return result;
}

}  // namespace dgcn
