#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dgcn/dataset.hpp"
#include "dgcn/gp.hpp"
#include "dgcn/trainer.hpp"

namespace dgcn {

// Lag embedding: inputs (y[t-n_lags], ..., y[t-1]), outputs y[t+h] per horizon.
struct LagSpec {
  std::size_t n_lags = 20;
  std::vector<std::size_t> horizons{0};

  std::size_t max_horizon() const { return horizons.empty() ? 0 : horizons.back(); }
  bool operator==(const LagSpec&) const = default;
};

void validate_lags(const LagSpec& spec);

struct LagEmbedding {
  LagSpec spec;
  Matrix inputs;                   // rows x n_lags, oldest lag first
  Matrix targets;                  // rows x horizons.size()
  std::vector<std::size_t> times;  // 1-based t of each row

  std::size_t rows() const { return times.size(); }
  // Single-output dataset for horizons[horizon_index].
  Dataset dataset(std::size_t horizon_index = 0) const;
};

/// One row per t with every referenced value in range. Rows touching a
/// missing (non-finite) value are dropped as well, so a gap-free series of
/// length L yields exactly L - n_lags - max_horizon rows.
/// Throws SeriesTooShort when L <= n_lags + max_horizon.
LagEmbedding lag_embed(std::span<const double> series, const LagSpec& spec);

// Inclusive 1-based ranges of missing values.
struct BlockSpec {
  std::vector<std::pair<std::size_t, std::size_t>> blocks;

  // 981-1000, 1981-2000, 2981-3000, 3981-4000, 4981-5000
  static BlockSpec cats();
  void validate() const;
  std::size_t total() const;
};

/// Multi-step forecast from a model trained on lag features with horizon 0:
/// each predicted mean is appended to the history and becomes a lag input
/// for the next step.
Prediction forecast_recursive(const TrainedModel& model, std::span<const double> history, std::size_t steps,
                              std::size_t k, double alpha_level = 0.05);

// Direct mode: one model per horizon 0..steps-1, each fed the same lag vector.
std::vector<TrainedModel> fit_direct(std::span<const double> series, std::size_t n_lags, std::size_t steps,
                                     const TrainConfig& config);
Prediction forecast_direct(const std::vector<TrainedModel>& models, std::span<const double> history, std::size_t k,
                           double alpha_level = 0.05);

// sum((truth - pred)^2) / 100 over the five 20-value blocks.
double e1_score(std::span<const double> truth, std::span<const double> pred);

// Lag count with the lowest final training NLL among the candidates.
std::size_t select_lags(std::span<const double> series, std::span<const std::size_t> candidates,
                        const TrainConfig& config);

enum class ForecastMode { Recursive, Direct };

struct CatsResult {
  std::vector<double> predictions;  // 100 values in block order
  Prediction detail;                // per-value variance and intervals
  std::vector<std::size_t> lags_used;
  std::vector<double> block_scores;  // empty without truth
  double e1 = -1.0;                  // negative without truth
};

/// Trains one model per missing block on the data strictly before that
/// block and forecasts the block's 20 values. `truth`, when non-empty,
/// holds the 100 true values in block order and enables E1.
CatsResult cats_protocol(std::span<const double> series, const std::vector<LagSpec>& per_block_lags,
                         const TrainConfig& config, std::span<const double> truth = {},
                         ForecastMode mode = ForecastMode::Recursive, std::size_t k = 0);

}  // namespace dgcn
