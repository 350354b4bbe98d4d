#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgcn/dataset.hpp"
#include "dgcn/gp.hpp"
#include "dgcn/hypernet.hpp"
#include "dgcn/kernels.hpp"
#include "dgcn/neighbors.hpp"

namespace dgcn {

// Hidden part of a hypernetwork; input and output widths follow from the data.
struct NetSpec {
  std::vector<std::size_t> hidden{20, 20, 20};
  std::vector<Activation> activations{Activation::Sigmoid, Activation::Sigmoid, Activation::ReLU};

  bool operator==(const NetSpec&) const = default;
};

struct TrainConfig {
  KernelSet kernels;
  NetSpec theta_net;
  NetSpec sigma_net;
  RegularizerSpec regularizer;
  OptimizerConfig optimizer;
  // Learning rate of the noise network; 0 means "same as optimizer".
  double sigma_learning_rate = 0.0;
  // N_b. Clipped to the dataset size.
  std::size_t batch_size = 200;
  // Neighbors per prediction; 0 means "same as batch_size".
  std::size_t predict_k = 0;
  std::size_t max_epochs = 100;
  double early_stop_tol = 1e-4;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  bool standardize_y = true;
  // Added to the length-scale net output so an untrained net gives theta ~ 1.
  double theta_offset = 1.0;
  // Initial noise variance (standardized target space).
  double sigma2_init = 1e-2;
  NeighborStrategy neighbor_strategy = NeighborStrategy::BruteForce;

  bool operator==(const TrainConfig&) const = default;
};

void validate_config(const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_nll = 0.0;  // per point, averaged over the epoch
  std::size_t batches = 0;
};

struct JitterEvent {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double jitter = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::vector<JitterEvent> jitter_events;
  bool early_stopped = false;
};

// Everything needed to predict: both nets, scalers, the standardized
// training set and its neighbor index.
struct TrainedModel {
  TrainConfig config;
  Scaler scaler;
  Matrix x;  // standardized inputs
  Vector y;  // standardized targets
  std::vector<std::string> column_names;
  std::string target_name;
  Network theta_net;
  Network sigma_net;
  NeighborIndex index;
  TrainingLog log;
  // Total epochs run, including updates; seeds the next update.
  std::uint64_t epochs_trained = 0;

  std::size_t dims() const { return static_cast<std::size_t>(x.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t default_k() const;

  // Deterministic (inference-mode) hyperparameters for standardized inputs.
  HyperField hyper(const Matrix& x_std) const;
};

// Theta-net and sigma-net layer stacks for the given input width.
std::vector<LayerSpec> theta_layers(const TrainConfig& config, std::size_t n_v);
std::vector<LayerSpec> sigma_layers(const TrainConfig& config, std::size_t n_v);

/// Splits a shuffled index list into consecutive batches of batch_size. A
/// final partial batch smaller than max(8, n_v + 2) joins the previous one.
std::vector<std::vector<std::size_t>> partition_batches(const std::vector<std::size_t>& order, std::size_t batch_size,
                                                        std::size_t n_v);

/// Trains both hypernetworks through the GP marginal likelihood.
///
/// Each epoch shuffles the data, walks the batches, and takes one optimizer
/// step per net per batch. Stops after max_epochs or once the relative
/// improvement of the epoch-mean NLL stays below early_stop_tol for
/// `patience` epochs in a row.
TrainedModel fit(const Dataset& data, const TrainConfig& config);

// Appends new points (scaled with the existing scaler) and keeps training the
// warm-started nets for `epochs` epochs over the combined data.
TrainedModel update(const TrainedModel& model, const Dataset& new_data, std::size_t epochs);

/// Predicts raw-space outputs from the k nearest training points of each test
/// point (k = 0 uses the model default). Test points sharing a neighbor set
/// share one factorization.
Prediction predict_batched(const TrainedModel& model, const Matrix& xstar_raw, std::size_t k, double alpha_level,
                           bool include_noise, IntervalMode mode = IntervalMode::Literal);

// Same, but every test point conditions on the whole training set.
Prediction predict_full(const TrainedModel& model, const Matrix& xstar_raw, double alpha_level, bool include_noise,
                        IntervalMode mode = IntervalMode::Literal);

// Mean per-point NLL of a dataset under the model's inference-mode
// hyperparameters, targets scaled with the model's scaler.
double heldout_nll(const TrainedModel& model, const Dataset& data);

}  // namespace dgcn
