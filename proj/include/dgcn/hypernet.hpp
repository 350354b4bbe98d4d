#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "dgcn/linalg.hpp"

namespace dgcn {

using Rng = std::mt19937_64;

// splitmix64 of (seed, stream): independent, reproducible sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

enum class Activation { Sigmoid, ReLU, Linear, Softplus };

std::string_view activation_name(Activation a);
Activation activation_from_name(std::string_view name);

struct LayerSpec {
  std::size_t in_units = 1;
  std::size_t out_units = 1;
  Activation activation = Activation::Linear;

  bool operator==(const LayerSpec&) const = default;
};

// Throws InvalidArgument unless the layers chain and every width is >= 1.
void validate_layers(std::span<const LayerSpec> layers);

// weights[l] is out_units x in_units.
struct MlpParams {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  // Bumped by every optimizer step; forward caches remember it.
  std::uint64_t generation = 0;

  std::size_t parameter_count() const;
  MlpParams zeros_like() const;
  // Flat copy in layer order: W(0) row-major, b(0), W(1), b(1), ...
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);
};

// Glorot-uniform weights on +-sqrt(6 / (fan_in + fan_out)), zero biases.
MlpParams init_params(std::span<const LayerSpec> layers, Rng& rng);

// Regularization applied only on training passes: Gaussian noise on the
// network input and inverted dropout on every hidden activation.
struct RegularizerSpec {
  double dropout_rate = 0.1;
  double input_noise_std = 0.01;

  bool operator==(const RegularizerSpec&) const = default;
};

// Everything the backward pass needs from its paired forward pass.
struct ForwardCache {
  bool valid = false;
  bool training = false;
  std::uint64_t generation = 0;
  Matrix input;                  // after input noise
  std::vector<Matrix> pre;       // pre-activations per layer
  std::vector<Matrix> post;      // activations per layer (after dropout)
  std::vector<Matrix> masks;     // dropout scale per hidden layer, empty when unused
};

/// Row-wise forward pass. In inference mode the rng and regularizer are not
/// touched, so the output is a pure function of (params, x).
Matrix mlp_forward(const MlpParams& params, std::span<const LayerSpec> layers, const Matrix& x,
                   const RegularizerSpec& reg, bool training, Rng& rng, ForwardCache* cache = nullptr);

struct MlpGradients {
  MlpParams params;
  Matrix input;
};

/// Gradients of sum(upstream .* output) through the pass recorded in cache.
/// Throws StaleMask if the cache is empty or the params moved since.
MlpGradients mlp_backward(const MlpParams& params, std::span<const LayerSpec> layers, const ForwardCache& cache,
                          const Matrix& upstream);

// 0.5 * ||f(x) - y||^2 in inference mode; y has one column per output unit.
double mlp_loss_sq(const MlpParams& params, std::span<const LayerSpec> layers, const Matrix& x, const Matrix& y);

enum class OptimizerAlgorithm { SGD, Adam, Nadam };

std::string_view optimizer_name(OptimizerAlgorithm a);
OptimizerAlgorithm optimizer_from_name(std::string_view name);

struct OptimizerConfig {
  OptimizerAlgorithm algorithm = OptimizerAlgorithm::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const OptimizerConfig&) const = default;
};

void validate_optimizer(const OptimizerConfig& config);

struct OptimizerState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_params(const MlpParams& params);
};

void optimizer_step(OptimizerState& state, MlpParams& params, const MlpParams& grads, const OptimizerConfig& config);

// Layer specs plus parameters plus optimizer moments: one trainable net.
struct Network {
  std::vector<LayerSpec> layers;
  MlpParams params;
  OptimizerState optimizer;

  std::size_t inputs() const { return layers.front().in_units; }
  std::size_t outputs() const { return layers.back().out_units; }
};

}  // namespace dgcn
