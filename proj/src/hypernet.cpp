#include "dgcn/hypernet.hpp"

#include <cmath>
#include <string>

#include "dgcn/error.hpp"

namespace dgcn {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

double softplus(double x) {
  // log(1 + e^x) without overflow
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void activate(Activation a, const Matrix& pre, Matrix& out) {
  switch (a) {
    case Activation::Sigmoid:
      out = pre.unaryExpr([](double v) { return sigmoid(v); });
      break;
    case Activation::ReLU:
      out = pre.cwiseMax(0.0);
      break;
    case Activation::Linear:
      out = pre;
      break;
    case Activation::Softplus:
      out = pre.unaryExpr([](double v) { return softplus(v); });
      break;
  }
}

// Elementwise derivative of the activation evaluated at the pre-activation.
Matrix activation_deriv(Activation a, const Matrix& pre) {
  switch (a) {
    case Activation::Sigmoid:
      return pre.unaryExpr([](double v) {
        const double s = sigmoid(v);
        return s * (1.0 - s);
      });
    case Activation::ReLU:
      return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::Linear:
      return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::Softplus:
      return pre.unaryExpr([](double v) { return sigmoid(v); });
  }
  return Matrix();
}

template <typename Fn>
void for_each_tensor(MlpParams& a, const MlpParams& b, Fn fn) {
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    fn(a.weights[l].reshaped(), b.weights[l].reshaped());
    fn(a.biases[l].reshaped(), b.biases[l].reshaped());
  }
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::ReLU:
      return "relu";
    case Activation::Linear:
      return "linear";
    case Activation::Softplus:
      return "softplus";
  }
  return "unknown";
}

Activation activation_from_name(std::string_view name) {
  for (Activation a : {Activation::Sigmoid, Activation::ReLU, Activation::Linear, Activation::Softplus}) {
    if (activation_name(a) == name) return a;
  }
  throw InvalidArgument("unknown activation '" + std::string(name) + "'");
}

void validate_layers(std::span<const LayerSpec> layers) {
  if (layers.empty()) throw InvalidArgument("network needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].in_units == 0 || layers[l].out_units == 0) {
      throw InvalidArgument("layer " + std::to_string(l) + " has zero units");
    }
    if (l > 0 && layers[l].in_units != layers[l - 1].out_units) {
      throw InvalidArgument("layer " + std::to_string(l) + " input width does not match previous output");
    }
  }
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    z.weights.push_back(Matrix::Zero(weights[l].rows(), weights[l].cols()));
    z.biases.push_back(Vector::Zero(biases[l].size()));
  }
  return z;
}

std::vector<double> MlpParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    flat.insert(flat.end(), weights[l].data(), weights[l].data() + weights[l].size());
    flat.insert(flat.end(), biases[l].data(), biases[l].data() + biases[l].size());
  }
  return flat;
}

void MlpParams::assign_flat(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw DimensionMismatch("assign_flat: size mismatch");
  std::size_t at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    std::copy_n(flat.data() + at, weights[l].size(), weights[l].data());
    at += weights[l].size();
    std::copy_n(flat.data() + at, biases[l].size(), biases[l].data());
    at += biases[l].size();
  }
}

MlpParams init_params(std::span<const LayerSpec> layers, Rng& rng) {
  validate_layers(layers);
  MlpParams params;
  for (const auto& layer : layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in_units + layer.out_units));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(layer.out_units, layer.in_units);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    params.weights.push_back(std::move(w));
    params.biases.push_back(Vector::Zero(layer.out_units));
  }
  return params;
}

Matrix mlp_forward(const MlpParams& params, std::span<const LayerSpec> layers, const Matrix& x,
                   const RegularizerSpec& reg, bool training, Rng& rng, ForwardCache* cache) {
  if (params.weights.size() != layers.size()) throw DimensionMismatch("mlp_forward: params do not match layers");
  if (static_cast<std::size_t>(x.cols()) != layers.front().in_units) {
    throw DimensionMismatch("mlp_forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                            std::to_string(layers.front().in_units));
  }

  Matrix input = x;
  if (training && reg.input_noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, reg.input_noise_std);
    for (Eigen::Index i = 0; i < input.size(); ++i) input.data()[i] += noise(rng);
  }

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c = ForwardCache{};
  c.training = training;
  c.generation = params.generation;
  c.input = std::move(input);

  const bool dropout = training && reg.dropout_rate > 0.0;
  if (dropout && reg.dropout_rate >= 1.0) throw InvalidArgument("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - reg.dropout_rate);
  const double scale = dropout ? 1.0 / (1.0 - reg.dropout_rate) : 1.0;

  const Matrix* current = &c.input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix pre = (*current) * params.weights[l].transpose();
    pre.rowwise() += params.biases[l].transpose();
    Matrix post;
    activate(layers[l].activation, pre, post);

    Matrix mask;
    const bool hidden = l + 1 < layers.size();
    if (hidden && dropout) {
      mask.resize(post.rows(), post.cols());
      for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : 0.0;
      post = post.cwiseProduct(mask);
    }
    c.pre.push_back(std::move(pre));
    c.post.push_back(std::move(post));
    c.masks.push_back(std::move(mask));
    current = &c.post.back();
  }
  c.valid = true;
  return c.post.back();
}

MlpGradients mlp_backward(const MlpParams& params, std::span<const LayerSpec> layers, const ForwardCache& cache,
                          const Matrix& upstream) {
  if (!cache.valid) throw StaleMask("mlp_backward: no paired forward pass");
  if (cache.generation != params.generation) {
    throw StaleMask("mlp_backward: parameters changed since the forward pass");
  }
  if (cache.pre.size() != layers.size()) throw StaleMask("mlp_backward: forward cache belongs to another network");
  const Matrix& out = cache.post.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw DimensionMismatch("mlp_backward: upstream gradient shape does not match output");
  }

  MlpGradients grads;
  grads.params = params.zeros_like();
  Matrix delta = upstream.cwiseProduct(activation_deriv(layers.back().activation, cache.pre.back()));
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Matrix& below = l == 0 ? cache.input : cache.post[l - 1];
    grads.params.weights[l].noalias() = delta.transpose() * below;
    grads.params.biases[l] = delta.colwise().sum().transpose();
    Matrix back = delta * params.weights[l];
    if (l == 0) {
      grads.input = std::move(back);
    } else {
      Matrix local = activation_deriv(layers[l - 1].activation, cache.pre[l - 1]);
      if (cache.masks[l - 1].size() > 0) local = local.cwiseProduct(cache.masks[l - 1]);
      delta = back.cwiseProduct(local);
    }
  }
  return grads;
}

double mlp_loss_sq(const MlpParams& params, std::span<const LayerSpec> layers, const Matrix& x, const Matrix& y) {
  Rng unused(0);
  const Matrix out = mlp_forward(params, layers, x, RegularizerSpec{}, false, unused);
  if (out.rows() != y.rows() || out.cols() != y.cols()) throw DimensionMismatch("mlp_loss_sq: target shape");
  return 0.5 * (out - y).squaredNorm();
}

std::string_view optimizer_name(OptimizerAlgorithm a) {
  switch (a) {
    case OptimizerAlgorithm::SGD:
      return "sgd";
    case OptimizerAlgorithm::Adam:
      return "adam";
    case OptimizerAlgorithm::Nadam:
      return "nadam";
  }
  return "unknown";
}

OptimizerAlgorithm optimizer_from_name(std::string_view name) {
  for (auto a : {OptimizerAlgorithm::SGD, OptimizerAlgorithm::Adam, OptimizerAlgorithm::Nadam}) {
    if (optimizer_name(a) == name) return a;
  }
  throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

void validate_optimizer(const OptimizerConfig& config) {
  if (!(config.learning_rate > 0.0)) throw InvalidArgument("learning rate must be > 0");
  if (!(config.beta1 > 0.0 && config.beta1 < 1.0)) throw InvalidArgument("beta1 must lie in (0, 1)");
  if (!(config.beta2 > 0.0 && config.beta2 < 1.0)) throw InvalidArgument("beta2 must lie in (0, 1)");
  if (!(config.epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
}

OptimizerState OptimizerState::for_params(const MlpParams& params) {
  OptimizerState s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  return s;
}

void optimizer_step(OptimizerState& state, MlpParams& params, const MlpParams& grads, const OptimizerConfig& config) {
  if (grads.weights.size() != params.weights.size()) throw DimensionMismatch("optimizer_step: gradient layers");
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    if (grads.weights[l].rows() != params.weights[l].rows() || grads.weights[l].cols() != params.weights[l].cols() ||
        grads.biases[l].size() != params.biases[l].size()) {
      throw DimensionMismatch("optimizer_step: gradient shape mismatch in layer " + std::to_string(l));
    }
  }
  if (state.first_moment.weights.size() != params.weights.size()) state = OptimizerState::for_params(params);

  ++state.step;
  ++params.generation;
  const double lr = config.learning_rate;

  if (config.algorithm == OptimizerAlgorithm::SGD) {
    for_each_tensor(params, grads, [&](auto p, auto g) { p -= lr * g; });
    return;
  }

  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(b1, t);
  const double bias2 = 1.0 - std::pow(b2, t);
  const bool nesterov = config.algorithm == OptimizerAlgorithm::Nadam;

  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    auto update = [&](auto p, auto g, auto m, auto v) {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        // Nadam: look ahead with the current gradient blended into the momentum.
        const double direction = nesterov ? b1 * m_hat + (1.0 - b1) * g[i] / bias1 : m_hat;
        p[i] -= lr * direction / (std::sqrt(v_hat) + config.epsilon);
      }
    };
    update(params.weights[l].reshaped(), grads.weights[l].reshaped(), state.first_moment.weights[l].reshaped(),
           state.second_moment.weights[l].reshaped());
    update(params.biases[l].reshaped(), grads.biases[l].reshaped(), state.first_moment.biases[l].reshaped(),
           state.second_moment.biases[l].reshaped());
  }
}

}  // namespace dgcn
