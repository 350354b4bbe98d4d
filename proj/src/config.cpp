#include "dgcn/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "dgcn/error.hpp"

namespace dgcn {

namespace {

// Reads fields out of one JSON object and rejects whatever it never asked for.
class Fields {
 public:
  Fields(const Json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
    if (!doc_.is_object()) throw InvalidArgument(where_ + ": expected a JSON object");
  }

  template <typename T>
  void read(const char* key, T& value) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    if (!counts_ok<T>(*it)) throw InvalidArgument(where_ + "." + key + ": expected a non-negative integer");
    try {
      value = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InvalidArgument(where_ + "." + key + ": wrong type");
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.contains(key)) throw InvalidArgument(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  // get<size_t>() would silently wrap -3 and truncate 2.5.
  template <typename T>
  static bool counts_ok(const Json& v) {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      if (!v.is_array()) return true;
      for (const auto& e : v) {
        if (!counts_ok<std::size_t>(e)) return false;
      }
      return true;
    } else {
      return true;
    }
  }

  const Json& doc_;
  std::string where_;
  std::set<std::string> seen_;
};

Json net_json(const NetSpec& spec) {
  Json acts = Json::array();
  for (Activation a : spec.activations) acts.push_back(std::string(activation_name(a)));
  return {{"hidden", spec.hidden}, {"activations", acts}};
}

NetSpec net_from_json(const Json& doc, const std::string& where) {
  NetSpec spec;
  Fields f(doc, where);
  f.read("hidden", spec.hidden);
  std::vector<std::string> acts;
  bool has_acts = doc.contains("activations");
  f.read("activations", acts);
  f.finish();
  if (has_acts) {
    spec.activations.clear();
    for (const auto& a : acts) spec.activations.push_back(activation_from_name(a));
  } else if (spec.activations.size() != spec.hidden.size()) {
    spec.activations.assign(spec.hidden.size(), Activation::Sigmoid);
  }
  return spec;
}

}  // namespace

Json to_json(const TrainConfig& c) {
  Json kernels = Json::array();
  for (KernelId id : c.kernels.kernels()) kernels.push_back(std::string(kernel_name(id)));
  return {
      {"kernels", kernels},
      {"theta_net", net_json(c.theta_net)},
      {"sigma_net", net_json(c.sigma_net)},
      {"regularizer", {{"dropout_rate", c.regularizer.dropout_rate}, {"input_noise_std", c.regularizer.input_noise_std}}},
      {"optimizer",
       {{"algorithm", std::string(optimizer_name(c.optimizer.algorithm))},
        {"learning_rate", c.optimizer.learning_rate},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"epsilon", c.optimizer.epsilon}}},
      {"sigma_learning_rate", c.sigma_learning_rate},
      {"batch_size", c.batch_size},
      {"predict_k", c.predict_k},
      {"max_epochs", c.max_epochs},
      {"early_stop_tol", c.early_stop_tol},
      {"patience", c.patience},
      {"seed", c.seed},
      {"standardize_y", c.standardize_y},
      {"theta_offset", c.theta_offset},
      {"sigma2_init", c.sigma2_init},
      {"neighbor_strategy", std::string(strategy_name(c.neighbor_strategy))},
  };
}

TrainConfig train_config_from_json(const Json& doc) {
  TrainConfig c;
  Fields f(doc, "train");

  if (const Json* k = f.child("kernels")) {
    if (!k->is_array() || k->empty()) throw InvalidArgument("train.kernels: expected a non-empty list of names");
    std::vector<KernelId> ids;
    for (const auto& name : *k) {
      if (!name.is_string()) throw InvalidArgument("train.kernels: expected kernel names");
      ids.push_back(kernel_from_name(name.get<std::string>()));
    }
    c.kernels = KernelSet(std::move(ids));
  }
  if (const Json* n = f.child("theta_net")) c.theta_net = net_from_json(*n, "train.theta_net");
  if (const Json* n = f.child("sigma_net")) c.sigma_net = net_from_json(*n, "train.sigma_net");
  if (const Json* r = f.child("regularizer")) {
    Fields g(*r, "train.regularizer");
    g.read("dropout_rate", c.regularizer.dropout_rate);
    g.read("input_noise_std", c.regularizer.input_noise_std);
    g.finish();
  }
  if (const Json* o = f.child("optimizer")) {
    Fields g(*o, "train.optimizer");
    std::string algo(optimizer_name(c.optimizer.algorithm));
    g.read("algorithm", algo);
    g.read("learning_rate", c.optimizer.learning_rate);
    g.read("beta1", c.optimizer.beta1);
    g.read("beta2", c.optimizer.beta2);
    g.read("epsilon", c.optimizer.epsilon);
    g.finish();
    c.optimizer.algorithm = optimizer_from_name(algo);
  }
  f.read("sigma_learning_rate", c.sigma_learning_rate);
  f.read("batch_size", c.batch_size);
  f.read("predict_k", c.predict_k);
  f.read("max_epochs", c.max_epochs);
  f.read("early_stop_tol", c.early_stop_tol);
  f.read("patience", c.patience);
  f.read("seed", c.seed);
  f.read("standardize_y", c.standardize_y);
  f.read("theta_offset", c.theta_offset);
  f.read("sigma2_init", c.sigma2_init);
  std::string strategy(strategy_name(c.neighbor_strategy));
  f.read("neighbor_strategy", strategy);
  c.neighbor_strategy = strategy_from_name(strategy);
  f.finish();

  validate_config(c);
  return c;
}

Json to_json(const Protocol& p) {
  return {
      {"kind", std::string(protocol_kind_name(p.kind))},
      {"folds", p.folds},
      {"repeats", p.repeats},
      {"train_size", p.train_size},
      {"test_size", p.test_size},
      {"transform", std::string(transform_name(p.transform))},
      {"metric", std::string(metric_name(p.metric))},
      {"seed", p.seed},
  };
}

Protocol protocol_from_json(const Json& doc, Protocol p) {
  Fields f(doc, "protocol");
  std::string kind(protocol_kind_name(p.kind));
  std::string transform(transform_name(p.transform));
  std::string metric(metric_name(p.metric));
  std::string preset;
  f.read("preset", preset);
  if (!preset.empty()) {
    p = protocol_preset(preset);
    kind = protocol_kind_name(p.kind);
    transform = transform_name(p.transform);
    metric = metric_name(p.metric);
  }
  f.read("kind", kind);
  f.read("folds", p.folds);
  f.read("repeats", p.repeats);
  f.read("train_size", p.train_size);
  f.read("test_size", p.test_size);
  f.read("transform", transform);
  f.read("metric", metric);
  f.read("seed", p.seed);
  f.finish();
  p.kind = protocol_kind_from_name(kind);
  p.transform = transform_from_name(transform);
  p.metric = metric_from_name(metric);
  validate_protocol(p);
  return p;
}

Json to_json(const LagSpec& spec) { return {{"n_lags", spec.n_lags}, {"horizons", spec.horizons}}; }

LagSpec lag_spec_from_json(const Json& doc) {
  LagSpec spec;
  Fields f(doc, "lags");
  f.read("n_lags", spec.n_lags);
  f.read("horizons", spec.horizons);
  f.finish();
  validate_lags(spec);
  return spec;
}

Json to_json(const CliConfig& c) {
  Json doc = {
      {"train", to_json(c.train)},
      {"protocol", to_json(c.protocol)},
      {"lags", to_json(c.lags)},
      {"cats_lags", c.cats_lags},
      {"forecast_mode", c.forecast_mode == ForecastMode::Recursive ? "recursive" : "direct"},
      {"data", c.data},
      {"target", c.target},
      {"out", c.out},
  };
  // Written only when it agrees with the nested seeds, which it would override on reading.
  if (c.train.seed == c.seed && c.protocol.seed == c.seed) doc["seed"] = c.seed;
  return doc;
}

CliConfig cli_config_from_json(const Json& doc) {
  CliConfig c;
  Fields f(doc, "config");
  if (const Json* t = f.child("train")) c.train = train_config_from_json(*t);
  if (const Json* p = f.child("protocol")) c.protocol = protocol_from_json(*p);
  if (const Json* l = f.child("lags")) c.lags = lag_spec_from_json(*l);
  f.read("cats_lags", c.cats_lags);
  std::string mode = c.forecast_mode == ForecastMode::Recursive ? "recursive" : "direct";
  f.read("forecast_mode", mode);
  f.read("data", c.data);
  f.read("target", c.target);
  f.read("out", c.out);
  const bool has_seed = doc.contains("seed");
  f.read("seed", c.seed);
  f.finish();

  if (mode == "recursive") {
    c.forecast_mode = ForecastMode::Recursive;
  } else if (mode == "direct") {
    c.forecast_mode = ForecastMode::Direct;
  } else {
    throw InvalidArgument("config.forecast_mode: expected 'recursive' or 'direct'");
  }
  if (c.cats_lags.size() != 5) throw InvalidArgument("config.cats_lags: expected five lag counts");
  for (std::size_t lags : c.cats_lags) {
    if (lags < 1) throw InvalidArgument("config.cats_lags: lag counts must be >= 1");
  }
  // A top-level seed drives every stochastic part of the run.
  if (has_seed) {
    c.train.seed = c.seed;
    c.protocol.seed = c.seed;
  }
  return c;
}

CliConfig load_cli_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& err) {
    throw InvalidArgument("config file '" + path + "' is not valid JSON: " + err.what());
  }
  return cli_config_from_json(doc);
}

}  // namespace dgcn
