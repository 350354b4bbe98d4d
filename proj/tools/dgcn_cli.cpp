// dgcn: train, predict, cross-validate, forecast and time non-stationary GP
// models from the command line.
//
// Exit codes: 0 success, 2 usage or configuration, 3 data, 4 numeric failure.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "dgcn/bench.hpp"
#include "dgcn/config.hpp"
#include "dgcn/error.hpp"
#include "dgcn/persistence.hpp"
#include "dgcn/timeseries.hpp"

namespace {

using namespace dgcn;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string data;
  std::string target;
  std::string out;

  CliConfig resolve() const {
    CliConfig c = config_path.empty() ? CliConfig{} : load_cli_config(config_path);
    if (seed) {
      c.seed = *seed;
      c.train.seed = *seed;
      c.protocol.seed = *seed;
    }
    if (!data.empty()) c.data = data;
    if (!target.empty()) c.target = target;
    if (!out.empty()) c.out = out;
    if (c.data.empty()) throw UsageError("--data is required");
    return c;
  }
};

void add_common(CLI::App* cmd, Common& common, bool with_target) {
  cmd->add_option("--data", common.data, "Input CSV");
  if (with_target) cmd->add_option("--target", common.target, "Target column name, or 'last'");
  cmd->add_option("--config", common.config_path, "JSON configuration file");
  cmd->add_option("--out", common.out, "Output path");
  cmd->add_option("--seed", common.seed, "Seed for every random choice");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

void write_json(const std::string& path, const Json& doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

void write_prediction_csv(std::ostream& out, const Prediction& p, const char* first_column, std::size_t first_index) {
  out << first_column << ",mean,variance,ci_low,ci_high\n" << std::setprecision(17);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    out << first_index + i << ',' << p.mean[j] << ',' << p.variance[j] << ',' << p.ci_low[j] << ',' << p.ci_high[j]
        << '\n';
  }
}

Json log_json(const TrainingLog& log) {
  Json epochs = Json::array();
  for (const auto& e : log.epochs) epochs.push_back({{"epoch", e.epoch}, {"mean_nll", e.mean_nll}, {"batches", e.batches}});
  Json jitter = Json::array();
  for (const auto& j : log.jitter_events) jitter.push_back({{"epoch", j.epoch}, {"batch", j.batch}, {"jitter", j.jitter}});
  return {{"epochs_run", log.epochs.size()},
          {"final_nll", log.epochs.empty() ? 0.0 : log.epochs.back().mean_nll},
          {"early_stopped", log.early_stopped},
          {"epochs", epochs},
          {"jitter_events", jitter}};
}

std::string with_suffix(const std::string& base, const std::string& suffix) { return base + suffix; }

int cmd_train(const Common& common) {
  CliConfig c = common.resolve();
  if (c.out.empty()) c.out = "model.dgcn";
  const Dataset data = load_csv(c.data, c.target);
  const TrainedModel model = fit(data, c.train);
  save_model(model, c.out);

  Json log = log_json(model.log);
  log["config"] = to_json(c);
  log["rows"] = data.size();
  log["inputs"] = data.column_names;
  log["target"] = data.target_name;
  write_json(with_suffix(c.out, ".log.json"), log);
  std::cout << "trained on " << data.size() << " rows for " << model.log.epochs.size()
            << " epochs, final mean NLL " << model.log.epochs.back().mean_nll << "; model written to " << c.out << '\n';
  return 0;
}

// Prediction inputs: the model's input columns, in any order, optionally
// alongside the target column.
Matrix prediction_inputs(const TrainedModel& model, const std::string& path) {
  const Table t = load_table(path);
  const std::size_t n_v = model.dims();
  bool by_name = !model.column_names.empty();
  for (const auto& name : model.column_names) {
    by_name = by_name && std::find(t.header.begin(), t.header.end(), name) != t.header.end();
  }
  if (by_name) {
    Matrix x(t.values.rows(), static_cast<Eigen::Index>(n_v));
    for (std::size_t j = 0; j < n_v; ++j) {
      const auto col = std::find(t.header.begin(), t.header.end(), model.column_names[j]) - t.header.begin();
      x.col(static_cast<Eigen::Index>(j)) = t.values.col(col);
    }
    if (t.header.size() > n_v + 1 ||
        (t.header.size() == n_v + 1 &&
         std::find(t.header.begin(), t.header.end(), model.target_name) == t.header.end())) {
      throw SchemaMismatch("'" + path + "' has unexpected extra columns");
    }
    return x;
  }
  if (t.header.size() != n_v) {
    throw SchemaMismatch("'" + path + "' has " + std::to_string(t.header.size()) + " columns, model expects " +
                         std::to_string(n_v) + " inputs");
  }
  return t.values;
}

int cmd_predict(const std::string& model_path, const std::string& data, std::size_t k, double alpha,
                bool include_noise, bool normal_ci, const std::string& out) {
  if (model_path.empty()) throw UsageError("--model is required");
  if (data.empty()) throw UsageError("--data is required");
  const TrainedModel model = load_model(model_path);
  const Matrix x = prediction_inputs(model, data);
  const Prediction p =
      predict_batched(model, x, k, alpha, include_noise, normal_ci ? IntervalMode::Normal : IntervalMode::Literal);
  if (out.empty()) {
    write_prediction_csv(std::cout, p, "row", 1);
  } else {
    auto f = open_out(out);
    write_prediction_csv(f, p, "row", 1);
  }
  return 0;
}

int cmd_crossval(const Common& common, const std::string& preset, bool baseline, const std::string& kernel) {
  CliConfig c = common.resolve();
  if (!preset.empty()) {
    const std::uint64_t seed = c.protocol.seed;
    c.protocol = protocol_preset(preset);
    c.protocol.seed = seed;
  }
  if (c.out.empty()) c.out = "crossval";
  const Dataset data = load_csv(c.data, c.target);
  const BenchReport report = baseline ? stationary_baseline(data, c.protocol, c.train, kernel_from_name(kernel))
                                      : run_protocol(data, c.protocol, c.train);
  {
    auto f = open_out(with_suffix(c.out, ".csv"));
    write_report_csv(f, report);
  }
  {
    auto f = open_out(with_suffix(c.out, ".json"));
    write_report_json(f, report);
  }
  std::cout << std::setprecision(6) << (baseline ? "stationary " : "dgcn ") << metric_name(report.metric) << " over "
            << report.runs.size() << " runs: " << report.min << " / " << report.mean << " / " << report.max
            << " (mean " << report.mean << " +- " << report.std << ")\n";
  return 0;
}

std::vector<double> finite_tail(const std::vector<double>& series) {
  // Forecasting starts after the last observed value.
  std::size_t end = series.size();
  while (end > 0 && !std::isfinite(series[end - 1])) --end;
  return {series.begin(), series.begin() + static_cast<std::ptrdiff_t>(end)};
}

int cmd_forecast(const Common& common, std::optional<std::size_t> lags, std::size_t steps, std::size_t k,
                 double alpha) {
  CliConfig c = common.resolve();
  if (lags) c.lags.n_lags = *lags;
  if (c.out.empty()) c.out = "forecast.csv";
  const std::vector<double> history = finite_tail(load_series(c.data));
  Prediction p;
  if (c.forecast_mode == ForecastMode::Recursive) {
    const TrainedModel model = fit(lag_embed(history, LagSpec{c.lags.n_lags, {0}}).dataset(), c.train);
    p = forecast_recursive(model, history, steps, k, alpha);
  } else {
    p = forecast_direct(fit_direct(history, c.lags.n_lags, steps, c.train), history, k, alpha);
  }
  auto f = open_out(c.out);
  f << "index,prediction,variance,ci_low,ci_high\n" << std::setprecision(17);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(i);
    f << history.size() + i + 1 << ',' << p.mean[j] << ',' << p.variance[j] << ',' << p.ci_low[j] << ','
      << p.ci_high[j] << '\n';
  }
  std::cout << "forecast " << steps << " steps after index " << history.size() << " into " << c.out << '\n';
  return 0;
}

int cmd_cats(const Common& common, const std::string& truth_path, std::vector<std::size_t> lags,
             const std::string& mode, std::size_t k) {
  CliConfig c = common.resolve();
  if (!lags.empty()) c.cats_lags = lags.size() == 1 ? std::vector<std::size_t>(5, lags[0]) : lags;
  if (c.cats_lags.size() != 5) throw UsageError("--lags takes one value or five");
  if (!mode.empty()) c.forecast_mode = mode == "direct" ? ForecastMode::Direct : ForecastMode::Recursive;
  if (c.out.empty()) c.out = "cats.csv";

  const std::vector<double> series = load_series(c.data);
  std::vector<double> truth;
  if (!truth_path.empty()) truth = load_series(truth_path);
  std::vector<LagSpec> specs;
  for (std::size_t l : c.cats_lags) specs.push_back(LagSpec{l, {0}});
  const CatsResult r = cats_protocol(series, specs, c.train, truth, c.forecast_mode, k);

  auto f = open_out(c.out);
  f << "index,prediction,variance,ci_low,ci_high\n" << std::setprecision(17);
  const BlockSpec blocks = BlockSpec::cats();
  std::size_t i = 0;
  for (const auto& [first, last] : blocks.blocks) {
    for (std::size_t t = first; t <= last; ++t, ++i) {
      const auto j = static_cast<Eigen::Index>(i);
      f << t << ',' << r.detail.mean[j] << ',' << r.detail.variance[j] << ',' << r.detail.ci_low[j] << ','
        << r.detail.ci_high[j] << '\n';
    }
  }
  if (r.e1 >= 0.0) {
    for (std::size_t b = 0; b < r.block_scores.size(); ++b) {
      std::cout << "block " << b + 1 << " (" << blocks.blocks[b].first << "-" << blocks.blocks[b].second
                << ", lags " << r.lags_used[b] << "): " << r.block_scores[b] << '\n';
    }
    std::cout << "E1 " << std::setprecision(10) << r.e1 << '\n';
  } else {
    std::cout << "predictions written to " << c.out << " (no truth given, E1 not computed)\n";
  }
  return 0;
}

std::vector<std::size_t> parse_batches(const std::vector<std::string>& items) {
  std::vector<std::size_t> out;
  for (const auto& s : items) {
    if (s == "full" || s == "N") {
      out.push_back(0);
    } else {
      try {
        std::size_t used = 0;
        const unsigned long v = std::stoul(s, &used);
        if (used != s.size() || v == 0) throw std::invalid_argument(s);
        out.push_back(v);
      } catch (const std::exception&) {
        throw UsageError("--batch expects positive integers or 'full', got '" + s + "'");
      }
    }
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Non-stationary Gaussian process regression with learned covariance"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dgcn 1.0.0");

  Common common;

  auto* train = app.add_subcommand("train", "Fit a model to a CSV dataset");
  add_common(train, common, true);

  std::string model_path;
  std::size_t k = 0;
  double alpha = 0.05;
  bool include_noise = false;
  bool normal_ci = false;
  auto* predict = app.add_subcommand("predict", "Predict with a saved model");
  predict->add_option("--model", model_path, "Model file written by train");
  predict->add_option("--data", common.data, "CSV with the model's input columns");
  predict->add_option("--k", k, "Neighbors per prediction (0: model default)");
  predict->add_option("--alpha", alpha, "Confidence level alpha in (0, 1)");
  predict->add_flag("--include-noise", include_noise, "Add the predicted noise variance");
  predict->add_flag("--normal-ci", normal_ci, "Normal intervals instead of the t-based mean interval");
  predict->add_option("--out", common.out, "Predictions CSV (default: stdout)");

  std::string preset;
  bool baseline = false;
  std::string kernel = "squared_exp";
  auto* crossval = app.add_subcommand("crossval", "Repeated cross-validation report");
  add_common(crossval, common, true);
  crossval->add_option("--preset", preset, "boston-log | boston-fixed | boston-std | boston-raw | concrete");
  crossval->add_flag("--baseline", baseline, "Score the stationary single-kernel baseline instead");
  crossval->add_option("--kernel", kernel, "Baseline kernel");

  std::optional<std::size_t> lags;
  std::size_t steps = 20;
  auto* forecast = app.add_subcommand("forecast", "Recursive forecast past the end of a series");
  add_common(forecast, common, false);
  forecast->add_option("--lags", lags, "Number of lagged inputs");
  forecast->add_option("--steps", steps, "Steps to forecast");
  forecast->add_option("--k", k, "Neighbors per prediction (0: model default)");
  forecast->add_option("--alpha", alpha, "Confidence level alpha in (0, 1)");

  std::string truth_path;
  std::vector<std::size_t> cats_lags;
  std::string mode;
  auto* cats = app.add_subcommand("cats", "Fill the five CATS blocks and score E1");
  add_common(cats, common, false);
  cats->add_option("--truth", truth_path, "The 100 true block values, one per line");
  cats->add_option("--lags", cats_lags, "Lag count, or one per block")->delimiter(',');
  cats->add_option("--mode", mode, "recursive | direct")->check(CLI::IsMember({"recursive", "direct"}));
  cats->add_option("--k", k, "Neighbors per prediction (0: model default)");

  std::vector<std::size_t> sizes;
  std::vector<std::string> batches{"200"};
  std::size_t epochs = 100;
  std::size_t full_epochs = 0;
  std::size_t dims = 5;
  std::size_t cap_mb = 2048;
  auto* bench_time = app.add_subcommand("bench-time", "Training time versus data size");
  bench_time->add_option("--sizes", sizes, "Training set sizes")->delimiter(',')->required();
  bench_time->add_option("--batch", batches, "Batch sizes, 'full' for N_b = N")->delimiter(',');
  bench_time->add_option("--epochs", epochs, "Epochs per run");
  bench_time->add_option("--full-epochs", full_epochs, "Epochs for full-batch rows (0: --epochs)");
  bench_time->add_option("--dims", dims, "Synthetic input dimensions");
  bench_time->add_option("--memory-cap-mb", cap_mb, "Skip batches estimated above this");
  bench_time->add_option("--config", common.config_path, "JSON configuration file");
  bench_time->add_option("--out", common.out, "Timing CSV (default: stdout)");
  bench_time->add_option("--seed", common.seed, "Seed for the synthetic data and training");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(common);
    if (*predict) return cmd_predict(model_path, common.data, k, alpha, include_noise, normal_ci, common.out);
    if (*crossval) return cmd_crossval(common, preset, baseline, kernel);
    if (*forecast) return cmd_forecast(common, lags, steps, k, alpha);
    if (*cats) return cmd_cats(common, truth_path, cats_lags, mode, k);
    if (*bench_time) {
      CliConfig c = common.config_path.empty() ? CliConfig{} : load_cli_config(common.config_path);
      TimingOptions opt;
      opt.sizes = sizes;
      opt.batch_sizes = parse_batches(batches);
      opt.epochs = epochs;
      opt.full_batch_epochs = full_epochs;
      opt.dims = dims;
      opt.memory_cap_bytes = cap_mb << 20;
      opt.config = c.train;
      opt.seed = common.seed.value_or(c.seed);
      opt.config.seed = opt.seed;
      const auto rows = timing_benchmark(opt);
      if (common.out.empty()) {
        write_timing_csv(std::cout, rows);
      } else {
        auto f = open_out(common.out);
        write_timing_csv(f, rows);
      }
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dgcn::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const dgcn::InvalidAlpha& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const dgcn::NotPositiveDefinite& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const dgcn::NonFiniteLoss& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const dgcn::Error& e) {
    // IoError, ParseError, MissingColumn, SchemaMismatch, format errors, ...
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  }
}
