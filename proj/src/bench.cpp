#include "dgcn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dgcn/config.hpp"
#include "dgcn/error.hpp"
#include "dgcn/gp.hpp"
#include "dgcn/parallel.hpp"

namespace dgcn {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Splits one CSV record. Handles double-quoted fields with "" escapes.
std::vector<std::string> split_record(const std::string& line, std::size_t row) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError(row, fields.size() + 1, "unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (in.bad()) throw IoError("read error on '" + path + "'");
  return lines;
}

Vector gather(const Vector& v, const std::vector<std::size_t>& rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(rows[i])];
  return out;
}

Dataset transformed(const Dataset& data, TargetTransform t) {
  Dataset out = data;
  switch (t) {
    case TargetTransform::None:
      break;
    case TargetTransform::Log:
      if ((data.y.array() <= 0.0).any()) throw InvalidArgument("log transform needs a strictly positive target");
      out.y = data.y.array().log().matrix();
      break;
    case TargetTransform::Standardize: {
      const double mean = data.y.mean();
      const double var = (data.y.array() - mean).square().mean();
      out.y = ((data.y.array() - mean) / std::max(std::sqrt(var), Scaler::kStdFloor)).matrix();
      break;
    }
  }
  return out;
}

struct Split {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

std::vector<Split> make_splits(std::size_t n, const Protocol& p) {
  std::vector<Split> splits;
  if (p.kind == ProtocolKind::FixedSplitRepeated) {
    if (p.train_size + p.test_size > n) {
      throw InvalidArgument("fixed split needs " + std::to_string(p.train_size + p.test_size) + " rows, data has " +
                            std::to_string(n));
    }
    Split s;
    s.train.resize(p.train_size);
    std::iota(s.train.begin(), s.train.end(), std::size_t{0});
    s.test.resize(p.test_size);
    std::iota(s.test.begin(), s.test.end(), p.train_size);
    for (std::size_t r = 0; r < p.repeats; ++r) {
      s.repeat = r;
      splits.push_back(s);
    }
    return splits;
  }
  if (p.folds > n) throw InvalidArgument("more folds than rows");
  for (std::size_t r = 0; r < p.repeats; ++r) {
    const auto folds = kfold_partition(n, p.folds, p.seed, r);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      Split s;
      s.repeat = r;
      s.fold = f;
      s.test = folds[f];
      for (std::size_t g = 0; g < folds.size(); ++g) {
        if (g != f) s.train.insert(s.train.end(), folds[g].begin(), folds[g].end());
      }
      splits.push_back(std::move(s));
    }
  }
  return splits;
}

// Stationary parameters packed as a two-tensor MlpParams so the network
// optimizers apply unchanged: weights[0] = theta (1 x n_v), weights[1] = raw
// noise s with sigma2 = softplus(s) + floor.
MlpParams pack_stationary(const Vector& theta, double raw_noise) {
  MlpParams p;
  p.weights.push_back(theta.transpose());
  p.weights.push_back(Matrix::Constant(1, 1, raw_noise));
  p.biases.assign(2, Vector(0));
  return p;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

Table load_table(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(1, 1, "empty file, expected a header row");

  auto header = split_record(lines[0], 1);
  for (auto& h : header) h = trim(h);
  // An unnamed leading column carries row labels and is skipped.
  const std::size_t first = !header.empty() && header[0].empty() ? 1 : 0;

  std::vector<std::vector<double>> rows;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (trim(lines[r]).empty()) continue;
    const auto fields = split_record(lines[r], r + 1);
    if (fields.size() != header.size()) {
      throw ParseError(r + 1, std::min(fields.size(), header.size()) + 1,
                       "expected " + std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> values;
    for (std::size_t c = first; c < fields.size(); ++c) {
      double v = 0.0;
      if (!parse_double(trim(fields[c]), v) || !std::isfinite(v)) {
        throw ParseError(r + 1, c + 1, "'" + fields[c] + "' is not a finite number");
      }
      values.push_back(v);
    }
    rows.push_back(std::move(values));
  }

  Table t;
  t.header.assign(header.begin() + static_cast<std::ptrdiff_t>(first), header.end());
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return t;
}

Dataset load_csv(const std::string& path, const std::string& target) {
  const Table t = load_table(path);
  if (t.header.size() < 2) throw ParseError(1, 1, "need at least one input column and a target");
  if (t.values.rows() == 0) throw EmptyDataset("'" + path + "' has no data rows");

  std::size_t target_col = t.header.size() - 1;
  if (target != "last") {
    auto it = std::find(t.header.begin(), t.header.end(), target);
    if (it == t.header.end()) throw MissingColumn("target column '" + target + "' not found in '" + path + "'");
    target_col = static_cast<std::size_t>(it - t.header.begin());
  }

  Dataset d;
  d.x.resize(t.values.rows(), t.values.cols() - 1);
  d.y = t.values.col(static_cast<Eigen::Index>(target_col));
  Eigen::Index out = 0;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (c == target_col) {
      d.target_name = t.header[c];
      continue;
    }
    d.x.col(out++) = t.values.col(static_cast<Eigen::Index>(c));
    d.column_names.push_back(t.header[c]);
  }
  return d;
}

std::vector<double> load_series(const std::string& path) {
  const auto lines = read_lines(path);
  std::vector<double> series;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto fields = split_record(lines[r], r + 1);
    if (fields.size() != 1) throw ParseError(r + 1, 2, "series files hold a single column");
    const std::string cell = trim(fields[0]);
    double v = 0.0;
    if (cell.empty() || cell == "NaN" || cell == "nan" || cell == "NA") {
      series.push_back(std::numeric_limits<double>::quiet_NaN());
    } else if (parse_double(cell, v)) {
      series.push_back(v);
    } else if (r == 0) {
      continue;  // header
    } else {
      throw ParseError(r + 1, 1, "'" + cell + "' is not a number");
    }
  }
  return series;
}

std::string_view protocol_kind_name(ProtocolKind k) {
  return k == ProtocolKind::KFoldRepeated ? "kfold_repeated" : "fixed_split_repeated";
}

ProtocolKind protocol_kind_from_name(std::string_view name) {
  if (name == "kfold_repeated") return ProtocolKind::KFoldRepeated;
  if (name == "fixed_split_repeated") return ProtocolKind::FixedSplitRepeated;
  throw InvalidArgument("unknown protocol kind '" + std::string(name) + "'");
}

std::string_view transform_name(TargetTransform t) {
  switch (t) {
    case TargetTransform::None:
      return "none";
    case TargetTransform::Log:
      return "log";
    case TargetTransform::Standardize:
      return "standardize";
  }
  return "unknown";
}

TargetTransform transform_from_name(std::string_view name) {
  if (name == "none") return TargetTransform::None;
  if (name == "log") return TargetTransform::Log;
  if (name == "standardize") return TargetTransform::Standardize;
  throw InvalidArgument("unknown target transform '" + std::string(name) + "'");
}

std::string_view metric_name(Metric m) { return m == Metric::RMSE ? "rmse" : "mse"; }

Metric metric_from_name(std::string_view name) {
  if (name == "rmse") return Metric::RMSE;
  if (name == "mse") return Metric::MSE;
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

void validate_protocol(const Protocol& p) {
  if (p.repeats < 1) throw InvalidArgument("repeats must be >= 1");
  if (p.kind == ProtocolKind::KFoldRepeated && p.folds < 2) throw InvalidArgument("folds must be >= 2");
  if (p.kind == ProtocolKind::FixedSplitRepeated && (p.train_size < 2 || p.test_size < 1)) {
    throw InvalidArgument("fixed split needs train_size >= 2 and test_size >= 1");
  }
}

Protocol protocol_preset(std::string_view name) {
  Protocol p;
  if (name == "boston-log") {
    p.transform = TargetTransform::Log;
  } else if (name == "boston-fixed") {
    p.kind = ProtocolKind::FixedSplitRepeated;
    p.train_size = 455;
    p.test_size = 51;
    p.repeats = 25;
    p.transform = TargetTransform::Standardize;
  } else if (name == "boston-std") {
    p.transform = TargetTransform::Standardize;
  } else if (name == "boston-raw" || name == "concrete") {
    p.transform = TargetTransform::None;
  } else {
    throw InvalidArgument("unknown protocol preset '" + std::string(name) + "'");
  }
  return p;
}

std::vector<std::string> protocol_preset_names() {
  return {"boston-log", "boston-fixed", "boston-std", "boston-raw", "concrete"};
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t folds, std::uint64_t seed,
                                                      std::size_t repeat) {
  if (folds < 1 || folds > n) throw InvalidArgument("fold count must lie in [1, n]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, repeat));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t at = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t size = n / folds + (f < n % folds ? 1 : 0);
    out[f].assign(order.begin() + static_cast<std::ptrdiff_t>(at), order.begin() + static_cast<std::ptrdiff_t>(at + size));
    at += size;
  }
  return out;
}

void BenchReport::summarize() {
  if (runs.empty()) {
    min = mean = max = std = 0.0;
    return;
  }
  min = std::numeric_limits<double>::infinity();
  max = -min;
  double sum = 0.0;
  for (const auto& r : runs) {
    min = std::min(min, r.metric_value);
    max = std::max(max, r.metric_value);
    sum += r.metric_value;
  }
  mean = sum / static_cast<double>(runs.size());
  double ss = 0.0;
  for (const auto& r : runs) ss += (r.metric_value - mean) * (r.metric_value - mean);
  std = runs.size() > 1 ? std::sqrt(ss / static_cast<double>(runs.size() - 1)) : 0.0;
}

double rmse(const Vector& truth, const Vector& pred) {
  if (truth.size() != pred.size()) throw DimensionMismatch("rmse: length mismatch");
  if (truth.size() == 0) return 0.0;
  return std::sqrt((truth - pred).squaredNorm() / static_cast<double>(truth.size()));
}

std::string fingerprint_of(std::string_view text) {
  // FNV-1a, 64 bit
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

BenchReport run_protocol(const Dataset& data, const Protocol& protocol, const Learner& learner,
                         const std::string& fingerprint) {
  validate_protocol(protocol);
  validate_dataset(data, 2);
  const Dataset work = transformed(data, protocol.transform);
  const auto splits = make_splits(work.size(), protocol);

  BenchReport report;
  report.metric = protocol.metric;
  report.fingerprint = fingerprint;
  report.runs.resize(splits.size());
  const auto wall = Clock::now();
  parallel_for(splits.size(), [&](std::size_t i) {
    const Split& s = splits[i];
    const auto start = Clock::now();
    const Vector pred = learner(work.subset(s.train), work.subset(s.test).x, mix_seed(protocol.seed, 10'000 + i));
    const double err = rmse(gather(work.y, s.test), pred);
    RunResult& r = report.runs[i];
    r.run_id = i;
    r.repeat = s.repeat;
    r.fold = s.fold;
    r.mse = err * err;
    r.metric_value = protocol.metric == Metric::RMSE ? err : err * err;
    r.seconds = seconds_since(start);
  });
  report.wall_seconds = seconds_since(wall);
  report.summarize();
  return report;
}

BenchReport run_protocol(const Dataset& data, const Protocol& protocol, const TrainConfig& config) {
  validate_config(config);
  Learner learner = [&config](const Dataset& train, const Matrix& x_test, std::uint64_t seed) {
    TrainConfig c = config;
    c.seed = seed;
    const TrainedModel model = fit(train, c);
    return predict_batched(model, x_test, 0, 0.05, false).mean;
  };
  const Json fp = {{"model", "dgcn"}, {"train", to_json(config)}, {"protocol", to_json(protocol)}};
  return run_protocol(data, protocol, learner, fingerprint_of(fp.dump()));
}

StationaryModel fit_stationary(const Dataset& data, const TrainConfig& config, KernelId kernel) {
  validate_config(config);
  validate_dataset(data, 2);

  StationaryModel model;
  model.kernel = kernel;
  model.scaler = Scaler::fit(data, config.standardize_y);
  model.x = model.scaler.transform_x(data.x);
  model.y = model.scaler.transform_y(data.y);
  const std::size_t n = data.size();
  const std::size_t n_v = data.dims();
  const KernelSet set = KernelSet::single(kernel);

  MlpParams params = pack_stationary(Vector::Constant(static_cast<Eigen::Index>(n_v), config.theta_offset),
                                     std::log(std::expm1(config.sigma2_init - kSigma2Floor)));
  OptimizerState state = OptimizerState::for_params(params);
  Rng rng(mix_seed(config.seed, 1000));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  std::size_t stalled = 0;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double nll_sum = 0.0;
    for (const auto& rows : partition_batches(order, std::min(config.batch_size, n), n_v)) {
      const Vector theta = params.weights[0].row(0).transpose();
      const double raw = params.weights[1](0, 0);
      GpBatch batch;
      batch.x = model.x(rows, Eigen::all);
      batch.y = gather(model.y, rows);
      batch.hyper.theta = theta.transpose().replicate(static_cast<Eigen::Index>(rows.size()), 1);
      batch.hyper.sigma2 = Vector::Constant(static_cast<Eigen::Index>(rows.size()), softplus(raw) + kSigma2Floor);

      const HyperGradient g = nll_hyper_grad(batch, set);
      if (!std::isfinite(g.nll)) throw NonFiniteLoss("stationary fit: non-finite likelihood");
      MlpParams grad = params.zeros_like();
      grad.weights[0] = g.d_theta.colwise().sum();
      grad.weights[1](0, 0) = g.d_sigma2.sum() / (1.0 + std::exp(-raw));
      optimizer_step(state, params, grad, config.optimizer);
      nll_sum += g.nll;
    }
    const double mean_nll = nll_sum / static_cast<double>(n);
    model.epoch_nll.push_back(mean_nll);
    const double improvement = (best - mean_nll) / std::max(std::abs(best), 1e-12);
    stalled = std::isfinite(best) && improvement < config.early_stop_tol ? stalled + 1 : 0;
    best = std::min(best, mean_nll);
    if (config.patience > 0 && stalled >= config.patience) break;
  }
  model.theta = params.weights[0].row(0).transpose();
  model.sigma2 = softplus(params.weights[1](0, 0)) + kSigma2Floor;
  return model;
}

Vector predict_stationary(const StationaryModel& model, const Matrix& x_raw) {
  if (x_raw.rows() == 0) return Vector(0);
  const Matrix xs = model.scaler.transform_x(x_raw);
  const auto n = model.x.rows();
  const auto m = xs.rows();
  GpBatch train{model.x, model.y,
                {model.theta.transpose().replicate(n, 1), Vector::Constant(n, model.sigma2)}};
  const HyperField star{model.theta.transpose().replicate(m, 1), Vector::Constant(m, model.sigma2)};
  const Prediction p = predict(train, xs, star, KernelSet::single(model.kernel), 0.05, false, IntervalMode::Normal);
  return model.scaler.inverse_y(p.mean);
}

BenchReport stationary_baseline(const Dataset& data, const Protocol& protocol, const TrainConfig& config,
                                KernelId kernel) {
  validate_config(config);
  Learner learner = [&config, kernel](const Dataset& train, const Matrix& x_test, std::uint64_t seed) {
    TrainConfig c = config;
    c.seed = seed;
    return predict_stationary(fit_stationary(train, c, kernel), x_test);
  };
  const Json fp = {{"model", "stationary"},
                   {"kernel", std::string(kernel_name(kernel))},
                   {"train", to_json(config)},
                   {"protocol", to_json(protocol)}};
  return run_protocol(data, protocol, learner, fingerprint_of(fp.dump()));
}

void write_report_csv(std::ostream& out, const BenchReport& report) {
  out << "run_id,repeat,fold,metric_value,seconds\n";
  out << std::setprecision(17);
  for (const auto& r : report.runs) {
    out << r.run_id << ',' << r.repeat << ',' << r.fold << ',' << r.metric_value << ',' << r.seconds << '\n';
  }
}

void write_report_json(std::ostream& out, const BenchReport& report) {
  const Json doc = {{"metric", std::string(metric_name(report.metric))},
                    {"runs", report.runs.size()},
                    {"min", report.min},
                    {"mean", report.mean},
                    {"max", report.max},
                    {"std", report.std},
                    {"wall_seconds", report.wall_seconds},
                    {"config_fingerprint", report.fingerprint}};
  out << doc.dump(2) << '\n';
}

Dataset timing_dataset(std::size_t n, std::size_t dims, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 7));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> freq(dims);
  std::vector<double> phase(dims);
  for (std::size_t j = 0; j < dims; ++j) {
    freq[j] = 1.0 + 4.0 * unit(rng);
    phase[j] = 6.283185307179586 * unit(rng);
  }
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
  d.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double y = 0.0;
    for (std::size_t j = 0; j < dims; ++j) {
      const double x = unit(rng);
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x;
      y += std::sin(6.283185307179586 * freq[j] * x + phase[j]);
    }
    d.y[static_cast<Eigen::Index>(i)] = y;
  }
  for (std::size_t j = 0; j < dims; ++j) d.column_names.push_back("x" + std::to_string(j + 1));
  d.target_name = "y";
  return d;
}

std::size_t batch_memory_bytes(std::size_t n, std::size_t dims, std::size_t n_kernels) {
  // Square matrices alive at the gradient peak: distances, per-kernel
  // covariances, K, its factor, inverse, G and the chain matrix, plus the
  // n x n_v warped coordinates per kernel.
  const std::size_t squares = 6 + 2 * n_kernels;
  return sizeof(double) * (squares * n * n + 4 * n * dims * n_kernels);
}

std::vector<TimingRow> timing_benchmark(const TimingOptions& opt) {
  if (opt.sizes.empty()) throw InvalidArgument("timing benchmark needs at least one size");
  if (opt.epochs < 1) throw InvalidArgument("timing benchmark needs epochs >= 1");
  TrainConfig base = opt.config;
  base.patience = 0;
  validate_config(base);

  {
    // Warm-up: touches the allocator and code paths, not timed.
    TrainConfig warm = base;
    warm.max_epochs = 1;
    warm.batch_size = 50;
    fit(timing_dataset(100, opt.dims, opt.seed), warm);
  }

  std::vector<TimingRow> rows;
  for (std::size_t b : opt.batch_sizes) {
    for (std::size_t n : opt.sizes) {
      TimingRow row;
      row.n = n;
      row.batch_size = b == 0 ? n : std::min(b, n);
      row.epochs = b == 0 && opt.full_batch_epochs > 0 ? opt.full_batch_epochs : opt.epochs;
      const std::size_t need = batch_memory_bytes(row.batch_size, opt.dims, base.kernels.size());
      try {
        if (need > opt.memory_cap_bytes) {
          throw MemoryCapExceeded("batch of " + std::to_string(row.batch_size) + " needs ~" +
                                  std::to_string(need >> 20) + " MiB, cap is " +
                                  std::to_string(opt.memory_cap_bytes >> 20) + " MiB");
        }
        const Dataset data = timing_dataset(n, opt.dims, opt.seed);
        TrainConfig c = base;
        c.batch_size = row.batch_size;
        c.max_epochs = row.epochs;
        const auto start = Clock::now();
        fit(data, c);
        row.seconds = seconds_since(start);
        row.sec_per_epoch = row.seconds / static_cast<double>(row.epochs);
      } catch (const MemoryCapExceeded& err) {
        row.skipped = true;
        row.reason = err.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows) {
  out << "N,N_b,epochs,seconds,sec_per_epoch,skipped,reason\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.n << ',' << r.batch_size << ',' << r.epochs << ',' << r.seconds << ',' << r.sec_per_epoch << ','
        << (r.skipped ? 1 : 0) << ",\"" << r.reason << "\"\n";
  }
}

}  // namespace dgcn
