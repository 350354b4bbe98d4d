#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "dgcn/dataset.hpp"
#include "dgcn/kernels.hpp"
#include "dgcn/trainer.hpp"

namespace dgcn {

/// Reads a numeric CSV with a header row. `target` names the output column,
/// or "last" for the final one. Quoted fields are unquoted; an empty header
/// name (an R-style row-name column) is dropped. Throws IoError, MissingColumn
/// or ParseError with 1-based file coordinates (the header is row 1).
Dataset load_csv(const std::string& path, const std::string& target = "last");

struct Table {
  std::vector<std::string> header;
  Matrix values;
};

// Every named column of a numeric CSV, same rules as load_csv.
Table load_table(const std::string& path);

// Single-column series, header optional. Empty fields and "NaN" become NaN.
std::vector<double> load_series(const std::string& path);

enum class ProtocolKind { KFoldRepeated, FixedSplitRepeated };
enum class TargetTransform { None, Log, Standardize };
enum class Metric { RMSE, MSE };

std::string_view protocol_kind_name(ProtocolKind k);
ProtocolKind protocol_kind_from_name(std::string_view name);
std::string_view transform_name(TargetTransform t);
TargetTransform transform_from_name(std::string_view name);
std::string_view metric_name(Metric m);
Metric metric_from_name(std::string_view name);

struct Protocol {
  ProtocolKind kind = ProtocolKind::KFoldRepeated;
  std::size_t folds = 10;
  std::size_t repeats = 20;
  // Fixed split: the first train_size rows train, the next test_size rows test.
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  // Applied to the whole target column up front; scores stay in that space.
  TargetTransform transform = TargetTransform::None;
  Metric metric = Metric::RMSE;
  std::uint64_t seed = 0;

  bool operator==(const Protocol&) const = default;
};

void validate_protocol(const Protocol& protocol);

/// Named benchmark presets:
///   boston-log    10-fold x 20, log target
///   boston-fixed  first 455 / last 51, 25 repeats, standardized target
///   boston-std    10-fold x 20, standardized target
///   boston-raw    10-fold x 20, raw target
///   concrete      10-fold x 20, raw target
Protocol protocol_preset(std::string_view name);
std::vector<std::string> protocol_preset_names();

/// Shuffles 0..n-1 with a generator seeded only by (seed, repeat) and cuts it
/// into `folds` contiguous folds; the first n % folds folds get one extra row.
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t folds, std::uint64_t seed,
                                                      std::size_t repeat);

struct RunResult {
  std::size_t run_id = 0;
  std::size_t repeat = 0;
  std::size_t fold = 0;
  double metric_value = 0.0;
  double mse = 0.0;
  double seconds = 0.0;
};

struct BenchReport {
  Metric metric = Metric::RMSE;
  std::vector<RunResult> runs;
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  double std = 0.0;  // sample standard deviation over runs
  double wall_seconds = 0.0;
  std::string fingerprint;

  void summarize();
};

// Trains on one split and returns predicted means for the test inputs.
using Learner = std::function<Vector(const Dataset& train, const Matrix& x_test, std::uint64_t seed)>;

// The protocol loop shared by every model. Runs are independent and execute
// in parallel; each gets a seed derived from (protocol.seed, run_id).
BenchReport run_protocol(const Dataset& data, const Protocol& protocol, const Learner& learner,
                         const std::string& fingerprint);

BenchReport run_protocol(const Dataset& data, const Protocol& protocol, const TrainConfig& config);

// Constant theta vector and noise variance, fitted by the same optimizer loop.
struct StationaryModel {
  KernelId kernel = KernelId::SquaredExp;
  Scaler scaler;
  Matrix x;
  Vector y;
  Vector theta;  // n_v
  double sigma2 = 1e-2;
  std::vector<double> epoch_nll;
};

StationaryModel fit_stationary(const Dataset& data, const TrainConfig& config, KernelId kernel);
Vector predict_stationary(const StationaryModel& model, const Matrix& x_raw);

BenchReport stationary_baseline(const Dataset& data, const Protocol& protocol, const TrainConfig& config,
                                KernelId kernel = KernelId::SquaredExp);

double rmse(const Vector& truth, const Vector& pred);

// Stable hash of a JSON-serializable configuration, as 16 hex digits.
std::string fingerprint_of(std::string_view canonical_text);

void write_report_csv(std::ostream& out, const BenchReport& report);
void write_report_json(std::ostream& out, const BenchReport& report);

struct TimingRow {
  std::size_t n = 0;
  std::size_t batch_size = 0;
  std::size_t epochs = 0;
  double seconds = 0.0;
  double sec_per_epoch = 0.0;
  bool skipped = false;
  std::string reason;
};

struct TimingOptions {
  std::vector<std::size_t> sizes;
  // 0 stands for full batch (N_b = N).
  std::vector<std::size_t> batch_sizes{200};
  std::size_t epochs = 100;
  // Epochs for full-batch rows; 0 uses `epochs`.
  std::size_t full_batch_epochs = 0;
  std::size_t dims = 5;
  // Estimated working-set limit for one batch.
  std::size_t memory_cap_bytes = std::size_t{2} << 30;
  std::uint64_t seed = 0;
  TrainConfig config;
};

// Seeded sum of sines over `dims` inputs on [0, 1]^dims.
Dataset timing_dataset(std::size_t n, std::size_t dims, std::uint64_t seed);

// Rough peak bytes for one likelihood-gradient evaluation on a batch of n.
std::size_t batch_memory_bytes(std::size_t n, std::size_t dims, std::size_t n_kernels);

/// Serial wall-clock study. One untimed warm-up fit runs first. Rows whose
/// batch would exceed the memory cap are returned with skipped = true.
std::vector<TimingRow> timing_benchmark(const TimingOptions& options);

void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows);

}  // namespace dgcn
