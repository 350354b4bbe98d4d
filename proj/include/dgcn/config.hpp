#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dgcn/bench.hpp"
#include "dgcn/timeseries.hpp"
#include "dgcn/trainer.hpp"

namespace dgcn {

using Json = nlohmann::json;

// JSON mirrors of the configuration structs. Readers start from the
// defaults, override what the document sets, and throw InvalidArgument on
// unknown keys or ill-typed values.
Json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& doc);

Json to_json(const Protocol& protocol);
Protocol protocol_from_json(const Json& doc, Protocol base = {});

Json to_json(const LagSpec& spec);
LagSpec lag_spec_from_json(const Json& doc);

// Everything a CLI run can be configured with.
struct CliConfig {
  TrainConfig train;
  Protocol protocol;
  // Lag setup for `forecast`.
  LagSpec lags;
  // One lag count per CATS block.
  std::vector<std::size_t> cats_lags{20, 20, 20, 20, 20};
  ForecastMode forecast_mode = ForecastMode::Recursive;
  std::string data;
  std::string target = "last";
  std::string out;
  std::uint64_t seed = 0;
};

Json to_json(const CliConfig& config);
CliConfig cli_config_from_json(const Json& doc);
CliConfig load_cli_config(const std::string& path);

}  // namespace dgcn
