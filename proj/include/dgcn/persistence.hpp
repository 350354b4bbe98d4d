#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgcn/trainer.hpp"

namespace dgcn {

inline constexpr std::uint8_t kModelFormatVersion = 1;

/*
  Model file layout (all integers little-endian):

    "DGCN"            4-byte magic
    version           u8, currently 1
    manifest_length   u64
    manifest          UTF-8 JSON: config, schema, log, and the ordered list
                      of arrays {name, rows, cols}
    arrays            float64, row-major, in manifest order
    crc32             u32 over every preceding byte
*/
std::vector<std::uint8_t> serialize_model(const TrainedModel& model);
TrainedModel deserialize_model(const std::vector<std::uint8_t>& bytes);

// Throw IoError, FormatVersionMismatch or ChecksumMismatch.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

}  // namespace dgcn
