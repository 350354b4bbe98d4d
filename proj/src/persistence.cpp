#include "dgcn/persistence.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dgcn/config.hpp"
#include "dgcn/error.hpp"

namespace dgcn {

namespace {

constexpr char kMagic[4] = {'D', 'G', 'C', 'N'};
constexpr std::size_t kHeaderBytes = 4 + 1 + 8;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
  return v;
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

struct ArrayWriter {
  Json manifest = Json::array();
  std::vector<double> values;

  void add(const std::string& name, const double* data, Eigen::Index rows, Eigen::Index cols) {
    manifest.push_back({{"name", name}, {"rows", rows}, {"cols", cols}});
    values.insert(values.end(), data, data + rows * cols);
  }
  void add(const std::string& name, const Matrix& m) { add(name, m.data(), m.rows(), m.cols()); }
  void add(const std::string& name, const Vector& v) { add(name, v.data(), v.size(), 1); }
  void add(const std::string& name, const MlpParams& p) {
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
      add(name + ".w" + std::to_string(l), p.weights[l]);
      add(name + ".b" + std::to_string(l), p.biases[l]);
    }
  }
};

class ArrayReader {
 public:
  ArrayReader(const Json& manifest, const std::uint8_t* data, std::size_t size)
      : manifest_(manifest), data_(data), size_(size) {}

  Matrix matrix(const std::string& name) {
    const Json& entry = next(name);
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    Matrix m(rows, cols);
    fill(m.data(), static_cast<std::size_t>(rows * cols));
    return m;
  }

  Vector vector(const std::string& name) {
    const Json& entry = next(name);
    if (entry.at("cols").get<Eigen::Index>() != 1) throw ChecksumMismatch("array '" + name + "' is not a vector");
    Vector v(entry.at("rows").get<Eigen::Index>());
    fill(v.data(), static_cast<std::size_t>(v.size()));
    return v;
  }

  MlpParams params(const std::string& name, std::size_t layers) {
    MlpParams p;
    for (std::size_t l = 0; l < layers; ++l) {
      p.weights.push_back(matrix(name + ".w" + std::to_string(l)));
      p.biases.push_back(vector(name + ".b" + std::to_string(l)));
    }
    return p;
  }

  bool done() const { return index_ == manifest_.size() && offset_ == size_; }

 private:
  const Json& next(const std::string& name) {
    if (index_ >= manifest_.size()) throw ChecksumMismatch("model file is missing array '" + name + "'");
    const Json& entry = manifest_[index_++];
    if (entry.at("name").get<std::string>() != name) {
      throw ChecksumMismatch("expected array '" + name + "', found '" + entry.at("name").get<std::string>() + "'");
    }
    return entry;
  }

  void fill(double* out, std::size_t count) {
    if (count > (size_ - offset_) / 8) throw ChecksumMismatch("model file array section is short");
    for (std::size_t i = 0; i < count; ++i) out[i] = std::bit_cast<double>(get_u64(data_ + offset_ + 8 * i));
    offset_ += 8 * count;
  }

  const Json& manifest_;
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t index_ = 0;
  std::size_t offset_ = 0;
};

void check_params(const MlpParams& p, const std::vector<LayerSpec>& layers, const char* what) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (p.weights[l].rows() != static_cast<Eigen::Index>(layers[l].out_units) ||
        p.weights[l].cols() != static_cast<Eigen::Index>(layers[l].in_units) ||
        p.biases[l].size() != static_cast<Eigen::Index>(layers[l].out_units)) {
      throw SchemaMismatch(std::string(what) + " parameters do not match the stored layer specs");
    }
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const TrainedModel& model) {
  ArrayWriter arrays;
  arrays.add("scaler.x_mean", model.scaler.x_mean);
  arrays.add("scaler.x_std", model.scaler.x_std);
  arrays.add("scaler.y", Vector{{model.scaler.y_mean, model.scaler.y_std}});
  arrays.add("train.x", model.x);
  arrays.add("train.y", model.y);
  arrays.add("theta_net", model.theta_net.params);
  arrays.add("sigma_net", model.sigma_net.params);
  arrays.add("theta_net.m", model.theta_net.optimizer.first_moment);
  arrays.add("theta_net.v", model.theta_net.optimizer.second_moment);
  arrays.add("sigma_net.m", model.sigma_net.optimizer.first_moment);
  arrays.add("sigma_net.v", model.sigma_net.optimizer.second_moment);

  Json epochs = Json::array();
  for (const auto& e : model.log.epochs) epochs.push_back({e.epoch, e.mean_nll, e.batches});
  Json jitter = Json::array();
  for (const auto& j : model.log.jitter_events) jitter.push_back({j.epoch, j.batch, j.jitter});

  const Json manifest = {
      {"config", to_json(model.config)},
      {"n", model.size()},
      {"n_v", model.dims()},
      {"column_names", model.column_names},
      {"target_name", model.target_name},
      {"theta_layers", model.theta_net.layers.size()},
      {"sigma_layers", model.sigma_net.layers.size()},
      {"theta_optimizer_step", model.theta_net.optimizer.step},
      {"sigma_optimizer_step", model.sigma_net.optimizer.step},
      {"epochs_trained", model.epochs_trained},
      {"log", {{"epochs", epochs}, {"jitter_events", jitter}, {"early_stopped", model.log.early_stopped}}},
      {"arrays", arrays.manifest},
  };
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + text.size() + 8 * arrays.values.size() + 4);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kModelFormatVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (double v : arrays.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  put_u32(out, crc_of(out.data(), out.size()));
  return out;
}

TrainedModel deserialize_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0) throw ChecksumMismatch("model file truncated");
    throw IoError("not a model file (bad magic bytes)");
  }
  if (bytes[4] != kModelFormatVersion) {
    throw FormatVersionMismatch("model format version " + std::to_string(bytes[4]) + " is not supported (expected " +
                                std::to_string(kModelFormatVersion) + ")");
  }
  if (bytes.size() < kHeaderBytes + 4) throw ChecksumMismatch("model file truncated");
  const std::size_t body = bytes.size() - 4;
  if (crc_of(bytes.data(), body) != get_u32(bytes.data() + body)) {
    throw ChecksumMismatch("model file checksum does not match its contents");
  }

  const std::uint64_t text_size = get_u64(bytes.data() + 5);
  if (text_size > body - kHeaderBytes) throw ChecksumMismatch("manifest length exceeds file size");
  const auto* text = reinterpret_cast<const char*>(bytes.data() + kHeaderBytes);
  Json manifest;
  try {
    manifest = Json::parse(text, text + text_size);
  } catch (const nlohmann::json::exception& err) {
    throw ChecksumMismatch(std::string("model manifest is unreadable: ") + err.what());
  }

  TrainedModel model;
  try {
    model.config = train_config_from_json(manifest.at("config"));
    const auto n_v = manifest.at("n_v").get<std::size_t>();
    model.column_names = manifest.at("column_names").get<std::vector<std::string>>();
    model.target_name = manifest.at("target_name").get<std::string>();
    model.epochs_trained = manifest.at("epochs_trained").get<std::uint64_t>();
    const Json& log = manifest.at("log");
    for (const auto& e : log.at("epochs")) {
      model.log.epochs.push_back({e.at(0).get<std::size_t>(), e.at(1).get<double>(), e.at(2).get<std::size_t>()});
    }
    for (const auto& j : log.at("jitter_events")) {
      model.log.jitter_events.push_back({j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(), j.at(2).get<double>()});
    }
    model.log.early_stopped = log.at("early_stopped").get<bool>();

    model.theta_net.layers = theta_layers(model.config, n_v);
    model.sigma_net.layers = sigma_layers(model.config, n_v);
    if (manifest.at("theta_layers").get<std::size_t>() != model.theta_net.layers.size() ||
        manifest.at("sigma_layers").get<std::size_t>() != model.sigma_net.layers.size()) {
      throw SchemaMismatch("stored layer count disagrees with the stored config");
    }

    const std::size_t offset = kHeaderBytes + text_size;
    ArrayReader arrays(manifest.at("arrays"), bytes.data() + offset, body - offset);
    model.scaler.x_mean = arrays.vector("scaler.x_mean");
    model.scaler.x_std = arrays.vector("scaler.x_std");
    const Vector ys = arrays.vector("scaler.y");
    if (ys.size() != 2) throw SchemaMismatch("target scaler must hold two values");
    model.scaler.y_mean = ys[0];
    model.scaler.y_std = ys[1];
    model.x = arrays.matrix("train.x");
    model.y = arrays.vector("train.y");
    model.theta_net.params = arrays.params("theta_net", model.theta_net.layers.size());
    model.sigma_net.params = arrays.params("sigma_net", model.sigma_net.layers.size());
    model.theta_net.optimizer.first_moment = arrays.params("theta_net.m", model.theta_net.layers.size());
    model.theta_net.optimizer.second_moment = arrays.params("theta_net.v", model.theta_net.layers.size());
    model.sigma_net.optimizer.first_moment = arrays.params("sigma_net.m", model.sigma_net.layers.size());
    model.sigma_net.optimizer.second_moment = arrays.params("sigma_net.v", model.sigma_net.layers.size());
    model.theta_net.optimizer.step = manifest.at("theta_optimizer_step").get<std::uint64_t>();
    model.sigma_net.optimizer.step = manifest.at("sigma_optimizer_step").get<std::uint64_t>();
    if (!arrays.done()) throw ChecksumMismatch("model file has trailing array data");

    if (static_cast<std::size_t>(model.x.cols()) != n_v || model.x.rows() != model.y.size() ||
        model.scaler.x_mean.size() != static_cast<Eigen::Index>(n_v) ||
        model.scaler.x_std.size() != static_cast<Eigen::Index>(n_v) ||
        (!model.column_names.empty() && model.column_names.size() != n_v)) {
      throw SchemaMismatch("stored arrays disagree with the stored schema");
    }
    check_params(model.theta_net.params, model.theta_net.layers, "theta net");
    check_params(model.sigma_net.params, model.sigma_net.layers, "sigma net");
  } catch (const nlohmann::json::exception& err) {
    throw SchemaMismatch(std::string("model manifest is malformed: ") + err.what());
  }

  model.index = build_index(model.x, model.config.neighbor_strategy);
  return model;
}

void save_model(const TrainedModel& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write to '" + path + "' failed");
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read error on '" + path + "'");
  return deserialize_model(bytes);
}

}  // namespace dgcn
