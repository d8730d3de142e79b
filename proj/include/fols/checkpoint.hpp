#pragma once

// Checkpoint file: a JSON document with the model config, optional scaler,
// named parameter blocks with shapes, and a CRC-32 over the parameter bytes
// (IEEE-754 binary64, little-endian, canonical block order).

#include "fols/serialization.hpp"

#include <boost/crc.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fols {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointError : std::runtime_error {
  enum class Kind { io, format, version, checksum, shape };
  Kind kind;
  CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::optional<Scaler> scaler;
};

inline std::uint32_t crc32_bytes(const void* data, std::size_t n) {
  boost::crc_32_type crc;
  crc.process_bytes(data, n);
  return crc.checksum();
}

inline std::uint32_t parameter_checksum(const ModelParams& params) {
  boost::crc_32_type crc;
  for (const auto& block : params.flatten()) {
    for (double v : block) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      unsigned char bytes[8];
      for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffU);
      crc.process_bytes(bytes, 8);
    }
  }
  return crc.checksum();
}

inline json checkpoint_to_json(const ModelParams& params, const ModelConfig& config,
                               const std::optional<Scaler>& scaler = std::nullopt) {
  config.validate();
  check_params_match(params, config);
  json blocks = json::array();
  ModelParams copy = params;
  const auto names = copy.blocks();
  auto shapes = [&copy] {
    std::vector<std::vector<std::size_t>> out;
    auto add = [&out](const LayerParams& l) {
      out.push_back({static_cast<std::size_t>(l.weights.rows()), static_cast<std::size_t>(l.weights.cols())});
      out.push_back({static_cast<std::size_t>(l.bias.size())});
    };
    for (const auto& l : copy.shared) add(l);
    for (const auto& l : copy.deterministic) add(l);
    for (const auto& l : copy.stochastic_trunk) add(l);
    add(copy.mean_head);
    add(copy.log_std_head);
    return out;
  }();
  for (std::size_t b = 0; b < names.size(); ++b) {
    blocks.push_back({{"name", names[b].name},
                      {"shape", shapes[b]},
                      {"values", std::vector<double>(names[b].values.begin(), names[b].values.end())}});
  }
  return json{{"format_version", kCheckpointFormatVersion},
              {"model_config", config},
              {"scaler", scaler ? json(*scaler) : json(nullptr)},
              {"parameters", blocks},
              {"crc32", parameter_checksum(params)}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
  using Kind = CheckpointError::Kind;
  try {
    if (!j.contains("format_version") || j.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw CheckpointError(Kind::version, "unsupported checkpoint format_version " +
                                               (j.contains("format_version") ? j.at("format_version").dump() : "<missing>"));
    }
    Checkpoint ck;
    j.at("model_config").get_to(ck.config);
    try {
      ck.config.validate();
    } catch (const std::exception& e) {
      throw CheckpointError(Kind::shape, e.what());
    }
    if (j.contains("scaler") && !j.at("scaler").is_null()) ck.scaler = j.at("scaler").get<Scaler>();
    ck.params = init_params(ck.config);
    auto blocks = ck.params.blocks();
    const auto& stored = j.at("parameters");
    if (stored.size() != blocks.size()) {
      throw CheckpointError(Kind::shape, "checkpoint has " + std::to_string(stored.size()) +
                                             " parameter blocks, config implies " + std::to_string(blocks.size()));
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& s = stored[b];
      if (s.at("name").get<std::string>() != blocks[b].name)
        throw CheckpointError(Kind::shape, "expected block '" + blocks[b].name + "', found '" +
                                               s.at("name").get<std::string>() + "'");
      const auto values = s.at("values").get<std::vector<double>>();
      std::size_t expected = 1;
      for (auto d : s.at("shape").get<std::vector<std::size_t>>()) expected *= d;
      if (values.size() != blocks[b].values.size() || expected != values.size())
        throw CheckpointError(Kind::shape, "block '" + blocks[b].name + "' has " + std::to_string(values.size()) +
                                               " values, config implies " + std::to_string(blocks[b].values.size()));
      std::copy(values.begin(), values.end(), blocks[b].values.begin());
    }
    const auto crc = j.at("crc32").get<std::uint32_t>();
    if (crc != parameter_checksum(ck.params))
      throw CheckpointError(Kind::checksum, "checkpoint checksum mismatch");
    return ck;
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::format, std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const ModelParams& params, const ModelConfig& config, const std::string& path,
                            const std::optional<Scaler>& scaler = std::nullopt) {
  std::ofstream out(path);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot write '" + path + "'");
  out << checkpoint_to_json(params, config, scaler).dump(1) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::format, "'" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace fols
