#pragma once

// Binary checkpoint layout (little-endian):
//   "APEMODEL" | u32 version | u32 header bytes | JSON header
//   | parameter blobs in canonical order, float32 or float64 per the header
//   | u64 FNV-1a hash of everything before it
// The header holds the model config, the vocabulary, parameter names and shapes.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ape/model.hpp"
#include "ape/vocab.hpp"

namespace ape {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  ModelConfig config;
  std::optional<Vocabulary> vocab;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  nlohmann::json meta = nlohmann::json::object();
};

template <typename T>
void save_checkpoint(const std::string& path, const Transformer<T>& model,
                     const Vocabulary* vocab = nullptr,
                     const nlohmann::json& meta = nlohmann::json::object());

// Throws CheckpointFormatError (bad magic, version, header or hash),
// CheckpointTruncatedError (short file) or CheckpointConfigError (header
// config invalid or inconsistent with the stored parameters).
CheckpointHeader read_checkpoint_header(const std::string& path);

// Also throws CheckpointConfigError when the stored precision is not T.
template <typename T>
Transformer<T> load_checkpoint(const std::string& path, CheckpointHeader* header = nullptr);

using AnyModel = std::variant<Transformer<float>, Transformer<double>>;
AnyModel load_any_checkpoint(const std::string& path, CheckpointHeader* header = nullptr);

}  // namespace ape
