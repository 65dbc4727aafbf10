#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ape/model.hpp"
#include "ape/training.hpp"

namespace ape {

// Flat JSON run configuration. Every key is optional and falls back to the
// default below; unknown keys are rejected.
struct RunConfig {
  // model
  int d_model = 64;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 256;
  double dropout = 0.1;
  int max_len = 256;
  std::string precision = "float32";
  std::string mode = "multi";
  // training
  std::uint64_t seed = 1;
  std::int64_t token_budget = 4096;
  std::int64_t warmup = 4000;
  double lr_scale = 1.0;
  std::int64_t max_steps = 2000;
  std::int64_t eval_interval = 100;
  int patience = 10;
  double label_smoothing = 0.1;
  double clip_norm = 1.0;
  // decoding
  int beam = 4;
  double alpha = 0.6;
  // data
  std::string train_src, train_mt, train_pe;
  std::string dev_src, dev_mt, dev_pe;
  std::string vocab;       // existing vocabulary file; built from the training data when empty
  int vocab_max_size = 32000;
  std::string out_dir = "run";

  // Throws ConfigError for out-of-range values.
  void validate() const;
  ModelConfig model_config(int vocab_size) const;
  TrainConfig train_config() const;

  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& config);
// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string serialize(const RunConfig& config);

nlohmann::json to_json(const ModelConfig& config);
// Throws ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace ape
