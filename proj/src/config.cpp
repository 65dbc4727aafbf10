#include "ape/config.hpp"

#include <algorithm>

#include "ape/errors.hpp"
#include "ape/io.hpp"

namespace ape {

namespace {

using nlohmann::json;

template <typename V>
void read_field(const json& j, const char* key, V& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<V, std::string>) {
      if (!it->is_string()) throw ConfigError("");
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!it->is_number()) throw ConfigError("");
    } else {
      if (!it->is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<V>) {
        if (it->is_number_integer() && !it->is_number_unsigned()) throw ConfigError("");
      }
    }
    out = it->get<V>();
  } catch (const std::exception&) {
    throw ConfigError(std::string("config: key '") + key + "' has the wrong type");
  }
}

// One table drives parsing, serialization and the unknown-key check.
template <typename Fn>
void for_each_field(RunConfig& c, Fn&& f) {
  f("d_model", c.d_model);
  f("n_heads", c.n_heads);
  f("n_layers", c.n_layers);
  f("d_ff", c.d_ff);
  f("dropout", c.dropout);
  f("max_len", c.max_len);
  f("precision", c.precision);
  f("mode", c.mode);
  f("seed", c.seed);
  f("token_budget", c.token_budget);
  f("warmup", c.warmup);
  f("lr_scale", c.lr_scale);
  f("max_steps", c.max_steps);
  f("eval_interval", c.eval_interval);
  f("patience", c.patience);
  f("label_smoothing", c.label_smoothing);
  f("clip_norm", c.clip_norm);
  f("beam", c.beam);
  f("alpha", c.alpha);
  f("train_src", c.train_src);
  f("train_mt", c.train_mt);
  f("train_pe", c.train_pe);
  f("dev_src", c.dev_src);
  f("dev_mt", c.dev_mt);
  f("dev_pe", c.dev_pe);
  f("vocab", c.vocab);
  f("vocab_max_size", c.vocab_max_size);
  f("out_dir", c.out_dir);
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  model_config(token::kNumReserved + 1).validate();
  parse_precision(precision);
  parse_mode(mode);
  if (token_budget < 1) fail("token_budget must be >= 1");
  if (warmup < 1) fail("warmup must be >= 1");
  if (!(lr_scale > 0.0)) fail("lr_scale must be > 0");
  if (max_steps < 0) fail("max_steps must be >= 0");
  if (eval_interval < 1) fail("eval_interval must be >= 1");
  if (patience < 0) fail("patience must be >= 0");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) fail("label_smoothing must lie in [0, 1)");
  if (!(clip_norm > 0.0)) fail("clip_norm must be > 0");
  if (beam < 1) fail("beam must be >= 1");
  if (alpha < 0.0) fail("alpha must be >= 0");
  if (vocab_max_size < token::kNumReserved + 1) fail("vocab_max_size must be >= 5");
}

ModelConfig RunConfig::model_config(int vocab_size) const {
  ModelConfig m;
  m.d_model = d_model;
  m.n_heads = n_heads;
  m.n_layers = n_layers;
  m.d_ff = d_ff;
  m.vocab_size = vocab_size;
  m.dropout = dropout;
  m.max_len = max_len;
  m.precision = parse_precision(precision);
  m.mode = parse_mode(mode);
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.max_steps = max_steps;
  t.warmup = warmup;
  t.lr_scale = lr_scale;
  t.token_budget = static_cast<std::size_t>(token_budget);
  t.eval_interval = eval_interval;
  t.patience = patience;
  t.label_smoothing = label_smoothing;
  t.clip_norm = clip_norm;
  t.seed = seed;
  return t;
}

nlohmann::json to_json(const RunConfig& config) {
  json j = json::object();
  RunConfig copy = config;
  for_each_field(copy, [&](const char* key, auto& v) { j[key] = v; });
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  RunConfig c;
  std::vector<std::string> known;
  for_each_field(c, [&](const char* key, auto& v) {
    known.emplace_back(key);
    read_field(j, key, v);
  });
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ConfigError("config: unknown key '" + item.key() + "'");
    }
  }
  c.validate();
  return c;
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_text(path)); }

std::string serialize(const RunConfig& config) { return to_json(config).dump(2); }

nlohmann::json to_json(const ModelConfig& c) {
  return json{{"d_model", c.d_model},     {"n_heads", c.n_heads},
              {"n_layers", c.n_layers},   {"d_ff", c.d_ff},
              {"vocab_size", c.vocab_size}, {"dropout", c.dropout},
              {"max_len", c.max_len},     {"precision", to_string(c.precision)},
              {"mode", to_string(c.mode)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  try {
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.max_len = j.at("max_len").get<int>();
    c.precision = parse_precision(j.at("precision").get<std::string>());
    c.mode = parse_mode(j.at("mode").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace ape
