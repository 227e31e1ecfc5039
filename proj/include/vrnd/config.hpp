#pragma once

// Run configuration: `key = value` lines, `#` comments. Unknown keys are
// rejected so typos fail loudly.

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vrnd/detector.hpp"
#include "vrnd/errors.hpp"
#include "vrnd/synthdata.hpp"
#include "vrnd/trainer.hpp"
#include "vrnd/vrnn.hpp"

namespace vrnd {

struct RunConfig {
  VrnnConfig model;
  TrainConfig train;
  BenchmarkConfig bench;
  double alpha = kDefaultAlpha;
  ThresholdStats threshold_stats = ThresholdStats::pooled;
  std::size_t score_samples = 1;
  std::size_t max_gap = 0;
  std::uint64_t seed = 0;
  std::string data, out, ckpt, log;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

}  // namespace config_detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "frame_dim", "latent_dim", "hidden_dim", "feature_dim", "head_layers", "feature_extractor",
      "learning_rate", "batch_size", "chunk_len", "epochs", "grad_clip_norm", "kl_warmup_epochs", "patience",
      "alpha", "threshold_stats", "score_samples", "max_gap", "seed",
      "contamination", "profile", "level_drift_db", "data", "out", "ckpt", "log"};
  return keys;
}

inline void set_config_value(RunConfig& c, const std::string& key, const std::string& raw) {
  using namespace config_detail;
  const std::string v = trim(raw);
  if (key == "frame_dim") c.model.frame_dim = c.bench.frame_dim = to_size(key, v);
  else if (key == "latent_dim") c.model.latent_dim = to_size(key, v);
  else if (key == "hidden_dim") c.model.hidden_dim = to_size(key, v);
  else if (key == "feature_dim") c.model.feature_dim = to_size(key, v);
  else if (key == "head_layers") c.model.head_layers = to_size(key, v);
  else if (key == "feature_extractor") c.model.feature_extractor = to_bool(key, v);
  else if (key == "learning_rate") c.train.learning_rate = to_real(key, v);
  else if (key == "batch_size") c.train.batch_size = to_size(key, v);
  else if (key == "chunk_len") c.train.chunk_len = to_size(key, v);
  else if (key == "epochs") c.train.epochs = to_size(key, v);
  else if (key == "grad_clip_norm") c.train.grad_clip_norm = to_real(key, v);
  else if (key == "kl_warmup_epochs") c.train.kl_warmup_epochs = to_size(key, v);
  else if (key == "patience") c.train.patience = to_size(key, v);
  else if (key == "alpha") c.alpha = to_real(key, v);
  else if (key == "threshold_stats") c.threshold_stats = threshold_stats_from_string(v);
  else if (key == "score_samples") c.score_samples = to_size(key, v);
  else if (key == "max_gap") c.max_gap = to_size(key, v);
  else if (key == "seed") c.seed = c.train.seed = to_size(key, v);
  else if (key == "contamination") c.bench.contamination_rate = to_real(key, v);
  else if (key == "profile") c.bench.profile = profile_from_string(v);
  else if (key == "level_drift_db") c.bench.level_drift_db = to_real(key, v);
  else if (key == "data") c.data = v;
  else if (key == "out") c.out = v;
  else if (key == "ckpt") c.ckpt = v;
  else if (key == "log") c.log = v;
  else throw ConfigError("unknown configuration key '" + key + "'");
}

inline void validate(const RunConfig& c) {
  c.model.validate();
  c.train.validate();
  c.bench.validate();
  if (!std::isfinite(c.alpha) || c.alpha < 0.0) throw ConfigError("alpha must be finite and >= 0");
  if (c.score_samples == 0) throw ConfigError("score_samples must be >= 1");
}

inline RunConfig parse_run_config(std::istream& in, const std::string& source = "config") {
  RunConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      set_config_value(c, config_detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_run_config(in, path);
}

}  // namespace vrnd
