#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lab/errors.hpp"
#include "lab/harness.hpp"

namespace lab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " expects true or false, got '" + v + "'");
}

std::string fmt(bool b) { return b ? "true" : "false"; }
std::string fmt(double v) { return format_double(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = to_uint(k, v); }},
      {"data_seed", [](auto& c, auto& k, auto& v) { c.data.seed = RngSeed{to_uint(k, v)}; }},
      {"n_total", [](auto& c, auto& k, auto& v) { c.data.n_total = to_uint(k, v); }},
      {"grid_h", [](auto& c, auto& k, auto& v) { c.data.grid_h = c.model.grid_h = to_uint(k, v); }},
      {"grid_w", [](auto& c, auto& k, auto& v) { c.data.grid_w = c.model.grid_w = to_uint(k, v); }},
      {"m_min", [](auto& c, auto& k, auto& v) { c.data.m_min = to_uint(k, v); }},
      {"m_max", [](auto& c, auto& k, auto& v) { c.data.m_max = to_uint(k, v); }},
      {"d_latent", [](auto& c, auto& k, auto& v) { c.data.d_latent = to_uint(k, v); }},
      {"d_input", [](auto& c, auto& k, auto& v) { c.data.d_input = c.model.d_input = to_uint(k, v); }},
      {"noise_sigma", [](auto& c, auto& k, auto& v) { c.data.noise_sigma = to_double(k, v); }},
      {"orthonormal_topics", [](auto& c, auto& k, auto& v) { c.data.orthonormal_topics = to_bool(k, v); }},
      {"mixing", [](auto& c, auto& k, auto& v) { c.data.mixing = to_double(k, v); }},
      {"topic_coherence", [](auto& c, auto& k, auto& v) { c.data.topic_coherence = to_double(k, v); }},
      {"encoder", [](auto& c, auto&, auto& v) { c.model.encoder = encoder_kind_from_string(v); }},
      {"d_hidden", [](auto& c, auto& k, auto& v) { c.model.d_hidden = to_uint(k, v); }},
      {"d_rep", [](auto& c, auto& k, auto& v) { c.model.d_rep = to_uint(k, v); }},
      {"projection_heads", [](auto& c, auto& k, auto& v) { c.model.projection_heads = to_bool(k, v); }},
      {"shared_heads", [](auto& c, auto& k, auto& v) { c.model.shared_heads = to_bool(k, v); }},
      {"cross_mode", [](auto& c, auto&, auto& v) { c.model.cross_mode = cross_mode_from_string(v); }},
      {"tau_attn", [](auto& c, auto& k, auto& v) { c.model.tau_attn = to_double(k, v); }},
      {"local_weights", [](auto& c, auto&, auto& v) { c.model.weights = local_weights_from_string(v); }},
      {"bandwidth", [](auto& c, auto& k, auto& v) { c.model.bandwidth = to_double(k, v); }},
      {"tau", [](auto& c, auto& k, auto& v) { c.loss.tau = to_double(k, v); }},
      {"tau_prime", [](auto& c, auto& k, auto& v) { c.loss.tau_prime = to_double(k, v); }},
      {"lambda", [](auto& c, auto& k, auto& v) { c.loss.lambda = to_double(k, v); }},
      {"gamma", [](auto& c, auto& k, auto& v) { c.loss.gamma = to_double(k, v); }},
      {"mu", [](auto& c, auto& k, auto& v) { c.loss.mu = to_double(k, v); }},
      {"nu", [](auto& c, auto& k, auto& v) { c.loss.nu = to_double(k, v); }},
      {"eta", [](auto& c, auto& k, auto& v) { c.loss.eta = to_double(k, v); }},
      {"objective", [](auto& c, auto&, auto& v) { c.objective.kind = objective_from_string(v); }},
      {"uni_variant", [](auto& c, auto&, auto& v) { c.objective.uni_variant = uniformity_variant_from_string(v); }},
      {"learning_rate", [](auto& c, auto& k, auto& v) { c.learning_rate = to_double(k, v); }},
      {"steps", [](auto& c, auto& k, auto& v) { c.steps = to_uint(k, v); }},
      {"batch_size", [](auto& c, auto& k, auto& v) { c.batch_size = to_uint(k, v); }},
      {"metric_every", [](auto& c, auto& k, auto& v) { c.metric_every = to_uint(k, v); }},
      {"tau_metric", [](auto& c, auto& k, auto& v) { c.tau_metric = to_double(k, v); }},
      {"global_t", [](auto& c, auto& k, auto& v) { c.global_t = to_double(k, v); }},
  };
  return table;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config: " + what);
}

}  // namespace

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("config: unknown key '" + key + "'");
  it->second(cfg, key, value);
  cfg.explicit_keys.insert(key);
}

void ExperimentConfig::validate() const {
  data.validate();
  model.validate();
  (void)LossConfig(loss);
  require(data.d_input == model.d_input, "d_input differs between data and model");
  require(data.grid_h == model.grid_h && data.grid_w == model.grid_w, "grid differs between data and model");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate must be >= 0");
  require(steps >= 1, "steps must be >= 1");
  require(effective_batch() <= data.n_total, "batch_size must not exceed n_total");
  require(metric_every >= 1, "metric_every must be >= 1");
  require(std::isfinite(tau_metric), "tau_metric must be finite");
  require(global_t > 0.0, "global_t must be > 0");
  require(data.n_total >= 2, "n_total must be >= 2 for global uniformity");
  if (uses_uniformity(objective.kind)) {
    require(explicit_keys.count("eta") == 1, std::string("objective ") + std::string(to_string(objective.kind)) +
                                                 " needs an explicit eta");
  }
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (cfg.explicit_keys.count(key)) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    set_config_value(cfg, key, value);
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  return parse_config(in);
}

void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* s = std::getenv("LAB_SEED"); s != nullptr && *s != '\0') set_config_value(cfg, "seed", s);
}

std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& c) {
  return {
      {"objective", std::string(to_string(c.objective.kind))},
      {"uni_variant", std::string(to_string(c.objective.uni_variant))},
      {"tau", fmt(c.loss.tau)},
      {"tau_prime", fmt(c.loss.tau_prime)},
      {"lambda", fmt(c.loss.lambda)},
      {"gamma", fmt(c.loss.gamma)},
      {"mu", fmt(c.loss.mu)},
      {"nu", fmt(c.loss.nu)},
      {"eta", fmt(c.loss.eta)},
      {"learning_rate", fmt(c.learning_rate)},
      {"steps", fmt(std::uint64_t{c.steps})},
      {"batch_size", fmt(std::uint64_t{c.effective_batch()})},
      {"metric_every", fmt(std::uint64_t{c.metric_every})},
      {"tau_metric", fmt(c.metric_temperature())},
      {"global_t", fmt(c.global_t)},
      {"seed", fmt(c.seed)},
      {"data_seed", fmt(c.data.seed.value)},
      {"n_total", fmt(std::uint64_t{c.data.n_total})},
      {"grid_h", fmt(std::uint64_t{c.data.grid_h})},
      {"grid_w", fmt(std::uint64_t{c.data.grid_w})},
      {"m_min", fmt(std::uint64_t{c.data.m_min})},
      {"m_max", fmt(std::uint64_t{c.data.m_max})},
      {"d_latent", fmt(std::uint64_t{c.data.d_latent})},
      {"d_input", fmt(std::uint64_t{c.data.d_input})},
      {"noise_sigma", fmt(c.data.noise_sigma)},
      {"orthonormal_topics", fmt(c.data.orthonormal_topics)},
      {"mixing", fmt(c.data.mixing)},
      {"topic_coherence", fmt(c.data.topic_coherence)},
      {"encoder", std::string(to_string(c.model.encoder))},
      {"d_hidden", fmt(std::uint64_t{c.model.d_hidden})},
      {"d_rep", fmt(std::uint64_t{c.model.d_rep})},
      {"projection_heads", fmt(c.model.projection_heads)},
      {"shared_heads", fmt(c.model.shared_heads)},
      {"cross_mode", std::string(to_string(c.model.cross_mode))},
      {"tau_attn", fmt(c.model.attention_temperature())},
      {"local_weights", std::string(to_string(c.model.weights))},
      {"bandwidth", fmt(c.model.bandwidth)},
  };
}

}  // namespace lab
