#include "maxent/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "maxent/errors.hpp"

namespace maxent {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

template <typename T>
T parse_int(const std::string& key, const std::string& text) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) throw ConfigError("bad integer for " + key + ": " + text);
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": " + text);
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError("bad boolean for " + key + ": " + text);
}

struct Field {
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Field int_field(T TrainConfig::*m) {
  return {[m](const TrainConfig& c) { return std::to_string(c.*m); },
          [m](TrainConfig& c, const std::string& k, const std::string& v) { c.*m = parse_int<T>(k, v); }};
}

Field double_field(double TrainConfig::*m) {
  return {[m](const TrainConfig& c) { return format_double(c.*m); },
          [m](TrainConfig& c, const std::string& k, const std::string& v) { c.*m = parse_double(k, v); }};
}

Field bool_field(bool TrainConfig::*m) {
  return {[m](const TrainConfig& c) { return std::string(c.*m ? "true" : "false"); },
          [m](TrainConfig& c, const std::string& k, const std::string& v) { c.*m = parse_bool(k, v); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"env", {[](const TrainConfig& c) { return c.env; },
               [](TrainConfig& c, const std::string&, const std::string& v) { c.env = v; }}},
      {"seed", int_field(&TrainConfig::seed)},
      {"total_env_steps", int_field(&TrainConfig::total_env_steps)},
      {"train_every", int_field(&TrainConfig::train_every)},
      {"updates_per_round", int_field(&TrainConfig::updates_per_round)},
      {"batch", int_field(&TrainConfig::batch)},
      {"seq_len", int_field(&TrainConfig::seq_len)},
      {"horizon", int_field(&TrainConfig::horizon)},
      {"eval_every", int_field(&TrainConfig::eval_every)},
      {"eval_episodes", int_field(&TrainConfig::eval_episodes)},
      {"prefill_episodes", int_field(&TrainConfig::prefill_episodes)},
      {"buffer_capacity", int_field(&TrainConfig::buffer_capacity)},
      {"exploration", bool_field(&TrainConfig::exploration)},
      {"modifications", bool_field(&TrainConfig::modifications)},
      {"additive_noise", bool_field(&TrainConfig::additive_noise)},
      {"det_imagined_starts", bool_field(&TrainConfig::det_imagined_starts)},
      {"deter_dim", int_field(&TrainConfig::deter_dim)},
      {"stoch_dim", int_field(&TrainConfig::stoch_dim)},
      {"hidden", int_field(&TrainConfig::hidden)},
      {"kl_coef", double_field(&TrainConfig::kl_coef)},
      {"jeffreys_coef", double_field(&TrainConfig::jeffreys_coef)},
      {"baseline_kl_coef", double_field(&TrainConfig::baseline_kl_coef)},
      {"wm_lr", double_field(&TrainConfig::wm_lr)},
      {"obs_scale", double_field(&TrainConfig::obs_scale)},
      {"mdn_hidden", int_field(&TrainConfig::mdn_hidden)},
      {"mdn_components", int_field(&TrainConfig::mdn_components)},
      {"gamma_q", double_field(&TrainConfig::gamma_q)},
      {"soft_tau", double_field(&TrainConfig::soft_tau)},
      {"mdn_lr", double_field(&TrainConfig::mdn_lr)},
      {"actor_hidden", int_field(&TrainConfig::actor_hidden)},
      {"actor_lr", double_field(&TrainConfig::actor_lr)},
      {"critic_lr", double_field(&TrainConfig::critic_lr)},
      {"gamma", double_field(&TrainConfig::gamma)},
      {"lambda", double_field(&TrainConfig::lambda)},
      {"beta_start", double_field(&TrainConfig::beta_start)},
      {"beta_end", double_field(&TrainConfig::beta_end)},
      {"eps_random", double_field(&TrainConfig::eps_random)},
      {"noise_std", double_field(&TrainConfig::noise_std)},
      {"grad_clip", double_field(&TrainConfig::grad_clip)},
  };
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  if (total_env_steps < 1 || train_every < 1 || updates_per_round < 0 || batch < 1 || eval_every < 1 ||
      buffer_capacity < 1 || prefill_episodes < 0)
    throw ConfigError("counts must be positive");
  if (seq_len < 2) throw ConfigError("seq_len must be at least 2");
  if (horizon < 1) throw ConfigError("horizon must be at least 1");
  if (eval_episodes < 2) throw ConfigError("eval_episodes must be at least 2");
  if (eps_random < 0.0 || eps_random > 1.0) throw ConfigError("eps_random must lie in [0, 1]");
  if (noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
  if (wm_lr <= 0.0 || actor_lr <= 0.0 || critic_lr <= 0.0) throw ConfigError("learning rates must be positive");
  if (actor_hidden < 1) throw ConfigError("actor_hidden must be positive");
  world_model(1, 1).validate();
  occupancy().validate();
  lambda_config().validate();
}

WorldModelConfig TrainConfig::world_model(int obs_dim, int act_dim) const {
  WorldModelConfig w;
  w.obs_dim = obs_dim;
  w.act_dim = act_dim;
  w.deter_dim = deter_dim;
  w.stoch_dim = stoch_dim;
  w.hidden = hidden;
  w.kl_coef = kl_coef;
  w.jeffreys_coef = jeffreys_coef;
  w.baseline_kl_coef = baseline_kl_coef;
  w.modifications = modifications;
  w.obs_scale = obs_scale;
  return w;
}

OccupancyConfig TrainConfig::occupancy() const {
  OccupancyConfig o;
  o.gamma_q = gamma_q;
  o.soft_tau = soft_tau;
  o.lr = mdn_lr;
  o.horizon = static_cast<int>(horizon);
  o.components = mdn_components;
  o.hidden = mdn_hidden;
  return o;
}

LambdaConfig TrainConfig::lambda_config() const { return {gamma, lambda, beta_start, beta_end}; }

ExplorationNoise TrainConfig::collection_noise() const {
  return {eps_random, additive_noise && !exploration ? noise_std : 0.0};
}

std::string TrainConfig::variant() const {
  if (exploration && modifications) return "full";
  if (exploration) return "exploration";
  if (modifications) return "modifications";
  return "baseline";
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : fields()) out[key] = field.get(*this);
  return out;
}

void TrainConfig::apply(const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(*this, key, value);
  }
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second) throw ConfigError("duplicate key '" + key + "'");
  }
  return out;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  base.apply(parse_key_values(buffer.str()));
  base.validate();
  return base;
}

TrainConfig with_variant(TrainConfig cfg, const std::string& variant) {
  if (variant == "baseline") {
    cfg.exploration = false;
    cfg.modifications = false;
  } else if (variant == "exploration") {
    cfg.exploration = true;
    cfg.modifications = false;
  } else if (variant == "modifications") {
    cfg.exploration = false;
    cfg.modifications = true;
  } else if (variant == "full") {
    cfg.exploration = true;
    cfg.modifications = true;
  } else {
    throw ConfigError("unknown variant '" + variant + "'");
  }
  return cfg;
}

}  // namespace maxent
