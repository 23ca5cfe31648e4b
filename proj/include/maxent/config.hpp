#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "maxent/agent.hpp"
#include "maxent/occupancy.hpp"
#include "maxent/world_model.hpp"

namespace maxent {

/// Every hyperparameter of a training run. Values marked "published" follow the reference
/// settings; the rest are desk-scale choices.
struct TrainConfig {
  std::string env = "corridor1d";
  uint64_t seed = 0;
  int64_t total_env_steps = 100000;
  int64_t train_every = 1000;
  int64_t updates_per_round = 100;
  int64_t batch = 32;
  int64_t seq_len = 30;
  int64_t horizon = 15;
  int64_t eval_every = 5000;
  int64_t eval_episodes = 10;  // published
  int64_t prefill_episodes = 5;
  int64_t buffer_capacity = 100000;

  bool exploration = true;
  bool modifications = true;
  // Additive Gaussian action noise during collection. The entropy-driven variants never
  // add it; random actions (eps_random) stay on for every variant.
  bool additive_noise = true;
  // The deterministic agent imagines its own rollouts; with this switch they start from every
  // state of the stochastic agent's imagined rollouts instead of the real start states only.
  bool det_imagined_starts = true;

  // World model.
  int deter_dim = 200;
  int stoch_dim = 128;  // published
  int hidden = 200;
  double kl_coef = 0.1;        // published
  double jeffreys_coef = 0.1;  // published
  double baseline_kl_coef = 1.0;
  double wm_lr = 6e-4;
  // Observations are mapped to [-obs_scale, obs_scale] from the environment bounds.
  double obs_scale = 3.0;

  // Occupancy estimator.
  int mdn_hidden = 256;    // published
  int mdn_components = 8;  // published
  double gamma_q = 0.9;    // published
  double soft_tau = 0.1;   // published
  double mdn_lr = 2e-4;    // published

  // Agents.
  int actor_hidden = 200;
  double actor_lr = 8e-5;
  double critic_lr = 8e-5;
  double gamma = 0.99;
  double lambda = 0.95;
  double beta_start = 0.2;   // published
  double beta_end = 0.0001;  // published

  // Collection noise.
  double eps_random = 0.1;
  double noise_std = 0.3;

  double grad_clip = 100.0;

  /// Throws ConfigError on out-of-range values.
  void validate() const;

  WorldModelConfig world_model(int obs_dim, int act_dim) const;
  OccupancyConfig occupancy() const;
  LambdaConfig lambda_config() const;
  ExplorationNoise collection_noise() const;
  std::string variant() const;

  /// Flat key = value view used by config files and checkpoint metadata.
  std::map<std::string, std::string> to_map() const;
  /// Applies key = value pairs; unknown keys or malformed values raise ConfigError.
  void apply(const std::map<std::string, std::string>& values);
};

/// Parses a flat `key = value` file ('#' starts a comment).
std::map<std::string, std::string> parse_key_values(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

/// Ablation variant names: baseline, exploration, modifications, full.
TrainConfig with_variant(TrainConfig cfg, const std::string& variant);

}  // namespace maxent
