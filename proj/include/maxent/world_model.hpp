#pragma once

#include <torch/torch.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "maxent/nn.hpp"
#include "maxent/trajectory.hpp"

namespace maxent {

struct WorldModelConfig {
  int obs_dim = 1;
  int act_dim = 1;
  int deter_dim = 200;
  int stoch_dim = 128;
  int hidden = 200;
  int layers = 2;
  double min_std = 0.1;
  // Revised objective: kl_coef * KL(posterior || N(0, I)) + jeffreys_coef * J(posterior, prior).
  double kl_coef = 0.1;
  double jeffreys_coef = 0.1;
  // Original objective: baseline_kl_coef * KL(posterior || prior).
  double baseline_kl_coef = 1.0;
  // Off: original block order, (h, z) decoder, MSE reward loss, no termination head.
  bool modifications = true;
  // Observation normalization seen by encoder and decoder: obs_scale * (2 (o - low) / (high - low) - 1)
  // when bounds are given, obs_scale * o otherwise. The unit-variance decoder likelihood only
  // outweighs the KL terms when observations vary on a unit scale.
  std::vector<double> obs_low;
  std::vector<double> obs_high;
  double obs_scale = 1.0;
  // Actions enter the transition rescaled to [-1, 1] when bounds are given.
  std::vector<double> act_low;
  std::vector<double> act_high;

  void validate() const;
};

/// Deterministic recurrent part h and stochastic part z, each [B, dim].
struct LatentState {
  torch::Tensor h;
  torch::Tensor z;

  torch::Tensor features() const { return torch::cat({h, z}, -1); }
  int64_t batch() const { return h.size(0); }
  LatentState detach() const { return {h.detach(), z.detach()}; }
};

struct ObserveResult {
  LatentState state;
  DiagGaussian posterior;
};

struct ImagineResult {
  LatentState state;
  DiagGaussian prior;
  torch::Tensor reward;  // [B]
  torch::Tensor cont;    // [B], 1 - termination probability
};

/// Fixed-length real-experience subsequences.
///   observations [B, L, obs_dim], actions [B, L-1, act_dim], rewards [B, L-1], dones [B, L-1]
struct SequenceBatch {
  torch::Tensor observations;
  torch::Tensor actions;
  torch::Tensor rewards;
  torch::Tensor dones;

  int64_t batch() const { return observations.size(0); }
  int64_t length() const { return observations.size(1); }
  void validate() const;
};

struct WorldModelLoss {
  torch::Tensor total;
  std::map<std::string, torch::Tensor> components;
  /// Posterior latents at the first observed index of every subsequence, detached.
  LatentState start;
};

class WorldModelImpl : public torch::nn::Module, public LatentDynamics {
 public:
  explicit WorldModelImpl(WorldModelConfig cfg);

  const WorldModelConfig& config() const { return cfg_; }
  int64_t state_dim() const { return cfg_.deter_dim + cfg_.stoch_dim; }
  bool has_termination_head() const { return !continue_net_.is_empty(); }

  LatentState init_state(int64_t batch) const;

  /// Posterior update. Without `prev_action` h is carried over unchanged (episode start);
  /// otherwise h' = transition(h, z, prev_action). z' is a reparametrized posterior draw.
  ObserveResult observe_step(const LatentState& state, const std::optional<torch::Tensor>& prev_action,
                             const torch::Tensor& obs, NoiseSource& noise);

  /// State the agent acts on before its first action. With modifications the first
  /// observation is encoded; the original order leaves the zero state untouched.
  LatentState start_episode(const torch::Tensor& obs, NoiseSource& noise);

  /// Prior transition with reward and continuation heads evaluated at the new state.
  ImagineResult imagine_step(const LatentState& state, const torch::Tensor& action, NoiseSource& noise);

  ImaginedStep imagine_features(const torch::Tensor& state, const torch::Tensor& action,
                                NoiseSource& noise) override;

  /// Observation reconstruction from the stochastic part only (modifications on).
  torch::Tensor decode(const torch::Tensor& z);
  /// Reconstruction under the active variant: decode(z) or decoder(h, z).
  torch::Tensor reconstruct(const LatentState& state);
  /// Raw observation -> the normalized space used by the encoder and the reconstruction loss.
  torch::Tensor normalize_obs(const torch::Tensor& obs) const;

  torch::Tensor transition(const LatentState& state, const torch::Tensor& action);
  DiagGaussian prior(const torch::Tensor& h);
  DiagGaussian posterior(const torch::Tensor& h, const torch::Tensor& obs);
  torch::Tensor reward(const LatentState& state);
  /// Termination logit; throws when the variant has no termination head.
  torch::Tensor termination_logit(const LatentState& state);

  WorldModelLoss loss(const SequenceBatch& batch, NoiseSource& noise);

  LatentState split(const torch::Tensor& features) const;

 private:
  WorldModelConfig cfg_;
  Mlp pre_{nullptr};
  torch::nn::GRUCell cell_{nullptr};
  Mlp prior_net_{nullptr};
  Mlp posterior_net_{nullptr};
  Mlp decoder_{nullptr};
  Mlp reward_net_{nullptr};
  Mlp continue_net_{nullptr};
};
TORCH_MODULE(WorldModel);

}  // namespace maxent
