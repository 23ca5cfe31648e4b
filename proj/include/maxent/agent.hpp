#pragma once

#include <torch/torch.h>

#include <optional>
#include <vector>

#include "maxent/nn.hpp"
#include "maxent/trajectory.hpp"

namespace maxent {

struct ActionBounds {
  std::vector<double> low;
  std::vector<double> high;

  int64_t dim() const { return static_cast<int64_t>(low.size()); }
  /// Maps a squashed value in [-1, 1] into the box.
  torch::Tensor scale(const torch::Tensor& squashed) const;
  torch::Tensor clip(const torch::Tensor& action) const;
  torch::Tensor uniform(int64_t batch, NoiseSource& noise, const torch::TensorOptions& opts) const;
};

struct ActorConfig {
  int state_dim = 1;
  ActionBounds bounds;
  int hidden = 200;
  int layers = 2;
  double min_std = 0.05;
};

/// Tanh-squashed diagonal Gaussian policy with a zero-initialized output layer.
class StochasticActorImpl : public torch::nn::Module {
 public:
  explicit StochasticActorImpl(ActorConfig cfg);

  /// Pre-squash mean and std, each [B, A].
  DiagGaussian distribution(const torch::Tensor& state);
  /// Reparametrized draw tanh(mean + std * eps) scaled into the box.
  torch::Tensor sample(const torch::Tensor& state, NoiseSource& noise);
  /// Squashed mean.
  torch::Tensor mode(const torch::Tensor& state);

  const ActionBounds& bounds() const { return cfg_.bounds; }

 private:
  ActorConfig cfg_;
  Mlp net_{nullptr};
};
TORCH_MODULE(StochasticActor);

/// Deterministic policy tanh(net(state)) scaled into the box; output layer starts at zero.
class DeterministicActorImpl : public torch::nn::Module {
 public:
  explicit DeterministicActorImpl(ActorConfig cfg);
  torch::Tensor forward(const torch::Tensor& state);

  const ActionBounds& bounds() const { return cfg_.bounds; }

 private:
  ActorConfig cfg_;
  Mlp net_{nullptr};
};
TORCH_MODULE(DeterministicActor);

/// Q(state, action) when act_dim > 0, V(state) when act_dim == 0.
class CriticImpl : public torch::nn::Module {
 public:
  CriticImpl(int64_t state_dim, int64_t act_dim, int64_t hidden, int64_t layers);
  torch::Tensor forward(const torch::Tensor& state, const torch::Tensor& action = {});

  bool is_q() const { return act_dim_ > 0; }

 private:
  int64_t act_dim_;
  Mlp net_{nullptr};
};
TORCH_MODULE(Critic);

/// Real-environment exploration: with probability eps_random the action is replaced by a
/// uniform draw, otherwise N(0, noise_std^2) (in squashed units) is added and the result clipped.
struct ExplorationNoise {
  double eps_random = 0.1;
  double noise_std = 0.3;
};

torch::Tensor act_stochastic(StochasticActor& actor, const torch::Tensor& state, NoiseSource& noise,
                             const std::optional<ExplorationNoise>& exploration = std::nullopt);
torch::Tensor act_deterministic(DeterministicActor& actor, const torch::Tensor& state);

struct LambdaConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double beta_start = 0.2;
  double beta_end = 0.0001;

  void validate() const;
};

/// G_t = r_t + gamma c_t [(1 - lambda) V_{t+1} + lambda G_{t+1}], G_H = V_H.
/// rewards/continues are [H, ...], values [H+1, ...]; result [H, ...].
torch::Tensor lambda_returns(const torch::Tensor& rewards, const torch::Tensor& values, const torch::Tensor& continues,
                             double gamma, double lambda);

/// Scalar reference of the unrolled sum for c == 1:
/// (lambda gamma)^H V_H + sum_t (gamma lambda)^t (r_t + gamma (1 - lambda) V_{t+1}).
double lambda_return_closed_form(const std::vector<double>& rewards, const std::vector<double>& values, double gamma,
                                 double lambda);

/// Critic estimates [H+1, B] along a trajectory. For a Q-critic the recorded actions are used
/// for t < H and `last_action` at the final state; a V-critic ignores actions.
torch::Tensor critic_values(Critic& critic, const ImaginedTrajectory& traj, const torch::Tensor& last_action);

/// Smooth L1 (or MSE) between critic estimates and detached targets. With first_state_only
/// only t = 0 of every rollout contributes.
torch::Tensor critic_loss(Critic& critic, const ImaginedTrajectory& traj, const torch::Tensor& targets,
                          bool first_state_only = true, bool smooth = true);

/// -(G_0 + beta * H) averaged over rollouts. `returns` is [H, B], `entropy` [B] or undefined.
torch::Tensor actor_loss_stochastic(const torch::Tensor& returns, const torch::Tensor& entropy, double beta,
                                    bool first_state_only = true);
/// -G_0 averaged over rollouts.
torch::Tensor actor_loss_deterministic(const torch::Tensor& returns, bool first_state_only = true);

/// Linear anneal from beta_start to beta_end; steps past the end clamp to beta_end.
double beta_schedule(int64_t step, int64_t total_steps, const LambdaConfig& cfg);

}  // namespace maxent
