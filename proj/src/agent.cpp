#include "maxent/agent.hpp"

#include <stdexcept>

#include "maxent/errors.hpp"

namespace maxent {

namespace {

torch::Tensor bound_tensor(const std::vector<double>& v, const torch::TensorOptions& opts) {
  return torch::tensor(v, torch::TensorOptions().dtype(torch::kFloat64)).to(opts.dtype());
}

}  // namespace

torch::Tensor ActionBounds::scale(const torch::Tensor& squashed) const {
  auto lo = bound_tensor(low, squashed.options());
  auto hi = bound_tensor(high, squashed.options());
  return lo + (squashed + 1.0) * 0.5 * (hi - lo);
}

torch::Tensor ActionBounds::clip(const torch::Tensor& action) const {
  auto lo = bound_tensor(low, action.options());
  auto hi = bound_tensor(high, action.options());
  return torch::max(torch::min(action, hi), lo);
}

torch::Tensor ActionBounds::uniform(int64_t batch, NoiseSource& noise, const torch::TensorOptions& opts) const {
  return scale(noise.uniform({batch, dim()}, opts) * 2.0 - 1.0);
}

StochasticActorImpl::StochasticActorImpl(ActorConfig cfg) : cfg_(std::move(cfg)) {
  net_ = register_module("net", Mlp(cfg_.state_dim, cfg_.hidden, cfg_.layers, 2 * cfg_.bounds.dim(), true));
}

DiagGaussian StochasticActorImpl::distribution(const torch::Tensor& state) {
  return DiagGaussian::from_raw(net_->forward(state), cfg_.min_std);
}

torch::Tensor StochasticActorImpl::sample(const torch::Tensor& state, NoiseSource& noise) {
  return cfg_.bounds.scale(torch::tanh(distribution(state).rsample(noise)));
}

torch::Tensor StochasticActorImpl::mode(const torch::Tensor& state) {
  return cfg_.bounds.scale(torch::tanh(distribution(state).mean));
}

DeterministicActorImpl::DeterministicActorImpl(ActorConfig cfg) : cfg_(std::move(cfg)) {
  net_ = register_module("net", Mlp(cfg_.state_dim, cfg_.hidden, cfg_.layers, cfg_.bounds.dim(), true));
}

torch::Tensor DeterministicActorImpl::forward(const torch::Tensor& state) {
  return cfg_.bounds.scale(torch::tanh(net_->forward(state)));
}

CriticImpl::CriticImpl(int64_t state_dim, int64_t act_dim, int64_t hidden, int64_t layers) : act_dim_(act_dim) {
  net_ = register_module("net", Mlp(state_dim + act_dim, hidden, layers, 1));
}

torch::Tensor CriticImpl::forward(const torch::Tensor& state, const torch::Tensor& action) {
  if (!is_q()) return net_->forward(state).squeeze(-1);
  if (!action.defined()) throw std::invalid_argument("Q-critic needs an action");
  return net_->forward(torch::cat({state, action}, -1)).squeeze(-1);
}

torch::Tensor act_stochastic(StochasticActor& actor, const torch::Tensor& state, NoiseSource& noise,
                             const std::optional<ExplorationNoise>& exploration) {
  auto action = actor->sample(state, noise);
  if (!exploration) return action;
  const auto& bounds = actor->bounds();
  const int64_t B = state.size(0);
  auto opts = action.options().requires_grad(false);
  auto half_range = (bound_tensor(bounds.high, opts) - bound_tensor(bounds.low, opts)) * 0.5;
  auto jittered = bounds.clip(action + noise.normal({B, bounds.dim()}, opts) * exploration->noise_std * half_range);
  auto random = bounds.uniform(B, noise, opts);
  auto pick_random = noise.uniform({B, 1}, opts) < exploration->eps_random;
  return torch::where(pick_random, random, jittered);
}

torch::Tensor act_deterministic(DeterministicActor& actor, const torch::Tensor& state) { return actor->forward(state); }

void LambdaConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (beta_start < 0.0 || beta_end < 0.0) throw ConfigError("beta endpoints must be non-negative");
}

torch::Tensor lambda_returns(const torch::Tensor& rewards, const torch::Tensor& values, const torch::Tensor& continues,
                             double gamma, double lambda) {
  const int64_t H = rewards.size(0);
  if (H < 1 || values.size(0) != H + 1 || continues.sizes() != rewards.sizes() ||
      values[0].sizes() != rewards[0].sizes())
    throw std::invalid_argument("lambda_returns: expected rewards/continues [H, ...] and values [H+1, ...]");
  std::vector<torch::Tensor> out(H);
  auto next = values[H];
  for (int64_t t = H - 1; t >= 0; --t) {
    next = rewards[t] + gamma * continues[t] * ((1.0 - lambda) * values[t + 1] + lambda * next);
    out[t] = next;
  }
  return torch::stack(out);
}

double lambda_return_closed_form(const std::vector<double>& rewards, const std::vector<double>& values, double gamma,
                                 double lambda) {
  const size_t H = rewards.size();
  if (values.size() != H + 1) throw std::invalid_argument("closed form: values must have H+1 entries");
  double total = std::pow(lambda, static_cast<double>(H)) * std::pow(gamma, static_cast<double>(H)) * values[H];
  for (size_t t = 0; t < H; ++t) {
    const double w = std::pow(gamma, static_cast<double>(t)) * std::pow(lambda, static_cast<double>(t));
    total += w * (rewards[t] + gamma * (1.0 - lambda) * values[t + 1]);
  }
  return total;
}

torch::Tensor critic_values(Critic& critic, const ImaginedTrajectory& traj, const torch::Tensor& last_action) {
  const int64_t H = traj.horizon();
  if (!critic->is_q()) return critic->forward(traj.states);
  auto head = critic->forward(traj.states.narrow(0, 0, H), traj.actions);
  auto tail = critic->forward(traj.states[H], last_action).unsqueeze(0);
  return torch::cat({head, tail}, 0);
}

torch::Tensor critic_loss(Critic& critic, const ImaginedTrajectory& traj, const torch::Tensor& targets,
                          bool first_state_only, bool smooth) {
  const int64_t steps = first_state_only ? 1 : traj.horizon();
  auto states = traj.states.narrow(0, 0, steps).detach();
  auto pred = critic->is_q() ? critic->forward(states, traj.actions.narrow(0, 0, steps).detach())
                             : critic->forward(states);
  auto target = targets.narrow(0, 0, steps).detach();
  return (smooth ? smooth_l1(pred, target) : 0.5 * (pred - target).pow(2)).mean();
}

torch::Tensor actor_loss_stochastic(const torch::Tensor& returns, const torch::Tensor& entropy, double beta,
                                    bool first_state_only) {
  auto objective = first_state_only ? returns[0] : returns.mean(0);
  if (entropy.defined() && beta != 0.0) objective = objective + beta * entropy;
  return -objective.mean();
}

torch::Tensor actor_loss_deterministic(const torch::Tensor& returns, bool first_state_only) {
  return actor_loss_stochastic(returns, {}, 0.0, first_state_only);
}

double beta_schedule(int64_t step, int64_t total_steps, const LambdaConfig& cfg) {
  if (step < 0 || total_steps <= 0) throw std::invalid_argument("beta_schedule: need step >= 0 and total_steps > 0");
  if (step >= total_steps) return cfg.beta_end;
  return cfg.beta_start + (cfg.beta_end - cfg.beta_start) * static_cast<double>(step) / static_cast<double>(total_steps);
}

}  // namespace maxent
