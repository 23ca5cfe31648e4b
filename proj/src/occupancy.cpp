#include "maxent/occupancy.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "maxent/errors.hpp"

namespace maxent {

void OccupancyConfig::validate() const {
  if (!(gamma_q > 0.0 && gamma_q < 1.0)) throw ConfigError("gamma_q must lie in (0, 1)");
  if (!(soft_tau > 0.0 && soft_tau <= 1.0)) throw ConfigError("soft_tau must lie in (0, 1]");
  if (!(lr > 0.0)) throw ConfigError("MDN learning rate must be positive");
  if (horizon < 1 || components < 1 || hidden < 1) throw ConfigError("MDN sizes must be positive");
  if (!(min_std > 0.0)) throw ConfigError("MDN min_std must be positive");
}

MdnImpl::MdnImpl(int64_t dim, int64_t hidden, int64_t components, double min_std)
    : dim_(dim), k_(components), min_std_(min_std) {
  net_ = register_module("net", Mlp(dim, hidden, 2, components * (1 + 2 * dim)));
}

MixtureParams MdnImpl::forward(const torch::Tensor& state) {
  if (state.size(-1) != dim_) throw std::invalid_argument("MDN input has wrong dimension");
  auto out = net_->forward(state);
  const int64_t B = state.size(0);
  auto logits = out.narrow(-1, 0, k_);
  auto means = out.narrow(-1, k_, k_ * dim_).reshape({B, k_, dim_});
  auto raw_std = out.narrow(-1, k_ + k_ * dim_, k_ * dim_).reshape({B, k_, dim_});
  MixtureParams p{torch::log_softmax(logits, -1), means, torch::nn::functional::softplus(raw_std) + min_std_};
  require_finite(out, "MDN output");
  return p;
}

MdnPair::MdnPair(int64_t dim, const OccupancyConfig& cfg) {
  cfg.validate();
  online = Mdn(dim, cfg.hidden, cfg.components, cfg.min_std);
  target = Mdn(dim, cfg.hidden, cfg.components, cfg.min_std);
  soft_update(target, online, 1.0);
  set_requires_grad(*target, false);
}

torch::Tensor mdn_log_prob(const MixtureParams& params, const torch::Tensor& x) {
  const bool single = x.dim() == 2;
  auto xs = single ? x.unsqueeze(0) : x;                 // [N, B, d]
  auto diff = (xs.unsqueeze(-2) - params.means) / params.stds;  // [N, B, K, d]
  static const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
  auto comp = (-0.5 * diff.pow(2) - params.stds.log() - kLogSqrt2Pi).sum(-1);  // [N, B, K]
  auto lp = torch::logsumexp(comp + params.log_weights, -1);
  return single ? lp.squeeze(0) : lp;
}

torch::Tensor mdn_sample(const MixtureParams& params, int64_t count, NoiseSource& noise) {
  if (count < 1) throw std::invalid_argument("mdn_sample: count must be at least 1");
  const int64_t B = params.means.size(0);
  const int64_t d = params.dim();
  auto idx = noise.categorical(params.weights(), count);            // [count, B]
  auto gather_idx = idx.view({count, B, 1, 1}).expand({count, B, 1, d});
  auto mu = params.means.unsqueeze(0).expand({count, B, params.components(), d}).gather(2, gather_idx).squeeze(2);
  auto sd = params.stds.unsqueeze(0).expand({count, B, params.components(), d}).gather(2, gather_idx).squeeze(2);
  return mu + sd * noise.normal(mu.sizes(), mu.options().requires_grad(false));
}

OccupancyWeights occupancy_weights(int n, double gamma_q) {
  if (n < 1) throw std::invalid_argument("occupancy_weights: n must be at least 1");
  if (!(gamma_q > 0.0 && gamma_q < 1.0)) throw std::invalid_argument("occupancy_weights: gamma_q outside (0, 1)");
  OccupancyWeights out;
  out.w.resize(n);
  double g = 1.0;
  for (int i = 0; i < n; ++i) {
    out.w[i] = (1.0 - gamma_q) * g;
    g *= gamma_q;
  }
  out.w_boot = g;
  return out;
}

torch::Tensor occupancy_term_weights(const torch::Tensor& continues, double gamma_q) {
  const int64_t n = continues.size(0);
  auto base = occupancy_weights(static_cast<int>(n), gamma_q);
  std::vector<torch::Tensor> rows;
  auto alive = torch::ones_like(continues[0]);
  double g = 1.0;
  for (int64_t i = 0; i < n; ++i) {
    rows.push_back(alive * (base.w[i] + (1.0 - continues[i]) * g * gamma_q));
    alive = alive * continues[i];
    g *= gamma_q;
  }
  rows.push_back(alive * base.w_boot);
  return torch::stack(rows);
}

namespace {

void check_horizon(const ImaginedTrajectory& traj, const OccupancyConfig& cfg) {
  if (traj.horizon() < 1) throw std::invalid_argument("occupancy: trajectory horizon must be at least 1");
  if (traj.horizon() != cfg.horizon)
    throw std::invalid_argument("occupancy: trajectory horizon " + std::to_string(traj.horizon()) +
                                " does not match bootstrap horizon " + std::to_string(cfg.horizon));
}

torch::Tensor bootstrap_sample(Mdn& target, const torch::Tensor& last_state, NoiseSource& noise) {
  torch::NoGradGuard no_grad;
  return mdn_sample(target->forward(last_state.detach()), 1, noise).detach();  // [1, B, d]
}

}  // namespace

torch::Tensor occupancy_loss(MdnPair& nets, const ImaginedTrajectory& traj, const OccupancyConfig& cfg,
                             NoiseSource& noise) {
  check_horizon(traj, cfg);
  const int64_t n = traj.horizon();
  auto states = traj.states.detach();
  auto params = nets.online->forward(states[0]);
  auto visited = mdn_log_prob(params, states.narrow(0, 1, n));  // [n, B]
  auto boot = mdn_log_prob(params, bootstrap_sample(nets.target, states[n], noise));
  auto weights = occupancy_term_weights(traj.continues.detach(), cfg.gamma_q);
  return -(weights * torch::cat({visited, boot}, 0)).sum(0).mean();
}

torch::Tensor entropy_bonus(Mdn& target, const ImaginedTrajectory& traj, const OccupancyConfig& cfg,
                            NoiseSource& noise) {
  check_horizon(traj, cfg);
  return entropy_bonus_given(target, traj, cfg, bootstrap_sample(target, traj.states[traj.horizon()], noise));
}

torch::Tensor entropy_bonus_given(Mdn& target, const ImaginedTrajectory& traj, const OccupancyConfig& cfg,
                                  const torch::Tensor& bootstrap, const torch::Tensor& weights) {
  check_horizon(traj, cfg);
  const int64_t n = traj.horizon();
  auto params = target->forward(traj.states[0]);
  auto visited = mdn_log_prob(params, traj.states.narrow(0, 1, n));
  auto boot = mdn_log_prob(params, bootstrap.detach());
  auto w = weights.defined() ? weights.detach() : occupancy_term_weights(traj.continues.detach(), cfg.gamma_q);
  return -(w * torch::cat({visited, boot}, 0)).sum(0);
}

void soft_update(Mdn& target, Mdn& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in (0, 1]");
  torch::NoGradGuard no_grad;
  auto t = target->named_parameters();
  auto o = online->named_parameters();
  if (t.size() != o.size()) throw std::invalid_argument("soft_update: parameter count mismatch");
  for (const auto& item : o) {
    auto* dst = t.find(item.key());
    if (dst == nullptr || dst->sizes() != item.value().sizes())
      throw std::invalid_argument("soft_update: shape mismatch at " + item.key());
    dst->mul_(1.0 - tau).add_(item.value(), tau);
  }
}

std::vector<double> tabular_occupancy_oracle(const envs::TabularMdp& mdp, const PolicyTable& policy, double gamma_q,
                                             int s0) {
  mdp.validate();
  const int S = mdp.n_states;
  if (!(gamma_q > 0.0 && gamma_q < 1.0)) throw std::invalid_argument("oracle: gamma_q outside (0, 1)");
  if (s0 < 0 || s0 >= S) throw std::invalid_argument("oracle: start state out of range");
  if (static_cast<int>(policy.size()) != S) throw std::invalid_argument("oracle: policy has wrong number of rows");

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(S, S);
  for (int s = 0; s < S; ++s) {
    if (static_cast<int>(policy[s].size()) != mdp.n_actions)
      throw std::invalid_argument("oracle: policy row has wrong number of actions");
    for (int a = 0; a < mdp.n_actions; ++a)
      for (int t = 0; t < S; ++t) P(s, t) += policy[s][a] * mdp.p(s, a, t);
  }
  Eigen::VectorXd rhs = (1.0 - gamma_q) * P.row(s0).transpose();
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(S, S) - gamma_q * P.transpose();
  Eigen::VectorXd q = A.partialPivLu().solve(rhs);
  return {q.data(), q.data() + S};
}

torch::Tensor mixture_unit_cell_mass(const MixtureParams& params) {
  auto mu = params.means.to(torch::kFloat64);
  auto sd = params.stds.to(torch::kFloat64);
  auto interval = [&](double lo, double hi) {
    const double r2 = std::sqrt(2.0);
    return (0.5 * (torch::erf((hi - mu) / (sd * r2)) - torch::erf((lo - mu) / (sd * r2)))).clamp_min(0.0);
  };
  auto off = interval(-0.5, 0.5).clamp_min(1e-300).log();  // [B, K, d]
  auto on = interval(0.5, 1.5).clamp_min(1e-300).log();
  // log mass of cell j = sum_i off_i - off_j + on_j
  auto log_cells = off.sum(-1, true) - off + on;             // [B, K, d]
  auto w = params.log_weights.to(torch::kFloat64).unsqueeze(-1);
  return torch::logsumexp(log_cells + w, 1).exp();           // [B, d]
}

}  // namespace maxent
