#include "maxent/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "maxent/agent.hpp"
#include "maxent/occupancy.hpp"
#include "maxent/rollout.hpp"
#include "maxent/world_model.hpp"

namespace maxent {

const std::vector<std::string>& grad_check_components() {
  static const std::vector<std::string> names = {"world_model", "mdn",       "critic",
                                                 "actor_stoch", "actor_det", "imagination"};
  return names;
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

double finite_difference_check(const std::function<torch::Tensor()>& loss_fn, const std::vector<torch::Tensor>& params,
                               int per_tensor, uint64_t seed, int64_t* coordinates) {
  constexpr double h = 1e-5;
  auto loss = loss_fn();
  auto grads = torch::autograd::grad({loss}, params, {}, false, false, true);
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  int64_t count = 0;
  torch::NoGradGuard no_grad;
  for (size_t p = 0; p < params.size(); ++p) {
    auto flat = params[p].view(-1);
    auto g = grads[p].defined() ? grads[p].reshape(-1) : torch::zeros_like(flat);
    const int64_t n = flat.numel();
    std::vector<int64_t> idx(n);
    for (int64_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<int64_t>(n, per_tensor));
    for (int64_t i : idx) {
      const double orig = flat[i].item<double>();
      flat[i].fill_(orig + h);
      const double up = loss_fn().item<double>();
      flat[i].fill_(orig - h);
      const double down = loss_fn().item<double>();
      flat[i].fill_(orig);
      worst = std::max(worst, relative_error(g[i].item<double>(), (up - down) / (2.0 * h)));
      ++count;
    }
  }
  if (coordinates) *coordinates = count;
  return worst;
}

namespace {

constexpr int kObs = 3, kAct = 2, kDeter = 4, kStoch = 3, kHidden = 6, kHorizon = 3, kBatch = 3;

WorldModel tiny_world_model(bool modifications) {
  WorldModelConfig cfg;
  cfg.obs_dim = kObs;
  cfg.act_dim = kAct;
  cfg.deter_dim = kDeter;
  cfg.stoch_dim = kStoch;
  cfg.hidden = kHidden;
  cfg.modifications = modifications;
  WorldModel wm(cfg);
  wm->to(torch::kFloat64);
  return wm;
}

// Zero-initialized heads would make every upstream gradient vanish; give them weight.
void randomize_heads(torch::nn::Module& m) {
  torch::NoGradGuard no_grad;
  for (auto& item : m.named_parameters())
    if (item.key().find("out.") != std::string::npos) item.value().normal_(0.0, 0.5);
}

const auto f64 = torch::TensorOptions().dtype(torch::kFloat64);

SequenceBatch random_batch(int64_t B, int64_t L) {
  auto dones = torch::zeros({B, L - 1}, f64);
  dones.index_put_({0, L - 2}, 1.0);
  return {torch::randn({B, L, kObs}, f64), torch::rand({B, L - 1, kAct}, f64) * 2 - 1,
          torch::randn({B, L - 1}, f64), dones};
}

ActorConfig tiny_actor() { return {kDeter + kStoch, ActionBounds{{-1.0, -2.0}, {1.0, 0.5}}, kHidden, 2, 0.05}; }

GradCheckReport check(const std::string& name, double tol, const std::function<torch::Tensor()>& fn,
                      const std::vector<torch::Tensor>& params, uint64_t seed) {
  GradCheckReport r;
  r.component = name;
  r.tolerance = tol;
  r.max_rel_error = finite_difference_check(fn, params, 6, seed, &r.coordinates);
  return r;
}

GradCheckReport check_world_model(uint64_t seed) {
  GradCheckReport out{"world_model", 0.0, 0, 1e-3};
  for (bool mods : {true, false}) {
    auto wm = tiny_world_model(mods);
    auto batch = random_batch(2, 4);
    auto fn = [&] {
      NoiseSource noise(seed + 1);
      return wm->loss(batch, noise).total;
    };
    auto r = check("world_model", 1e-3, fn, wm->parameters(), seed);
    out.max_rel_error = std::max(out.max_rel_error, r.max_rel_error);
    out.coordinates += r.coordinates;
  }
  return out;
}

GradCheckReport check_mdn(uint64_t seed) {
  Mdn mdn(kObs, kHidden, 3, 0.05);
  mdn->to(torch::kFloat64);
  auto states = torch::randn({4, kObs}, f64);
  auto x = torch::randn({4, kObs}, f64);
  auto fn = [&] { return -mdn_log_prob(mdn->forward(states), x).mean(); };
  return check("mdn", 1e-4, fn, mdn->parameters(), seed);
}

ImaginedTrajectory random_trajectory() {
  const int d = kDeter + kStoch;
  return {torch::randn({kHorizon + 1, kBatch, d}, f64), torch::rand({kHorizon, kBatch, kAct}, f64) * 2 - 1,
          torch::randn({kHorizon, kBatch}, f64), torch::rand({kHorizon, kBatch}, f64)};
}

GradCheckReport check_critic(uint64_t seed) {
  Critic critic(kDeter + kStoch, kAct, kHidden, 2);
  critic->to(torch::kFloat64);
  auto traj = random_trajectory();
  auto targets = torch::randn({kHorizon, kBatch}, f64) * 2;
  auto fn = [&] { return critic_loss(critic, traj, targets, true, true) + critic_loss(critic, traj, targets, false, false); };
  return check("critic", 1e-3, fn, critic->parameters(), seed);
}

/// Frozen world model + critic (+ target MDN) shared by the actor checks.
struct FrozenImagination {
  WorldModel wm = tiny_world_model(true);
  Critic critic{kDeter + kStoch, kAct, kHidden, 2};
  Mdn target{kDeter + kStoch, kHidden, 3, 0.05};
  OccupancyConfig occ;
  torch::Tensor start = torch::randn({kBatch, kDeter + kStoch}, f64);
  torch::Tensor bootstrap;
  torch::Tensor weights;  // occupancy weights are constants in the entropy gradient

  FrozenImagination() {
    critic->to(torch::kFloat64);
    target->to(torch::kFloat64);
    for (torch::nn::Module* m : std::initializer_list<torch::nn::Module*>{wm.get(), critic.get(), target.get()})
      set_requires_grad(*m, false);
    occ.horizon = kHorizon;
    bootstrap = torch::randn({1, kBatch, kDeter + kStoch}, f64);
  }

  torch::Tensor loss(const ImaginationPolicy& policy, const std::function<torch::Tensor(const torch::Tensor&)>& last,
                     bool entropy, uint64_t seed) {
    NoiseSource noise(seed);
    auto traj = imagine_rollout(*wm, policy, start, kHorizon, noise);
    auto values = critic_values(critic, traj, last(traj.states[kHorizon]));
    auto returns = lambda_returns(traj.rewards, values, traj.continues, 0.99, 0.95);
    if (!entropy) return actor_loss_deterministic(returns);
    if (!weights.defined()) weights = occupancy_term_weights(traj.continues, occ.gamma_q).detach();
    return actor_loss_stochastic(returns, entropy_bonus_given(target, traj, occ, bootstrap, weights), 0.2);
  }
};

GradCheckReport check_actor_stoch(uint64_t seed) {
  FrozenImagination world;
  StochasticActor actor(tiny_actor());
  actor->to(torch::kFloat64);
  randomize_heads(*actor);
  auto fn = [&] {
    NoiseSource last_noise(seed + 7);
    return world.loss([&](const torch::Tensor& s, NoiseSource& n) { return actor->sample(s, n); },
                      [&](const torch::Tensor& s) { return actor->sample(s, last_noise); }, true, seed + 1);
  };
  return check("actor_stoch", 1e-3, fn, actor->parameters(), seed);
}

GradCheckReport check_actor_det(uint64_t seed) {
  FrozenImagination world;
  DeterministicActor actor(tiny_actor());
  actor->to(torch::kFloat64);
  randomize_heads(*actor);
  auto fn = [&] {
    return world.loss([&](const torch::Tensor& s, NoiseSource&) { return actor->forward(s); },
                      [&](const torch::Tensor& s) { return actor->forward(s); }, false, seed + 1);
  };
  return check("actor_det", 1e-3, fn, actor->parameters(), seed);
}

GradCheckReport check_imagination(uint64_t seed) {
  FrozenImagination world;
  StochasticActor actor(tiny_actor());
  actor->to(torch::kFloat64);
  randomize_heads(*actor);
  auto fn = [&] {
    NoiseSource noise(seed + 1);
    ImaginationPolicy policy = [&](const torch::Tensor& s, NoiseSource& n) { return actor->sample(s, n); };
    return imagine_rollout(*world.wm, policy, world.start, kHorizon, noise).rewards.sum();
  };
  return check("imagination", 1e-3, fn, actor->parameters(), seed);
}

}  // namespace

GradCheckReport grad_check(const std::string& component, uint64_t seed) {
  torch::manual_seed(seed);
  if (component == "world_model") return check_world_model(seed);
  if (component == "mdn") return check_mdn(seed);
  if (component == "critic") return check_critic(seed);
  if (component == "actor_stoch") return check_actor_stoch(seed);
  if (component == "actor_det") return check_actor_det(seed);
  if (component == "imagination") return check_imagination(seed);
  throw std::invalid_argument("unknown grad-check component '" + component + "'");
}

ChainExactModel::ChainExactModel(int n_states, bool absorbing) : n_(n_states), absorbing_(absorbing) {
  if (n_states < 2) throw std::invalid_argument("ChainExactModel needs at least 2 states");
}

torch::Tensor ChainExactModel::one_hot(const std::vector<int64_t>& states) const {
  auto idx = torch::tensor(states, torch::kInt64);
  return torch::one_hot(idx, n_).to(torch::kFloat64);
}

ImaginedStep ChainExactModel::imagine_features(const torch::Tensor& state, const torch::Tensor& action,
                                               NoiseSource&) {
  auto opts = state.options();
  // Shift right; the last state maps to itself.
  auto shift = torch::zeros({n_, n_}, opts);
  for (int s = 0; s < n_ - 1; ++s) shift.index_put_({s, s + 1}, 1.0);
  shift.index_put_({n_ - 1, n_ - 1}, 1.0);
  auto next = state.matmul(shift);

  auto p1 = ((action.select(-1, 0) + 1.0) * 0.5).clamp(0.0, 1.0);  // [B]
  auto even = torch::zeros({n_}, opts);
  auto live = torch::ones({n_}, opts);
  for (int s = 0; s < n_; s += 2) even.index_put_({s}, 1.0);
  live.index_put_({n_ - 1}, 0.0);
  auto mass_even = state.matmul(even * live);
  auto mass_odd = state.matmul((1.0 - even) * live);
  auto reward = mass_even * p1 + mass_odd * (1.0 - p1);
  auto cont = absorbing_ ? torch::ones_like(reward) : 1.0 - next.select(-1, n_ - 1);
  return {next, reward, cont};
}

ValueIterationResult value_iteration(const envs::TabularMdp& mdp, double gamma, double tol) {
  mdp.validate();
  const int S = mdp.n_states, A = mdp.n_actions;
  std::vector<double> v(S, 0.0);
  auto q = [&](int s, int a) {
    double total = mdp.r(s, a);
    for (int t = 0; t < S; ++t) total += gamma * mdp.p(s, a, t) * (mdp.terminal[t] ? 0.0 : v[t]);
    return total;
  };
  for (int it = 0; it < 100000; ++it) {
    double delta = 0.0;
    for (int s = 0; s < S; ++s) {
      if (mdp.terminal[s]) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) best = std::max(best, q(s, a));
      delta = std::max(delta, std::abs(best - v[s]));
      v[s] = best;
    }
    if (delta < tol) break;
  }
  ValueIterationResult out{v, std::vector<int>(S, -1)};
  for (int s = 0; s < S; ++s) {
    if (mdp.terminal[s]) continue;
    int best = 0;
    for (int a = 1; a < A; ++a)
      if (q(s, a) > q(s, best) + 1e-12) best = a;
    out.greedy_actions[s] = best;
  }
  return out;
}

OracleCheckReport oracle_check(double gamma_q, int chain_size, uint64_t seed, int iterations) {
  if (chain_size < 2 || chain_size > 20) throw std::invalid_argument("oracle_check: chain size must lie in [2, 20]");
  if (!(gamma_q > 0.0 && gamma_q < 1.0)) throw std::invalid_argument("oracle_check: gamma_q outside (0, 1)");
  torch::manual_seed(seed);
  envs::ChainMdp env(chain_size);
  const auto mdp = env.as_tabular();
  const PolicyTable uniform(chain_size, std::vector<double>(mdp.n_actions, 1.0 / mdp.n_actions));

  OracleCheckReport report;
  report.oracle = tabular_occupancy_oracle(mdp, uniform, gamma_q, 0);

  OccupancyConfig cfg;
  cfg.gamma_q = gamma_q;
  cfg.horizon = 4;
  cfg.components = std::max(8, chain_size);
  cfg.hidden = 64;
  cfg.lr = 2e-3;
  MdnPair nets(chain_size, cfg);
  nets.online->to(torch::kFloat64);
  nets.target->to(torch::kFloat64);
  torch::optim::Adam opt(nets.online->parameters(), torch::optim::AdamOptions(cfg.lr));

  ChainExactModel model(chain_size, /*absorbing=*/true);
  NoiseSource noise(seed + 1);
  ImaginationPolicy fixed = [](const torch::Tensor& s, NoiseSource&) {
    return torch::zeros({s.size(0), 1}, s.options());
  };
  std::vector<int64_t> starts(chain_size * 4);
  for (size_t i = 0; i < starts.size(); ++i) starts[i] = static_cast<int64_t>(i) % chain_size;
  const auto start = model.one_hot(starts);
  for (int it = 0; it < iterations; ++it) {
    auto traj = imagine_rollout(model, fixed, start, cfg.horizon, noise);
    auto loss = occupancy_loss(nets, traj, cfg, noise);
    opt.zero_grad();
    loss.backward();
    opt.step();
    soft_update(nets.target, nets.online, cfg.soft_tau);
  }

  torch::NoGradGuard no_grad;
  auto mass = mixture_unit_cell_mass(nets.online->forward(model.one_hot({0}))).squeeze(0).contiguous();
  report.estimate.assign(mass.data_ptr<double>(), mass.data_ptr<double>() + chain_size);
  double diff = 0.0, inside = 0.0;
  for (int s = 0; s < chain_size; ++s) {
    diff += std::abs(report.estimate[s] - report.oracle[s]);
    inside += report.estimate[s];
  }
  report.tv = 0.5 * (diff + std::max(0.0, 1.0 - inside));
  return report;
}

}  // namespace maxent
