#include <gtest/gtest.h>

#include <torch/torch.h>

#include <cmath>
#include <random>

#include "maxent/agent.hpp"
#include "maxent/rollout.hpp"
#include "maxent/verify.hpp"

using namespace maxent;

namespace {

ActorConfig tiny_actor(int state_dim = 3, std::vector<double> low = {-1.0, 0.0}, std::vector<double> high = {1.0, 2.0}) {
  ActorConfig cfg;
  cfg.state_dim = state_dim;
  cfg.bounds = ActionBounds{std::move(low), std::move(high)};
  cfg.hidden = 8;
  return cfg;
}

void randomize_head(torch::nn::Module& m, double std = 0.5) {
  torch::NoGradGuard guard;
  for (auto& item : m.named_parameters())
    if (item.key().find("out.") != std::string::npos) item.value().normal_(0.0, std);
}

/// Exact differentiable corridor: x' = clamp(x + a), smooth goal reward, no termination.
class CorridorExact : public LatentDynamics {
 public:
  ImaginedStep imagine_features(const torch::Tensor& state, const torch::Tensor& action, NoiseSource&) override {
    auto next = (state + action).clamp(0.0, 1.0);
    auto reward = torch::sigmoid((next.squeeze(-1) - 0.9) / 0.05);
    return {next, reward, torch::ones_like(reward)};
  }
};

}  // namespace

TEST(ActStochastic, FullRandomReplacementIsUniform) {
  torch::manual_seed(0);
  StochasticActor actor(tiny_actor());
  NoiseSource noise(1);
  const int64_t n = 10000;
  auto a = act_stochastic(actor, torch::randn({n, 3}), noise, ExplorationNoise{1.0, 0.3});
  auto lo = std::get<0>(a.min(0));
  auto hi = std::get<0>(a.max(0));
  EXPECT_GE(lo[0].item<double>(), -1.0);
  EXPECT_LE(hi[0].item<double>(), 1.0);
  EXPECT_GE(lo[1].item<double>(), 0.0);
  EXPECT_LE(hi[1].item<double>(), 2.0);
  // Uniform on an interval of width 2: mean at the centre, variance 1/3.
  auto mean = a.mean(0);
  auto var = a.var(0);
  const double se_mean = std::sqrt(1.0 / 3.0 / n);
  EXPECT_NEAR(mean[0].item<double>(), 0.0, 4 * se_mean);
  EXPECT_NEAR(mean[1].item<double>(), 1.0, 4 * se_mean);
  EXPECT_NEAR(var[0].item<double>(), 1.0 / 3.0, 0.02);
  EXPECT_NEAR(var[1].item<double>(), 1.0 / 3.0, 0.02);
  // Ten equal-width bins each hold about a tenth of the draws.
  auto bins = ((a.select(1, 0) + 1.0) * 5.0).floor().clamp(0, 9);
  for (int b = 0; b < 10; ++b) EXPECT_NEAR((bins == b).sum().item<double>() / n, 0.1, 0.015) << b;
}

TEST(ActStochastic, VanishingStdGivesSquashedMean) {
  auto cfg = tiny_actor();
  cfg.min_std = 1e-12;
  torch::manual_seed(2);
  StochasticActor actor(cfg);
  randomize_head(*actor);
  {
    torch::NoGradGuard guard;
    auto p = actor->named_parameters();
    p["net.out.weight"].narrow(0, 2, 2).zero_();
    p["net.out.bias"].narrow(0, 2, 2).fill_(-100.0);
  }
  auto s = torch::randn({5, 3});
  NoiseSource noise(3);
  EXPECT_TRUE(torch::allclose(act_stochastic(actor, s, noise), actor->mode(s), 0, 1e-6));
}

TEST(ActStochastic, ReparametrizedGradientMatchesFiniteDifferences) {
  torch::manual_seed(4);
  StochasticActor actor(tiny_actor());
  actor->to(torch::kFloat64);
  randomize_head(*actor);
  auto s = torch::randn({4, 3}, torch::kFloat64);
  auto fn = [&] {
    NoiseSource noise(5);
    return actor->sample(s, noise).pow(2).sum();
  };
  EXPECT_LT(finite_difference_check(fn, actor->parameters(), 20, 0), 1e-4);
}

TEST(ActStochastic, ActionsWithinBounds) {
  torch::manual_seed(6);
  StochasticActor actor(tiny_actor());
  randomize_head(*actor, 5.0);
  NoiseSource noise(7);
  auto s = torch::randn({100000, 3}) * 10;
  auto a = act_stochastic(actor, s, noise, ExplorationNoise{0.1, 0.3});
  EXPECT_GE(a.select(1, 0).min().item<double>(), -1.0);
  EXPECT_LE(a.select(1, 0).max().item<double>(), 1.0);
  EXPECT_GE(a.select(1, 1).min().item<double>(), 0.0);
  EXPECT_LE(a.select(1, 1).max().item<double>(), 2.0);
  EXPECT_GT(actor->distribution(s).std.min().item<double>(), 0.0);
}

TEST(ActDeterministic, CentredAtInitBoundedAndPure) {
  torch::manual_seed(8);
  DeterministicActor actor(tiny_actor());
  auto s = torch::randn({6, 3});
  auto centre = torch::tensor({0.0, 1.0}).expand({6, 2});
  EXPECT_TRUE(torch::allclose(act_deterministic(actor, s), centre));
  randomize_head(*actor, 5.0);
  EXPECT_TRUE(torch::equal(act_deterministic(actor, s), act_deterministic(actor, s)));
  auto a = act_deterministic(actor, torch::randn({100000, 3}) * 10);
  EXPECT_GE(a.select(1, 0).min().item<double>(), -1.0);
  EXPECT_LE(a.select(1, 0).max().item<double>(), 1.0);
  EXPECT_GE(a.select(1, 1).min().item<double>(), 0.0);
  EXPECT_LE(a.select(1, 1).max().item<double>(), 2.0);
}

TEST(LambdaReturns, Examples) {
  auto o = torch::TensorOptions().dtype(torch::kFloat64);
  auto zeros = lambda_returns(torch::zeros({4, 2}, o), torch::zeros({5, 2}, o), torch::ones({4, 2}, o), 0.99, 0.95);
  EXPECT_EQ(zeros.abs().sum().item<double>(), 0.0);

  auto r = torch::tensor({1.0, 2.0, 3.0}, o);
  auto v = torch::tensor({9.0, 4.0, 5.0, 6.0}, o);
  auto c = torch::tensor({1.0, 0.5, 0.0}, o);
  auto one_step = lambda_returns(r, v, c, 0.9, 0.0);
  EXPECT_TRUE(torch::allclose(one_step, r + 0.9 * c * v.narrow(0, 1, 3), 0, 1e-12));

  auto g = lambda_returns(torch::tensor({1.0, 1.0}, o), torch::tensor({0.0, 2.0, 2.0}, o), torch::ones({2}, o), 1.0,
                          0.5);
  EXPECT_NEAR(g[0].item<double>(), 3.5, 1e-12);
  EXPECT_NEAR(lambda_return_closed_form({1.0, 1.0}, {0.0, 2.0, 2.0}, 1.0, 0.5), 3.5, 1e-12);
  EXPECT_THROW(lambda_returns(r, r, c, 0.9, 0.5), std::invalid_argument);
}

TEST(LambdaReturns, RecursionEqualsClosedForm) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int H = 1 + trial % 20;
    const double gamma = 0.5 + 0.49 * u(rng);
    const double lambda = u(rng);
    std::vector<double> r(H), v(H + 1);
    for (auto& x : r) x = n(rng);
    for (auto& x : v) x = n(rng);
    auto o = torch::TensorOptions().dtype(torch::kFloat64);
    auto g = lambda_returns(torch::tensor(r, o), torch::tensor(v, o), torch::ones({H}, o), gamma, lambda);
    EXPECT_NEAR(g[0].item<double>(), lambda_return_closed_form(r, v, gamma, lambda), 1e-6);
  }
}

TEST(LambdaReturns, TerminationCutsTheFuture) {
  auto o = torch::TensorOptions().dtype(torch::kFloat64);
  torch::manual_seed(10);
  auto r = torch::randn({6}, o);
  auto v = torch::randn({7}, o);
  auto c = torch::ones({6}, o);
  c[2] = 0.0;
  auto g1 = lambda_returns(r, v, c, 0.99, 0.95);
  auto r2 = r.clone();
  auto v2 = v.clone();
  r2.narrow(0, 3, 3).normal_();
  v2.narrow(0, 3, 4).normal_();
  auto g2 = lambda_returns(r2, v2, c, 0.99, 0.95);
  EXPECT_TRUE(torch::allclose(g1.narrow(0, 0, 3), g2.narrow(0, 0, 3), 0, 0));
}

TEST(CriticLoss, ExamplesAndGradient) {
  torch::manual_seed(11);
  auto o = torch::TensorOptions().dtype(torch::kFloat64);
  Critic critic(3, 1, 8, 2);
  critic->to(torch::kFloat64);
  ImaginedTrajectory traj{torch::randn({3, 4, 3}, o), torch::randn({2, 4, 1}, o), torch::zeros({2, 4}, o),
                          torch::ones({2, 4}, o)};
  auto own = critic->forward(traj.states.narrow(0, 0, 2), traj.actions).detach();
  EXPECT_NEAR(critic_loss(critic, traj, own, false).item<double>(), 0.0, 1e-15);
  EXPECT_NEAR(critic_loss(critic, traj, own, true).item<double>(), 0.0, 1e-15);
  {
    torch::NoGradGuard guard;
    auto p = critic->named_parameters();
    p["net.out.weight"].zero_();
    p["net.out.bias"].zero_();
  }
  EXPECT_NEAR(critic_loss(critic, traj, torch::full({2, 4}, 0.5, o)).item<double>(), 0.125, 1e-15);
  EXPECT_NEAR(critic_loss(critic, traj, torch::full({2, 4}, 2.0, o)).item<double>(), 1.5, 1e-15);
  EXPECT_LT(grad_check("critic").max_rel_error, 1e-3);
}

TEST(CriticLoss, FirstStateRuleIgnoresLaterTargets) {
  torch::manual_seed(12);
  Critic critic(2, 1, 8, 2);
  ImaginedTrajectory traj{torch::randn({4, 3, 2}), torch::randn({3, 3, 1}), torch::zeros({3, 3}), torch::ones({3, 3})};
  auto t1 = torch::randn({3, 3});
  auto t2 = t1.clone();
  t2.narrow(0, 1, 2).normal_();
  EXPECT_EQ(critic_loss(critic, traj, t1).item<double>(), critic_loss(critic, traj, t2).item<double>());
  EXPECT_NE(critic_loss(critic, traj, t1, false).item<double>(), critic_loss(critic, traj, t2, false).item<double>());
}

TEST(ActorLoss, BetaZeroAndConstantEntropy) {
  torch::manual_seed(13);
  auto w = torch::randn({3}, torch::kFloat64).requires_grad_(true);
  auto returns = [&] { return torch::stack({w.sum() * torch::ones({4}, torch::kFloat64), w.pow(2).sum() * torch::ones({4}, torch::kFloat64)}); };
  auto entropy = torch::full({4}, 3.0, torch::kFloat64);
  EXPECT_EQ(actor_loss_stochastic(returns(), entropy, 0.0).item<double>(),
            actor_loss_deterministic(returns()).item<double>());
  auto g0 = torch::autograd::grad({actor_loss_stochastic(returns(), {}, 0.0)}, {w})[0];
  auto g1 = torch::autograd::grad({actor_loss_stochastic(returns(), entropy, 0.2)}, {w})[0];
  EXPECT_TRUE(torch::equal(g0, g1));
  EXPECT_NEAR(actor_loss_stochastic(returns(), entropy, 0.2).item<double>(),
              actor_loss_deterministic(returns()).item<double>() - 0.6, 1e-12);
}

TEST(ActorLoss, ZeroRewardsZeroValues) {
  torch::manual_seed(14);
  DeterministicActor actor(tiny_actor(1, {-0.05}, {0.05}));
  randomize_head(*actor);
  CorridorExact model;
  NoiseSource noise(0);
  ImaginationPolicy policy = [&](const torch::Tensor& s, NoiseSource&) { return actor->forward(s); };
  auto traj = imagine_rollout(model, policy, torch::rand({8, 1}) * 0.3, 5, noise);
  auto zero_r = torch::zeros_like(traj.rewards) * traj.rewards;  // keeps the graph
  auto g = lambda_returns(zero_r, torch::zeros({6, 8}), traj.continues, 0.99, 0.95);
  auto loss = actor_loss_deterministic(g);
  EXPECT_EQ(loss.item<double>(), 0.0);
  auto grads = torch::autograd::grad({loss}, actor->parameters(), {}, false, false, true);
  for (const auto& gr : grads)
    if (gr.defined()) EXPECT_EQ(gr.abs().sum().item<double>(), 0.0);
}

TEST(ActorLoss, GradientsThroughFrozenImagination) {
  EXPECT_LT(grad_check("actor_stoch").max_rel_error, 1e-3);
  EXPECT_LT(grad_check("actor_det").max_rel_error, 1e-3);
}

TEST(ActorLoss, DeterministicLossDecreasesOnCorridorModel) {
  torch::manual_seed(15);
  auto cfg = tiny_actor(1, {-0.05}, {0.05});
  cfg.hidden = 16;
  DeterministicActor actor(cfg);
  actor->to(torch::kFloat64);
  CorridorExact model;
  auto starts = torch::linspace(0.0, 0.95, 20, torch::kFloat64).unsqueeze(1);
  torch::optim::SGD opt(actor->parameters(), torch::optim::SGDOptions(0.05));
  ImaginationPolicy policy = [&](const torch::Tensor& s, NoiseSource&) { return actor->forward(s); };
  std::vector<double> losses;
  for (int i = 0; i < 200; ++i) {
    NoiseSource noise(0);
    auto traj = imagine_rollout(model, policy, starts, 15, noise);
    auto g = lambda_returns(traj.rewards, torch::zeros({16, 20}, torch::kFloat64), traj.continues, 0.99, 0.95);
    auto loss = actor_loss_deterministic(g);
    losses.push_back(loss.item<double>());
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  for (size_t i = 1; i < losses.size(); ++i) EXPECT_LE(losses[i], losses[i - 1] + 1e-12) << i;
  EXPECT_LT(losses.back(), losses.front() - 0.5);
}

TEST(ActorLoss, ChainPolicyAgreesWithValueIteration) {
  const int n = 12;
  envs::ChainMdp env(n);
  auto vi = value_iteration(env.as_tabular(), 0.99);
  ChainExactModel model(n, /*absorbing=*/false);
  torch::manual_seed(16);
  auto cfg = tiny_actor(n, {-1.0}, {1.0});
  cfg.hidden = 32;
  DeterministicActor actor(cfg);
  Critic critic(n, 1, 32, 2);
  actor->to(torch::kFloat64);
  critic->to(torch::kFloat64);
  torch::optim::Adam actor_opt(actor->parameters(), torch::optim::AdamOptions(3e-3));
  torch::optim::Adam critic_opt(critic->parameters(), torch::optim::AdamOptions(3e-3));
  std::vector<int64_t> live;
  for (int s = 0; s < n - 1; ++s) live.push_back(s);
  auto starts = model.one_hot(live);
  ImaginationPolicy policy = [&](const torch::Tensor& s, NoiseSource&) { return actor->forward(s); };
  for (int i = 0; i < 300; ++i) {
    NoiseSource noise(0);
    auto traj = imagine_rollout(model, policy, starts, 5, noise);
    auto values = critic_values(critic, traj, actor->forward(traj.states[5]));
    auto g = lambda_returns(traj.rewards, values, traj.continues, 0.99, 0.95);
    set_requires_grad(*critic, false);
    actor_opt.zero_grad();
    actor_loss_deterministic(g).backward();
    actor_opt.step();
    set_requires_grad(*critic, true);
    critic_opt.zero_grad();
    critic_loss(critic, traj.detach(), g.detach()).backward();
    critic_opt.step();
  }
  torch::NoGradGuard guard;
  auto a = actor->forward(starts);
  int agree = 0;
  for (int s = 0; s < n - 1; ++s) agree += envs::ChainMdp::lever(a[s][0].item<double>()) == vi.greedy_actions[s];
  EXPECT_GE(agree, static_cast<int>(std::ceil(0.9 * (n - 1))));
}

TEST(BetaSchedule, EndpointsMidpointAndClamp) {
  LambdaConfig cfg;
  EXPECT_EQ(beta_schedule(0, 1000, cfg), 0.2);
  EXPECT_EQ(beta_schedule(1000, 1000, cfg), 0.0001);
  EXPECT_NEAR(beta_schedule(500, 1000, cfg), 0.10005, 1e-15);
  EXPECT_EQ(beta_schedule(5000, 1000, cfg), 0.0001);
  double prev = 1.0;
  for (int64_t s = 0; s <= 1000; ++s) {
    const double b = beta_schedule(s, 1000, cfg);
    EXPECT_LE(b, prev);
    prev = b;
  }
  EXPECT_THROW(beta_schedule(-1, 10, cfg), std::invalid_argument);
}
