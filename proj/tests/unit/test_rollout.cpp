#include <gtest/gtest.h>

#include <torch/torch.h>

#include <filesystem>
#include <random>
#include <set>
#include <tuple>

#include "maxent/envs.hpp"
#include "maxent/rollout.hpp"
#include "maxent/verify.hpp"

using namespace maxent;
namespace fs = std::filesystem;

namespace {

/// Episode whose observation at step t is (id, t) and whose reward at step t is id * 1000 + t,
/// so every sampled element names its origin.
Episode tagged_episode(int id, int length, bool terminal = false) {
  Episode ep;
  ep.obs_dim = 2;
  ep.act_dim = 1;
  for (int t = 0; t <= length; ++t) {
    ep.observations.push_back(static_cast<float>(id));
    ep.observations.push_back(static_cast<float>(t));
  }
  for (int t = 0; t < length; ++t) {
    ep.actions.push_back(static_cast<float>(t) * 0.5f);
    ep.rewards.push_back(static_cast<float>(id * 1000 + t));
    ep.dones.push_back(terminal && t == length - 1 ? 1 : 0);
  }
  return ep;
}

struct Parts {
  WorldModel wm{nullptr};
  StochasticActor actor{nullptr};
};

Parts small_agent(const envs::EnvSpec& spec, uint64_t seed) {
  torch::manual_seed(seed);
  WorldModelConfig cfg;
  cfg.obs_dim = spec.obs_dim;
  cfg.act_dim = spec.act_dim;
  cfg.deter_dim = 8;
  cfg.stoch_dim = 4;
  cfg.hidden = 16;
  Parts p;
  p.wm = WorldModel(cfg);
  ActorConfig ac;
  ac.state_dim = 12;
  ac.bounds = ActionBounds{spec.act_low, spec.act_high};
  ac.hidden = 16;
  p.actor = StochasticActor(ac);
  return p;
}

}  // namespace

TEST(CollectEpisode, FullRandomNoiseRecordsUniformActions) {
  envs::Corridor1D env;
  auto parts = small_agent(env.spec(), 0);
  NoiseSource noise(1);
  std::vector<float> actions;
  for (uint64_t e = 0; e < 100; ++e) {
    auto ep = collect_episode(env, parts.wm, parts.actor, ExplorationNoise{1.0, 0.3}, e, noise);
    actions.insert(actions.end(), ep.actions.begin(), ep.actions.end());
  }
  auto a = torch::tensor(actions, torch::kFloat64);
  EXPECT_GE(a.min().item<double>(), -0.05);
  EXPECT_LE(a.max().item<double>(), 0.05);
  const double n = static_cast<double>(a.numel());
  EXPECT_NEAR(a.mean().item<double>(), 0.0, 4 * 0.05 / std::sqrt(3.0 * n));
  EXPECT_NEAR(a.var().item<double>(), 0.05 * 0.05 / 3.0, 0.05 * 0.05 * 0.03);
}

TEST(CollectEpisode, SeededRunsAreIdenticalAndBounded) {
  for (const char* name : {"corridor1d", "pointmass2d", "locksequence"}) {
    auto env = envs::make_env(name);
    auto a = small_agent(env->spec(), 2);
    auto b = small_agent(env->spec(), 2);
    NoiseSource na(3), nb(3);
    auto ea = collect_episode(*env, a.wm, a.actor, ExplorationNoise{}, 7, na);
    auto eb = collect_episode(*env, b.wm, b.actor, ExplorationNoise{}, 7, nb);
    EXPECT_EQ(ea.observations, eb.observations) << name;
    EXPECT_EQ(ea.actions, eb.actions) << name;
    EXPECT_EQ(ea.rewards, eb.rewards) << name;
    EXPECT_LE(ea.length(), env->spec().max_steps);
    EXPECT_NO_THROW(ea.validate());
  }
}

TEST(CollectEpisode, TerminalFlagOnlyOnRealTermination) {
  envs::ChainMdp chain(4);
  NoiseSource noise(4);
  auto ep = collect_random_episode(chain, 0, noise);
  ASSERT_EQ(ep.length(), 3);
  EXPECT_EQ(ep.dones.back(), 1);
  envs::Corridor1D corridor;
  auto timeout = collect_random_episode(corridor, 0, noise);
  EXPECT_EQ(timeout.length(), 100);
  for (auto d : timeout.dones) EXPECT_EQ(d, 0);
}

TEST(ReplayBuffer, EvictsOldestAndRespectsCapacity) {
  ReplayBuffer buffer(100);
  buffer.push(tagged_episode(0, 50));
  buffer.push(tagged_episode(1, 50));
  EXPECT_EQ(buffer.total_steps(), 100);
  buffer.push(tagged_episode(2, 50));
  EXPECT_EQ(buffer.num_episodes(), 2u);
  EXPECT_EQ(buffer.episodes().front().observations[0], 1.0f);
  std::mt19937_64 rng(0);
  std::uniform_int_distribution<int> len(1, 60);
  for (int i = 0; i < 200; ++i) {
    buffer.push(tagged_episode(3 + i, len(rng)));
    ASSERT_LE(buffer.total_steps(), buffer.capacity());
  }
  EXPECT_THROW(buffer.push(tagged_episode(9, 101)), std::invalid_argument);
}

TEST(ReplayBuffer, SingleEpisodeOfExactLength) {
  ReplayBuffer buffer(1000);
  buffer.push(tagged_episode(4, 9));  // 10 observations
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    auto b = buffer.sample_sequences(3, 10, rng);
    EXPECT_TRUE(torch::equal(b.observations.select(2, 1), torch::arange(10, torch::kFloat32).expand({3, 10})));
    EXPECT_TRUE((b.observations.select(2, 0) == 4.0f).all().item<bool>());
  }
}

TEST(ReplayBuffer, ShortEpisodesNeverSampledAndErrorsWhenNothingFits) {
  ReplayBuffer buffer(1000);
  buffer.push(tagged_episode(1, 3));
  std::mt19937_64 rng(2);
  EXPECT_THROW(buffer.sample_sequences(2, 10, rng), std::runtime_error);
  buffer.push(tagged_episode(2, 20));
  auto b = buffer.sample_sequences(500, 10, rng);
  EXPECT_TRUE((b.observations.select(2, 0) == 2.0f).all().item<bool>());
}

TEST(ReplayBuffer, SequencesStayInsideEpisodesAndAreVerbatim) {
  ReplayBuffer buffer(5000);
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<int> len(5, 40);
  std::map<int, int> lengths;
  for (int id = 0; id < 30; ++id) {
    lengths[id] = len(gen);
    buffer.push(tagged_episode(id, lengths[id], id % 3 == 0));
  }
  std::mt19937_64 rng(4);
  auto b = buffer.sample_sequences(10000, 6, rng);
  auto obs = b.observations;
  for (int64_t i = 0; i < b.batch(); ++i) {
    const int id = static_cast<int>(obs[i][0][0].item<float>());
    const int start = static_cast<int>(obs[i][0][1].item<float>());
    ASSERT_TRUE((obs[i].select(1, 0) == static_cast<float>(id)).all().item<bool>());  // one episode only
    ASSERT_LE(start + 5, lengths[id]);
    for (int t = 0; t < 5; ++t) {
      ASSERT_EQ(obs[i][t][1].item<float>(), static_cast<float>(start + t));
      ASSERT_EQ(b.rewards[i][t].item<float>(), static_cast<float>(id * 1000 + start + t));
      ASSERT_EQ(b.actions[i][t][0].item<float>(), static_cast<float>(start + t) * 0.5f);
      const bool last = id % 3 == 0 && start + t == lengths[id] - 1;
      ASSERT_EQ(b.dones[i][t].item<float>(), last ? 1.0f : 0.0f);
    }
  }
}

TEST(ReplayBuffer, SeededSamplingReproducibleAndStartsUniform) {
  ReplayBuffer buffer(1000);
  buffer.push(tagged_episode(0, 12));  // 12 - 4 + 1 = 9 starts for L = 5
  std::mt19937_64 a(5), b(5);
  EXPECT_TRUE(torch::equal(buffer.sample_sequences(8, 5, a).observations, buffer.sample_sequences(8, 5, b).observations));
  std::mt19937_64 rng(6);
  auto starts = buffer.sample_sequences(9000, 5, rng).observations.select(1, 0).select(1, 1);
  for (int s = 0; s < 9; ++s) EXPECT_NEAR((starts == s).sum().item<double>() / 9000.0, 1.0 / 9.0, 0.02) << s;
}

TEST(EpisodeDump, RoundTrip) {
  auto dir = fs::temp_directory_path() / "maxent_rollout_test";
  fs::create_directories(dir);
  auto ep = tagged_episode(7, 13, true);
  write_episode(ep, dir / "ep.bin");
  EXPECT_EQ(fs::file_size(dir / "ep.bin"), 12u + 4u * (14 * 2 + 13 + 13 + 13));
  auto back = read_episode(dir / "ep.bin");
  EXPECT_EQ(back.observations, ep.observations);
  EXPECT_EQ(back.actions, ep.actions);
  EXPECT_EQ(back.rewards, ep.rewards);
  EXPECT_EQ(back.dones, ep.dones);
  fs::resize_file(dir / "ep.bin", 20);
  EXPECT_THROW(read_episode(dir / "ep.bin"), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Imagination, HorizonOneAndShapes) {
  envs::PointMass2D env;
  auto parts = small_agent(env.spec(), 7);
  NoiseSource noise(8);
  ImaginationPolicy pi = [&](const torch::Tensor& s, NoiseSource& n) { return parts.actor->sample(s, n); };
  auto one = imagine_rollout(*parts.wm, pi, torch::randn({5, 12}), 1, noise);
  EXPECT_EQ(one.horizon(), 1);
  EXPECT_EQ(one.states.sizes(), torch::IntArrayRef({2, 5, 12}));
  EXPECT_EQ(one.actions.sizes(), torch::IntArrayRef({1, 5, 2}));
  auto many = imagine_rollout(*parts.wm, pi, torch::randn({5, 12}), 15, noise);
  EXPECT_GE(many.continues.min().item<double>(), 0.0);
  EXPECT_LE(many.continues.max().item<double>(), 1.0);
  EXPECT_THROW(imagine_rollout(*parts.wm, pi, torch::randn({5, 12}), 0, noise), std::invalid_argument);
}

TEST(Imagination, FixedNoiseIsDeterministic) {
  envs::Corridor1D env;
  auto parts = small_agent(env.spec(), 9);
  ImaginationPolicy pi = [&](const torch::Tensor& s, NoiseSource& n) { return parts.actor->sample(s, n); };
  auto start = torch::randn({4, 12});
  NoiseSource a(10), b(10);
  auto ta = imagine_rollout(*parts.wm, pi, start, 6, a);
  auto tb = imagine_rollout(*parts.wm, pi, start, 6, b);
  EXPECT_TRUE(torch::equal(ta.states, tb.states));
  EXPECT_TRUE(torch::equal(ta.rewards, tb.rewards));
}

TEST(Imagination, RewardGradientMatchesFiniteDifferences) {
  auto r = grad_check("imagination");
  EXPECT_LT(r.max_rel_error, 1e-3);
  EXPECT_GT(r.coordinates, 10);
}

TEST(Imagination, ActorGradientFlowsButWorldModelFrozen) {
  envs::Corridor1D env;
  auto parts = small_agent(env.spec(), 11);
  {
    torch::NoGradGuard guard;
    for (auto& p : parts.actor->parameters()) p.normal_(0.0, 0.3);
  }
  set_requires_grad(*parts.wm, false);
  ImaginationPolicy pi = [&](const torch::Tensor& s, NoiseSource& n) { return parts.actor->sample(s, n); };
  NoiseSource noise(12);
  auto traj = imagine_rollout(*parts.wm, pi, torch::randn({4, 12}), 5, noise);
  traj.rewards.sum().backward();
  double total = 0.0;
  for (const auto& p : parts.actor->parameters()) total += p.grad().abs().sum().item<double>();
  EXPECT_GT(total, 0.0);
  for (const auto& p : parts.wm->parameters()) EXPECT_FALSE(p.grad().defined());
}
