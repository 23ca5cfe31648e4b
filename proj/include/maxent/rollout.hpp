#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "maxent/agent.hpp"
#include "maxent/envs.hpp"
#include "maxent/trajectory.hpp"
#include "maxent/world_model.hpp"

namespace maxent {

/// One whole real episode, row-major float storage.
///   observations (T+1) x obs_dim, actions T x act_dim, rewards T, dones T.
/// dones marks true termination only; an episode cut by the step limit has no done flag.
struct Episode {
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<float> observations;
  std::vector<float> actions;
  std::vector<float> rewards;
  std::vector<uint8_t> dones;

  int64_t length() const { return static_cast<int64_t>(rewards.size()); }
  double total_reward() const;
  void validate() const;
};

/// Writes the episode dump: obs_dim, act_dim, T as little-endian u32, then f32 payloads in
/// field order (observations, actions, rewards, dones as 0/1).
void write_episode(const Episode& ep, const std::filesystem::path& path);
Episode read_episode(const std::filesystem::path& path);

/// Oldest-first evicting store of whole episodes, bounded in total steps.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int64_t capacity_steps);

  void push(Episode ep);
  int64_t total_steps() const { return total_steps_; }
  int64_t capacity() const { return capacity_; }
  size_t num_episodes() const { return episodes_.size(); }
  const std::deque<Episode>& episodes() const { return episodes_; }

  /// B subsequences of L observations (L-1 transitions), each inside one episode with a
  /// uniformly drawn start. Episodes with fewer than L-1 transitions are never sampled.
  SequenceBatch sample_sequences(int64_t batch, int64_t length, std::mt19937_64& rng,
                                 torch::Dtype dtype = torch::kFloat32) const;

 private:
  int64_t capacity_;
  int64_t total_steps_ = 0;
  std::deque<Episode> episodes_;
};

/// Policy used inside imagination: latent features [B, d] -> action [B, A].
using ImaginationPolicy = std::function<torch::Tensor(const torch::Tensor&, NoiseSource&)>;

/// H imagined transitions from `start` ([B, d] latent features). Fully reparametrized: the
/// caller controls which parameters receive gradients.
ImaginedTrajectory imagine_rollout(LatentDynamics& dynamics, const ImaginationPolicy& policy,
                                   const torch::Tensor& start, int64_t horizon, NoiseSource& noise);

/// Runs one episode with the stochastic actor acting on posterior latents.
Episode collect_episode(envs::Environment& env, WorldModel& world_model, StochasticActor& actor,
                        const std::optional<ExplorationNoise>& exploration, uint64_t env_seed, NoiseSource& noise);

/// Runs one episode with uniformly random actions (buffer prefill).
Episode collect_random_episode(envs::Environment& env, uint64_t env_seed, NoiseSource& noise);

}  // namespace maxent
