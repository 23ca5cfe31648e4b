#include "maxent/rollout.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace maxent {

double Episode::total_reward() const {
  double total = 0.0;
  for (float r : rewards) total += r;
  return total;
}

void Episode::validate() const {
  const auto T = static_cast<size_t>(length());
  if (obs_dim < 1 || act_dim < 1) throw std::invalid_argument("Episode: dimensions must be positive");
  if (observations.size() != (T + 1) * obs_dim || actions.size() != T * act_dim || dones.size() != T)
    throw std::invalid_argument("Episode: field sizes are inconsistent");
  for (size_t t = 0; t + 1 < T; ++t)
    if (dones[t]) throw std::invalid_argument("Episode: done flag before the final transition");
}

namespace {

static_assert(std::endian::native == std::endian::little, "episode dumps assume a little-endian host");

void put_u32(std::ofstream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

uint32_t get_u32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void put_floats(std::ofstream& out, const std::vector<float>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> get_floats(std::ifstream& in, size_t n) {
  std::vector<float> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)));
  return v;
}

}  // namespace

void write_episode(const Episode& ep, const std::filesystem::path& path) {
  ep.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  put_u32(out, static_cast<uint32_t>(ep.obs_dim));
  put_u32(out, static_cast<uint32_t>(ep.act_dim));
  put_u32(out, static_cast<uint32_t>(ep.length()));
  put_floats(out, ep.observations);
  put_floats(out, ep.actions);
  put_floats(out, ep.rewards);
  std::vector<float> dones(ep.dones.begin(), ep.dones.end());
  put_floats(out, dones);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Episode read_episode(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Episode ep;
  ep.obs_dim = static_cast<int>(get_u32(in));
  ep.act_dim = static_cast<int>(get_u32(in));
  const size_t T = get_u32(in);
  ep.observations = get_floats(in, (T + 1) * ep.obs_dim);
  ep.actions = get_floats(in, T * ep.act_dim);
  ep.rewards = get_floats(in, T);
  for (float d : get_floats(in, T)) ep.dones.push_back(d != 0.0f ? 1 : 0);
  if (!in) throw std::runtime_error("truncated episode file " + path.string());
  ep.validate();
  return ep;
}

ReplayBuffer::ReplayBuffer(int64_t capacity_steps) : capacity_(capacity_steps) {
  if (capacity_steps < 1) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Episode ep) {
  ep.validate();
  if (ep.length() > capacity_) throw std::invalid_argument("ReplayBuffer: episode longer than the capacity");
  total_steps_ += ep.length();
  episodes_.push_back(std::move(ep));
  while (total_steps_ > capacity_) {
    total_steps_ -= episodes_.front().length();
    episodes_.pop_front();
  }
}

SequenceBatch ReplayBuffer::sample_sequences(int64_t batch, int64_t length, std::mt19937_64& rng,
                                             torch::Dtype dtype) const {
  if (batch < 1 || length < 2) throw std::invalid_argument("sample_sequences: need batch >= 1 and length >= 2");
  // Cumulative count of valid start indices over episodes.
  std::vector<int64_t> cumulative;
  int64_t total = 0;
  for (const auto& ep : episodes_) {
    total += std::max<int64_t>(0, ep.length() - (length - 1) + 1);
    cumulative.push_back(total);
  }
  if (total == 0) throw std::runtime_error("sample_sequences: no stored episode is long enough");

  const int obs_dim = episodes_.front().obs_dim;
  const int act_dim = episodes_.front().act_dim;
  std::vector<float> obs(batch * length * obs_dim);
  std::vector<float> act(batch * (length - 1) * act_dim);
  std::vector<float> rew(batch * (length - 1));
  std::vector<float> done(batch * (length - 1));

  std::uniform_int_distribution<int64_t> pick(0, total - 1);
  for (int64_t b = 0; b < batch; ++b) {
    const int64_t k = pick(rng);
    const auto e = static_cast<size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), k) - cumulative.begin());
    const int64_t start = k - (e == 0 ? 0 : cumulative[e - 1]);
    const Episode& ep = episodes_[e];
    std::copy_n(ep.observations.begin() + start * obs_dim, length * obs_dim, obs.begin() + b * length * obs_dim);
    std::copy_n(ep.actions.begin() + start * act_dim, (length - 1) * act_dim,
                act.begin() + b * (length - 1) * act_dim);
    for (int64_t t = 0; t < length - 1; ++t) {
      rew[b * (length - 1) + t] = ep.rewards[start + t];
      done[b * (length - 1) + t] = ep.dones[start + t] ? 1.0f : 0.0f;
    }
  }
  auto f32 = torch::TensorOptions().dtype(torch::kFloat32);
  auto wrap = [&](std::vector<float>& v, std::vector<int64_t> shape) {
    return torch::from_blob(v.data(), shape, f32).to(dtype).clone();
  };
  return {wrap(obs, {batch, length, obs_dim}), wrap(act, {batch, length - 1, act_dim}),
          wrap(rew, {batch, length - 1}), wrap(done, {batch, length - 1})};
}

ImaginedTrajectory imagine_rollout(LatentDynamics& dynamics, const ImaginationPolicy& policy,
                                   const torch::Tensor& start, int64_t horizon, NoiseSource& noise) {
  if (horizon < 1) throw std::invalid_argument("imagine_rollout: horizon must be at least 1");
  std::vector<torch::Tensor> states{start}, actions, rewards, continues;
  auto state = start;
  for (int64_t t = 0; t < horizon; ++t) {
    auto action = policy(state, noise);
    auto step = dynamics.imagine_features(state, action, noise);
    actions.push_back(action);
    rewards.push_back(step.reward);
    continues.push_back(step.cont);
    states.push_back(step.next_state);
    state = step.next_state;
  }
  return {torch::stack(states), torch::stack(actions), torch::stack(rewards), torch::stack(continues)};
}

namespace {

torch::Tensor row(const std::vector<double>& v, const torch::TensorOptions& opts) {
  return torch::tensor(v, torch::TensorOptions().dtype(torch::kFloat64)).to(opts.dtype()).unsqueeze(0);
}

void append(std::vector<float>& dst, const std::vector<double>& src) { dst.insert(dst.end(), src.begin(), src.end()); }

}  // namespace

Episode collect_episode(envs::Environment& env, WorldModel& world_model, StochasticActor& actor,
                        const std::optional<ExplorationNoise>& exploration, uint64_t env_seed, NoiseSource& noise) {
  torch::NoGradGuard no_grad;
  const auto spec = env.spec();
  const auto opts = world_model->parameters().front().options();
  Episode ep;
  ep.obs_dim = spec.obs_dim;
  ep.act_dim = spec.act_dim;
  auto obs = env.reset(env_seed);
  append(ep.observations, obs);
  auto state = world_model->start_episode(row(obs, opts), noise);
  while (true) {
    auto action_t = act_stochastic(actor, state.features(), noise, exploration).squeeze(0).to(torch::kFloat64);
    std::vector<double> action(action_t.data_ptr<double>(), action_t.data_ptr<double>() + spec.act_dim);
    auto result = env.step(action);
    for (int i = 0; i < spec.act_dim; ++i) action[i] = std::clamp(action[i], spec.act_low[i], spec.act_high[i]);
    append(ep.actions, action);
    append(ep.observations, result.obs);
    ep.rewards.push_back(static_cast<float>(result.reward));
    ep.dones.push_back(result.terminal() ? 1 : 0);
    if (result.done) break;
    state = world_model->observe_step(state, row(action, opts), row(result.obs, opts), noise).state;
  }
  return ep;
}

Episode collect_random_episode(envs::Environment& env, uint64_t env_seed, NoiseSource& noise) {
  const auto spec = env.spec();
  ActionBounds bounds{spec.act_low, spec.act_high};
  Episode ep;
  ep.obs_dim = spec.obs_dim;
  ep.act_dim = spec.act_dim;
  append(ep.observations, env.reset(env_seed));
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  while (true) {
    auto a = bounds.uniform(1, noise, opts).squeeze(0);
    std::vector<double> action(a.data_ptr<double>(), a.data_ptr<double>() + spec.act_dim);
    auto result = env.step(action);
    append(ep.actions, action);
    append(ep.observations, result.obs);
    ep.rewards.push_back(static_cast<float>(result.reward));
    ep.dones.push_back(result.terminal() ? 1 : 0);
    if (result.done) break;
  }
  return ep;
}

}  // namespace maxent
