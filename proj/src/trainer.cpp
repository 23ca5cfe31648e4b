#include "maxent/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "maxent/errors.hpp"

namespace maxent {

using nlohmann::json;

EvalReport summarize_returns(std::vector<double> returns, int64_t distinct_state_bins) {
  if (returns.empty()) throw std::invalid_argument("summarize_returns: no returns");
  EvalReport r;
  const double n = static_cast<double>(returns.size());
  r.mean = std::accumulate(returns.begin(), returns.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : returns) ss += (x - r.mean) * (x - r.mean);
  const double sd = returns.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const double half = 1.96 * sd / std::sqrt(n);
  r.ci95_low = r.mean - half;
  r.ci95_high = r.mean + half;
  r.returns = std::move(returns);
  r.distinct_state_bins = distinct_state_bins;
  return r;
}

std::vector<int> state_bin(const std::vector<double>& obs, const envs::EnvSpec& spec, int bins) {
  std::vector<int> key(obs.size());
  for (size_t i = 0; i < obs.size(); ++i) {
    const double span = spec.obs_high[i] - spec.obs_low[i];
    const double u = span > 0.0 ? (obs[i] - spec.obs_low[i]) / span : 0.0;
    key[i] = std::clamp(static_cast<int>(std::floor(u * bins)), 0, bins - 1);
  }
  return key;
}

namespace {

std::vector<torch::Tensor> params_of(torch::nn::Module& m) { return m.parameters(); }

std::unique_ptr<torch::optim::Adam> adam(torch::nn::Module& m, double lr) {
  return std::make_unique<torch::optim::Adam>(m.parameters(), torch::optim::AdamOptions(lr));
}

void add_prefixed(std::vector<std::pair<std::string, torch::Tensor>>& out, const std::string& prefix,
                  const torch::nn::Module& m) {
  for (const auto& item : m.named_parameters()) out.emplace_back(prefix + item.key(), item.value());
}

}  // namespace

Learner::Learner(const TrainConfig& cfg, const envs::EnvSpec& spec) : cfg_(cfg), spec_(spec) {
  cfg_.validate();
  spec_.validate();
  torch::manual_seed(cfg_.seed);
  auto wm_cfg = cfg_.world_model(spec.obs_dim, spec.act_dim);
  wm_cfg.obs_low = spec.obs_low;
  wm_cfg.obs_high = spec.obs_high;
  wm_cfg.act_low = spec.act_low;
  wm_cfg.act_high = spec.act_high;
  world_model = WorldModel(wm_cfg);
  const int d = static_cast<int>(world_model->state_dim());
  ActorConfig ac{d, ActionBounds{spec.act_low, spec.act_high}, cfg_.actor_hidden, 2, 0.05};
  actor = StochasticActor(ac);
  // The baseline keeps the original state-value critic.
  critic = Critic(d, cfg_.modifications ? spec.act_dim : 0, cfg_.actor_hidden, 2);
  wm_opt_ = adam(*world_model, cfg_.wm_lr);
  actor_opt_ = adam(*actor, cfg_.actor_lr);
  critic_opt_ = adam(*critic, cfg_.critic_lr);
  if (cfg_.exploration) {
    mdn.emplace(d, cfg_.occupancy());
    mdn_opt_ = adam(*mdn->online, cfg_.mdn_lr);
    det_actor = DeterministicActor(ac);
    det_critic = Critic(d, spec.act_dim, cfg_.actor_hidden, 2);
    det_actor_opt_ = adam(*det_actor, cfg_.actor_lr);
    det_critic_opt_ = adam(*det_critic, cfg_.critic_lr);
  }
}

std::map<std::string, double> Learner::update(const SequenceBatch& batch, double beta, NoiseSource& noise) {
  std::map<std::string, double> out;
  const bool mods = cfg_.modifications;
  const auto lc = cfg_.lambda_config();

  // World model.
  auto wl = world_model->loss(batch, noise);
  require_finite(wl.total, "world model loss");
  assign_grads(wl.total, params_of(*world_model), cfg_.grad_clip);
  wm_opt_->step();
  out["wm_total"] = wl.total.item<double>();
  for (const auto& [k, v] : wl.components) out["wm_" + k] = v.item<double>();

  const auto start = wl.start.features().detach();
  set_requires_grad(*world_model, false);
  struct Restore {
    WorldModel& wm;
    ~Restore() { set_requires_grad(*wm, true); }
  } restore{world_model};

  // Stochastic agent: imagination, occupancy estimate, entropy-regularized actor.
  ImaginationPolicy stoch = [this](const torch::Tensor& s, NoiseSource& n) { return actor->sample(s, n); };
  auto traj = imagine_rollout(*world_model, stoch, start, cfg_.horizon, noise);

  torch::Tensor entropy;
  if (mdn) {
    const auto oc = cfg_.occupancy();
    auto occ = occupancy_loss(*mdn, traj, oc, noise);
    require_finite(occ, "occupancy loss");
    assign_grads(occ, params_of(*mdn->online), cfg_.grad_clip);
    mdn_opt_->step();
    soft_update(mdn->target, mdn->online, oc.soft_tau);
    out["mdn_nll"] = occ.item<double>();
    entropy = entropy_bonus(mdn->target, traj, oc, noise);
    require_finite(entropy, "entropy bonus");
    out["entropy"] = entropy.mean().item<double>();
  }

  torch::Tensor last = critic->is_q() ? actor->sample(traj.states[cfg_.horizon], noise) : torch::Tensor();
  auto values = critic_values(critic, traj, last);
  auto returns = lambda_returns(traj.rewards, values, traj.continues, lc.gamma, lc.lambda);
  auto a_loss = actor_loss_stochastic(returns, entropy, beta, mods);
  require_finite(a_loss, "actor loss");
  assign_grads(a_loss, params_of(*actor), cfg_.grad_clip);
  actor_opt_->step();
  out["actor"] = a_loss.item<double>();

  auto c_loss = critic_loss(critic, traj.detach(), returns.detach(), mods, mods);
  require_finite(c_loss, "critic loss");
  assign_grads(c_loss, params_of(*critic), cfg_.grad_clip);
  critic_opt_->step();
  out["critic"] = c_loss.item<double>();

  // Deterministic agent on its own rollouts.
  if (det_actor) {
    ImaginationPolicy det = [this](const torch::Tensor& s, NoiseSource&) { return det_actor->forward(s); };
    const auto det_start =
        cfg_.det_imagined_starts ? traj.states.detach().reshape({-1, traj.states.size(-1)}) : start;
    auto dtraj = imagine_rollout(*world_model, det, det_start, cfg_.horizon, noise);
    auto dvalues = critic_values(det_critic, dtraj, det_actor->forward(dtraj.states[cfg_.horizon]));
    auto dreturns = lambda_returns(dtraj.rewards, dvalues, dtraj.continues, lc.gamma, lc.lambda);
    auto da_loss = actor_loss_deterministic(dreturns, mods);
    require_finite(da_loss, "deterministic actor loss");
    assign_grads(da_loss, params_of(*det_actor), cfg_.grad_clip);
    det_actor_opt_->step();
    out["det_actor"] = da_loss.item<double>();

    auto dc_loss = critic_loss(det_critic, dtraj.detach(), dreturns.detach(), mods, mods);
    require_finite(dc_loss, "deterministic critic loss");
    assign_grads(dc_loss, params_of(*det_critic), cfg_.grad_clip);
    det_critic_opt_->step();
    out["det_critic"] = dc_loss.item<double>();
  }
  return out;
}

torch::Tensor Learner::eval_action(const torch::Tensor& state) {
  torch::NoGradGuard no_grad;
  return det_actor ? act_deterministic(det_actor, state) : actor->mode(state);
}

std::vector<std::pair<std::string, torch::Tensor>> Learner::named_tensors() const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  add_prefixed(out, "world_model.", *world_model);
  add_prefixed(out, "actor.", *actor);
  add_prefixed(out, "critic.", *critic);
  if (mdn) {
    add_prefixed(out, "mdn.online.", *mdn->online);
    add_prefixed(out, "mdn.target.", *mdn->target);
  }
  if (det_actor) {
    add_prefixed(out, "det_actor.", *det_actor);
    add_prefixed(out, "det_critic.", *det_critic);
  }
  return out;
}

Checkpoint Learner::to_checkpoint(int64_t step) const {
  Checkpoint ck;
  ck.metadata = cfg_.to_map();
  ck.metadata["step"] = std::to_string(step);
  ck.metadata["obs_dim"] = std::to_string(spec_.obs_dim);
  ck.metadata["act_dim"] = std::to_string(spec_.act_dim);
  for (auto& [name, t] : named_tensors()) ck.tensors.emplace_back(name, t.detach().clone());
  return ck;
}

void Learner::load_tensors(const Checkpoint& ckpt) {
  auto mine = named_tensors();
  if (mine.size() != ckpt.tensors.size())
    throw std::runtime_error("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, learner expects " +
                             std::to_string(mine.size()));
  torch::NoGradGuard no_grad;
  for (auto& [name, t] : mine) {
    const auto* src = ckpt.find(name);
    if (!src) throw std::runtime_error("checkpoint is missing tensor " + name);
    if (src->sizes() != t.sizes()) throw std::runtime_error("shape mismatch for tensor " + name);
    t.copy_(*src);
  }
}

EvalReport evaluate(Learner& learner, envs::Environment& env, int64_t episodes, uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluate: need at least one episode");
  const auto spec = env.spec();
  const auto& lspec = learner.env_spec();
  if (spec.obs_dim != lspec.obs_dim || spec.act_dim != lspec.act_dim)
    throw ConfigError("environment dimensions do not match the agent");
  torch::NoGradGuard no_grad;
  auto noise = NoiseSource::zero();
  auto& wm = learner.world_model;
  const auto opts = wm->parameters().front().options();
  auto row = [&](const std::vector<double>& v) {
    return torch::tensor(v, torch::TensorOptions().dtype(torch::kFloat64)).to(opts.dtype()).unsqueeze(0);
  };
  std::set<std::vector<int>> visited;
  std::vector<double> returns;
  for (int64_t i = 0; i < episodes; ++i) {
    auto obs = env.reset(seed + static_cast<uint64_t>(i));
    visited.insert(state_bin(obs, spec));
    auto state = wm->start_episode(row(obs), noise);
    double total = 0.0;
    while (true) {
      auto a = learner.eval_action(state.features()).squeeze(0).to(torch::kFloat64).contiguous();
      std::vector<double> action(a.data_ptr<double>(), a.data_ptr<double>() + spec.act_dim);
      auto result = env.step(action);
      total += result.reward;
      visited.insert(state_bin(result.obs, spec));
      if (result.done) break;
      for (int k = 0; k < spec.act_dim; ++k) action[k] = std::clamp(action[k], spec.act_low[k], spec.act_high[k]);
      state = wm->observe_step(state, row(action), row(result.obs), noise).state;
    }
    returns.push_back(total);
  }
  return summarize_returns(std::move(returns), static_cast<int64_t>(visited.size()));
}

std::unique_ptr<Learner> learner_from_checkpoint(const Checkpoint& ckpt) {
  TrainConfig cfg;
  auto meta = ckpt.metadata;
  for (const char* extra : {"step", "obs_dim", "act_dim"}) meta.erase(extra);
  cfg.apply(meta);
  auto env = envs::make_env(cfg.env);
  auto learner = std::make_unique<Learner>(cfg, env->spec());
  learner->load_tensors(ckpt);
  return learner;
}

EvalReport evaluate_checkpoint(const std::filesystem::path& ckpt, const std::string& env_name, int64_t episodes,
                               uint64_t seed) {
  auto learner = learner_from_checkpoint(load_checkpoint(ckpt));
  auto env = envs::make_env(env_name);
  return evaluate(*learner, *env, episodes, seed);
}

std::string MetricsRecord::to_line() const {
  json j;
  j["step"] = report.step;
  j["scheduled_step"] = report.scheduled_step;
  j["mean_return"] = report.mean;
  j["ci95_low"] = report.ci95_low;
  j["ci95_high"] = report.ci95_high;
  j["distinct_state_bins"] = report.distinct_state_bins;
  j["returns"] = report.returns;
  j["beta"] = beta;
  j["losses"] = losses;
  j["collect_mean_return"] = collect_mean_return;
  j["collect_bins"] = collect_bins;
  return j.dump();
}

MetricsRecord MetricsRecord::from_line(const std::string& line) {
  auto j = json::parse(line);
  MetricsRecord r;
  r.report.step = j.at("step").get<int64_t>();
  r.report.scheduled_step = j.at("scheduled_step").get<int64_t>();
  r.report.mean = j.at("mean_return").get<double>();
  r.report.ci95_low = j.at("ci95_low").get<double>();
  r.report.ci95_high = j.at("ci95_high").get<double>();
  r.report.distinct_state_bins = j.at("distinct_state_bins").get<int64_t>();
  r.report.returns = j.at("returns").get<std::vector<double>>();
  r.beta = j.at("beta").get<double>();
  r.losses = j.at("losses").get<std::map<std::string, double>>();
  r.collect_mean_return = j.value("collect_mean_return", 0.0);
  r.collect_bins = j.value("collect_bins", int64_t{0});
  return r;
}

namespace {

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read metrics file " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(MetricsRecord::from_line(line));
  return out;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

}  // namespace

void export_metrics_csv(const std::filesystem::path& metrics, const std::filesystem::path& csv) {
  auto records = read_metrics(metrics);
  std::set<std::string> loss_keys;
  for (const auto& r : records)
    for (const auto& [k, v] : r.losses) loss_keys.insert(k);
  std::ofstream out(csv);
  if (!out) throw std::runtime_error("cannot write " + csv.string());
  out << "step,scheduled_step,mean_return,ci95_low,ci95_high,distinct_state_bins,beta,collect_mean_return,collect_bins";
  for (const auto& k : loss_keys) out << ',' << k;
  out << '\n';
  for (const auto& r : records) {
    out << r.report.step << ',' << r.report.scheduled_step << ',' << fmt(r.report.mean) << ','
        << fmt(r.report.ci95_low) << ',' << fmt(r.report.ci95_high) << ',' << r.report.distinct_state_bins << ','
        << fmt(r.beta) << ',' << fmt(r.collect_mean_return) << ',' << r.collect_bins;
    for (const auto& k : loss_keys) {
      auto it = r.losses.find(k);
      out << ',' << (it == r.losses.end() ? std::string("nan") : fmt(it->second));
    }
    out << '\n';
  }
}

namespace {

void dump_batch(const std::filesystem::path& path, const SequenceBatch& batch, const std::string& reason) {
  std::ofstream out(path);
  out << "# " << reason << "\n";
  out << "observations\n" << batch.observations << "\nactions\n" << batch.actions << "\nrewards\n"
      << batch.rewards << "\ndones\n" << batch.dones << "\n";
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  torch::set_num_threads(1);
  auto env = envs::make_env(cfg.env);
  auto eval_env = env->clone();
  const auto spec = env->spec();
  Learner learner(cfg, spec);
  NoiseSource noise(cfg.seed * 1000003ULL + 17);
  std::mt19937_64 rng(cfg.seed);
  ReplayBuffer buffer(cfg.buffer_capacity);
  const auto lc = cfg.lambda_config();
  const auto exploration = cfg.collection_noise();

  TrainResult result;
  std::ofstream metrics;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    metrics.open(*out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write metrics in " + out_dir->string());
    result.checkpoint = *out_dir / "checkpoint.mxdw";
  }

  int64_t env_steps = 0;
  int64_t eval_index = 0;
  std::map<std::string, double> last_losses;
  std::set<std::vector<int>> collect_bins;
  std::vector<double> recent_returns;
  auto store = [&](Episode ep) {
    std::vector<double> obs(spec.obs_dim);
    for (int64_t t = 0; t <= ep.length(); ++t) {
      std::copy_n(ep.observations.begin() + t * spec.obs_dim, spec.obs_dim, obs.begin());
      collect_bins.insert(state_bin(obs, spec));
    }
    recent_returns.push_back(ep.total_reward());
    env_steps += ep.length();
    const int64_t n = ep.length();
    buffer.push(std::move(ep));
    return n;
  };
  auto run_eval = [&](int64_t scheduled) {
    MetricsRecord rec;
    rec.report = evaluate(learner, *eval_env, cfg.eval_episodes, cfg.seed * 7919ULL + 1000ULL * eval_index++);
    rec.report.step = env_steps;
    rec.report.scheduled_step = scheduled;
    rec.beta = beta_schedule(env_steps, cfg.total_env_steps, lc);
    rec.losses = last_losses;
    if (!recent_returns.empty())
      rec.collect_mean_return =
          std::accumulate(recent_returns.begin(), recent_returns.end(), 0.0) / static_cast<double>(recent_returns.size());
    rec.collect_bins = static_cast<int64_t>(collect_bins.size());
    recent_returns.clear();
    if (out_dir) {
      metrics << rec.to_line() << '\n';
      metrics.flush();
      if (!metrics) throw std::runtime_error("metrics write failed");
      save_checkpoint(*result.checkpoint, learner.to_checkpoint(env_steps));
    }
    result.records.push_back(std::move(rec));
  };

  run_eval(0);
  int64_t next_eval = cfg.eval_every;

  for (int64_t i = 0; i < cfg.prefill_episodes && env_steps < cfg.total_env_steps; ++i) {
    store(collect_random_episode(*env, rng(), noise));
  }

  while (env_steps < cfg.total_env_steps) {
    int64_t gathered = 0;
    while (gathered < cfg.train_every && env_steps < cfg.total_env_steps) {
      gathered += store(collect_episode(*env, learner.world_model, learner.actor, exploration, rng(), noise));
    }
    bool can_sample = std::any_of(buffer.episodes().begin(), buffer.episodes().end(),
                                  [&](const Episode& e) { return e.length() >= cfg.seq_len - 1; });
    for (int64_t u = 0; can_sample && u < cfg.updates_per_round; ++u) {
      auto batch = buffer.sample_sequences(cfg.batch, cfg.seq_len, rng);
      const double beta = beta_schedule(env_steps, cfg.total_env_steps, lc);
      try {
        last_losses = learner.update(batch, beta, noise);
      } catch (const NumericError& e) {
        if (out_dir) dump_batch(*out_dir / "diagnostic_batch.txt", batch, e.what());
        throw;
      }
    }
    const bool finished = env_steps >= cfg.total_env_steps;
    if (env_steps >= next_eval || finished) {
      while (next_eval <= env_steps) next_eval += cfg.eval_every;
      run_eval(finished ? cfg.total_env_steps : next_eval - cfg.eval_every);
    }
  }
  // Prefill alone can exhaust the budget; the final state is still evaluated.
  if (result.records.back().report.step != env_steps) run_eval(cfg.total_env_steps);
  result.env_steps = env_steps;
  return result;
}

std::vector<AblationRun> run_ablation(const TrainConfig& base, const std::vector<std::string>& variants,
                                      const std::vector<uint64_t>& seeds,
                                      const std::optional<std::filesystem::path>& out_dir) {
  std::vector<AblationRun> runs;
  for (const auto& v : variants) {
    for (auto seed : seeds) {
      auto cfg = with_variant(base, v);
      cfg.seed = seed;
      std::optional<std::filesystem::path> dir;
      if (out_dir) dir = *out_dir / (v + "_seed" + std::to_string(seed));
      runs.push_back({v, seed, train(cfg, dir).records});
    }
  }
  return runs;
}

void write_ablation_csv(const std::vector<AblationRun>& runs, const std::filesystem::path& csv) {
  std::vector<std::string> variants;
  std::set<int64_t> steps;
  for (const auto& r : runs) {
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);
    for (const auto& rec : r.records) steps.insert(rec.report.scheduled_step);
  }
  std::ofstream out(csv);
  if (!out) throw std::runtime_error("cannot write " + csv.string());
  out << "step";
  for (const auto& v : variants) out << ',' << v << "_mean," << v << "_ci95_low," << v << "_ci95_high," << v << "_bins";
  out << '\n';
  for (int64_t step : steps) {
    out << step;
    for (const auto& v : variants) {
      std::vector<double> means;
      double bins = 0.0;
      for (const auto& r : runs) {
        if (r.variant != v) continue;
        for (const auto& rec : r.records) {
          if (rec.report.scheduled_step != step) continue;
          means.push_back(rec.report.mean);
          bins += static_cast<double>(rec.report.distinct_state_bins);
        }
      }
      if (means.empty()) {
        out << ",nan,nan,nan,nan";
        continue;
      }
      auto s = summarize_returns(means, 0);
      out << ',' << fmt(s.mean) << ',' << fmt(s.ci95_low) << ',' << fmt(s.ci95_high) << ','
          << fmt(bins / static_cast<double>(means.size()));
    }
    out << '\n';
  }
}

std::optional<int64_t> first_nonzero_step(const std::vector<MetricsRecord>& records) {
  for (const auto& r : records)
    if (r.report.mean != 0.0) return r.report.step;
  return std::nullopt;
}

}  // namespace maxent
