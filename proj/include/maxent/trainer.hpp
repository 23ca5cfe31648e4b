#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "maxent/agent.hpp"
#include "maxent/checkpoint.hpp"
#include "maxent/config.hpp"
#include "maxent/envs.hpp"
#include "maxent/occupancy.hpp"
#include "maxent/rollout.hpp"
#include "maxent/world_model.hpp"

namespace maxent {

struct EvalReport {
  int64_t step = 0;            // env steps consumed when the evaluation ran
  int64_t scheduled_step = 0;  // evaluation point on the eval_every grid (aligns runs)
  std::vector<double> returns;
  double mean = 0.0;
  double ci95_low = 0.0;
  double ci95_high = 0.0;
  int64_t distinct_state_bins = 0;
};

/// mean +- 1.96 * sample std / sqrt(n).
EvalReport summarize_returns(std::vector<double> returns, int64_t distinct_state_bins);

/// Bin index tuple of an observation under a uniform grid with `bins` cells per dimension.
std::vector<int> state_bin(const std::vector<double>& obs, const envs::EnvSpec& spec, int bins = 16);

/// All networks of one agent plus their optimizers. Networks that the variant switches off
/// are never constructed, so they are absent from checkpoints as well.
class Learner {
 public:
  Learner(const TrainConfig& cfg, const envs::EnvSpec& spec);

  /// One round of the update scheme: world model, MDN + soft update, stochastic actor and
  /// critic, deterministic actor and critic. Returns scalar diagnostics.
  std::map<std::string, double> update(const SequenceBatch& batch, double beta, NoiseSource& noise);

  /// Evaluation policy: the deterministic actor when present, else the stochastic mode.
  torch::Tensor eval_action(const torch::Tensor& state);

  std::vector<std::pair<std::string, torch::Tensor>> named_tensors() const;
  Checkpoint to_checkpoint(int64_t step) const;
  /// Copies tensors by name; throws when names or shapes differ from this learner.
  void load_tensors(const Checkpoint& ckpt);

  const TrainConfig& config() const { return cfg_; }
  const envs::EnvSpec& env_spec() const { return spec_; }

  WorldModel world_model{nullptr};
  StochasticActor actor{nullptr};
  Critic critic{nullptr};
  std::optional<MdnPair> mdn;
  DeterministicActor det_actor{nullptr};
  Critic det_critic{nullptr};

 private:
  TrainConfig cfg_;
  envs::EnvSpec spec_;
  std::unique_ptr<torch::optim::Adam> wm_opt_, actor_opt_, critic_opt_, mdn_opt_, det_actor_opt_, det_critic_opt_;
};

/// Runs `episodes` noiseless episodes with the evaluation policy. Episode i resets the
/// environment with seed + i.
EvalReport evaluate(Learner& learner, envs::Environment& env, int64_t episodes, uint64_t seed);

/// Rebuilds the learner stored in a checkpoint.
std::unique_ptr<Learner> learner_from_checkpoint(const Checkpoint& ckpt);
EvalReport evaluate_checkpoint(const std::filesystem::path& ckpt, const std::string& env_name, int64_t episodes,
                               uint64_t seed);

/// One line of the metrics stream (JSON object per line).
struct MetricsRecord {
  EvalReport report;
  double beta = 0.0;
  std::map<std::string, double> losses;
  // Real-experience diagnostics: mean return of the episodes collected since the previous
  // evaluation (0 when none) and distinct bins visited by all collected experience so far.
  double collect_mean_return = 0.0;
  int64_t collect_bins = 0;

  std::string to_line() const;
  static MetricsRecord from_line(const std::string& line);
};

/// Converts a metrics stream into a CSV with a header row.
void export_metrics_csv(const std::filesystem::path& metrics, const std::filesystem::path& csv);

struct TrainResult {
  std::vector<MetricsRecord> records;
  int64_t env_steps = 0;
  std::optional<std::filesystem::path> checkpoint;
};

/// Full training loop. With an output directory it appends metrics.jsonl and writes
/// checkpoint.mxdw at every evaluation. Throws NumericError on a non-finite loss after
/// dumping the offending batch to diagnostic_batch.txt.
TrainResult train(const TrainConfig& cfg, const std::optional<std::filesystem::path>& out_dir = std::nullopt);

struct AblationRun {
  std::string variant;
  uint64_t seed = 0;
  std::vector<MetricsRecord> records;
};

/// Trains every (variant, seed) pair from the same base configuration.
std::vector<AblationRun> run_ablation(const TrainConfig& base, const std::vector<std::string>& variants,
                                      const std::vector<uint64_t>& seeds,
                                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Aligned table: one row per scheduled eval step, mean/ci over seeds for each variant.
void write_ablation_csv(const std::vector<AblationRun>& runs, const std::filesystem::path& csv);

/// Env step of the first evaluation with a nonzero mean return.
std::optional<int64_t> first_nonzero_step(const std::vector<MetricsRecord>& records);

}  // namespace maxent
