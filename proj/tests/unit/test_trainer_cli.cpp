#include <gtest/gtest.h>

#include <torch/torch.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "maxent/config.hpp"
#include "maxent/errors.hpp"
#include "maxent/trainer.hpp"
#include "maxent/verify.hpp"

using namespace maxent;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config(const std::string& env = "corridor1d", bool exploration = true, bool modifications = true) {
  TrainConfig cfg;
  cfg.env = env;
  cfg.seed = 3;
  cfg.total_env_steps = 600;
  cfg.train_every = 200;
  cfg.updates_per_round = 4;
  cfg.eval_every = 200;
  cfg.eval_episodes = 2;
  cfg.prefill_episodes = 2;
  cfg.batch = 4;
  cfg.seq_len = 8;
  cfg.horizon = 5;
  cfg.deter_dim = 12;
  cfg.stoch_dim = 6;
  cfg.hidden = 24;
  cfg.actor_hidden = 24;
  cfg.mdn_hidden = 24;
  cfg.exploration = exploration;
  cfg.modifications = modifications;
  return cfg;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("maxent_trainer_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool has_prefix(const Learner& l, const std::string& prefix) {
  for (const auto& [name, t] : l.named_tensors())
    if (name.rfind(prefix, 0) == 0) return true;
  return false;
}

bool has_substring(const Learner& l, const std::string& part) {
  for (const auto& [name, t] : l.named_tensors())
    if (name.find(part) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(Config, ParsesFlatKeyValueText) {
  auto kv = parse_key_values("# comment\nbatch = 8\n  seq_len=12  # trailing\n\n");
  EXPECT_EQ(kv.at("batch"), "8");
  EXPECT_EQ(kv.at("seq_len"), "12");
  TrainConfig cfg;
  cfg.apply(kv);
  EXPECT_EQ(cfg.batch, 8);
  EXPECT_EQ(cfg.seq_len, 12);
  EXPECT_THROW(parse_key_values("batch 8"), ConfigError);
  EXPECT_THROW(parse_key_values("batch = 1\nbatch = 2"), ConfigError);
  EXPECT_THROW(cfg.apply({{"no_such_key", "1"}}), ConfigError);
  EXPECT_THROW(cfg.apply({{"batch", "eight"}}), ConfigError);
}

TEST(Config, ValidatesRangesAndRoundTripsThroughMap) {
  TrainConfig cfg;
  cfg.eval_episodes = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.gamma_q = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny_config("locksequence", false, true);
  TrainConfig back;
  back.apply(cfg.to_map());
  EXPECT_EQ(back.to_map(), cfg.to_map());
  EXPECT_EQ(back.env, "locksequence");
  EXPECT_FALSE(back.exploration);
}

TEST(Config, PublishedDefaults) {
  TrainConfig cfg;
  EXPECT_EQ(cfg.eval_episodes, 10);
  EXPECT_EQ(cfg.stoch_dim, 128);
  EXPECT_EQ(cfg.mdn_hidden, 256);
  EXPECT_EQ(cfg.mdn_components, 8);
  EXPECT_EQ(cfg.gamma_q, 0.9);
  EXPECT_EQ(cfg.soft_tau, 0.1);
  EXPECT_EQ(cfg.mdn_lr, 0.0002);
  EXPECT_EQ(cfg.kl_coef, 0.1);
  EXPECT_EQ(cfg.jeffreys_coef, 0.1);
  EXPECT_EQ(cfg.beta_start, 0.2);
  EXPECT_EQ(cfg.beta_end, 0.0001);
  EXPECT_EQ(cfg.horizon, 15);
}

TEST(Variants, FlagAlgebra) {
  TrainConfig cfg;
  EXPECT_EQ(with_variant(cfg, "full").variant(), "full");
  auto full = with_variant(cfg, "full");
  EXPECT_TRUE(full.exploration && full.modifications);
  auto base = with_variant(cfg, "baseline");
  EXPECT_FALSE(base.exploration || base.modifications);
  EXPECT_EQ(with_variant(cfg, "exploration").variant(), "exploration");
  EXPECT_EQ(with_variant(cfg, "modifications").variant(), "modifications");
  EXPECT_THROW(with_variant(cfg, "dreamer"), ConfigError);
}

TEST(Variants, SwitchedOffMachineryIsAbsent) {
  auto spec = envs::PointMass2D().spec();
  Learner full(tiny_config("pointmass2d", true, true), spec);
  EXPECT_TRUE(has_prefix(full, "mdn.online."));
  EXPECT_TRUE(has_prefix(full, "mdn.target."));
  EXPECT_TRUE(has_prefix(full, "det_actor."));
  EXPECT_TRUE(has_substring(full, "termination"));

  Learner no_explore(tiny_config("pointmass2d", false, true), spec);
  EXPECT_FALSE(has_prefix(no_explore, "mdn."));
  EXPECT_FALSE(has_prefix(no_explore, "det_"));
  EXPECT_TRUE(no_explore.critic->is_q());

  Learner baseline(tiny_config("pointmass2d", false, false), spec);
  EXPECT_FALSE(has_substring(baseline, "termination"));
  EXPECT_FALSE(baseline.world_model->has_termination_head());
  EXPECT_FALSE(baseline.critic->is_q());
}

TEST(Evaluate, SummaryStatistics) {
  auto same = summarize_returns({2.0, 2.0, 2.0}, 1);
  EXPECT_EQ(same.mean, 2.0);
  EXPECT_EQ(same.ci95_low, 2.0);
  EXPECT_EQ(same.ci95_high, 2.0);
  auto r = summarize_returns({1.0, 2.0, 3.0, 4.0}, 5);
  const double sd = std::sqrt(5.0 / 3.0);
  EXPECT_NEAR(r.mean, 2.5, 1e-15);
  EXPECT_NEAR(r.ci95_low, 2.5 - 1.96 * sd / 2.0, 1e-12);
  EXPECT_NEAR(r.ci95_high, 2.5 + 1.96 * sd / 2.0, 1e-12);
  EXPECT_LE(r.ci95_low, r.mean);
  EXPECT_GE(r.ci95_high, r.mean);
  EXPECT_EQ(r.distinct_state_bins, 5);
}

TEST(Evaluate, StateBinsUseSixteenCellsPerDimension) {
  auto spec = envs::LockSequence().spec();
  EXPECT_EQ(state_bin({0.0, 0.0, 0.0}, spec), (std::vector<int>{0, 0, 0}));
  EXPECT_EQ(state_bin({1.0, 1.0, 1.0}, spec), (std::vector<int>{15, 15, 15}));
  EXPECT_EQ(state_bin({0.5, 0.3, 0.99}, spec), (std::vector<int>{8, 4, 15}));
  EXPECT_EQ(state_bin({-5.0, 0.0, 7.0}, spec), (std::vector<int>{0, 0, 15}));
}

TEST(Evaluate, ZeroRewardGivesZeroInterval) {
  // The untrained deterministic actor outputs the action-box centre: the corridor agent stays at x = 0.
  auto cfg = tiny_config();
  envs::Corridor1D env;
  Learner learner(cfg, env.spec());
  auto r = evaluate(learner, env, 10, 0);
  EXPECT_EQ(r.returns.size(), 10u);
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_EQ(r.ci95_low, 0.0);
  EXPECT_EQ(r.ci95_high, 0.0);
  EXPECT_EQ(r.distinct_state_bins, 1);
  envs::PointMass2D other;
  EXPECT_THROW(evaluate(learner, other, 2, 0), ConfigError);
}

TEST(Train, SmokeRunIsFiniteAndLogsBetaSchedule) {
  auto cfg = tiny_config();
  cfg.total_env_steps = 2000;
  cfg.eval_every = 500;
  auto result = train(cfg);
  EXPECT_GE(result.env_steps, 2000);
  ASSERT_GE(result.records.size(), 3u);
  EXPECT_EQ(result.records.front().beta, 0.2);
  EXPECT_EQ(result.records.back().beta, 0.0001);
  EXPECT_EQ(result.records.back().report.scheduled_step, 2000);
  LambdaConfig lc = cfg.lambda_config();
  for (const auto& rec : result.records) {
    EXPECT_EQ(rec.beta, beta_schedule(rec.report.step, cfg.total_env_steps, lc));
    for (const auto& [k, v] : rec.losses) EXPECT_TRUE(std::isfinite(v)) << k;
  }
  EXPECT_TRUE(result.records.back().losses.contains("mdn_nll"));
  EXPECT_TRUE(result.records.back().losses.contains("det_actor"));
}

TEST(Train, DeterministicGivenConfigAndSeed) {
  for (bool explore : {true, false}) {
    auto cfg = tiny_config("pointmass2d", explore, !explore);
    auto a = train(cfg);
    auto b = train(cfg);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].to_line(), b.records[i].to_line());
  }
}

TEST(Train, WritesMetricsAndCheckpointThatRoundTrips) {
  auto dir = scratch("roundtrip");
  auto cfg = tiny_config("locksequence");
  auto result = train(cfg, dir);
  ASSERT_TRUE(result.checkpoint);
  ASSERT_TRUE(fs::exists(*result.checkpoint));

  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  size_t lines = 0;
  while (std::getline(in, line)) {
    auto rec = MetricsRecord::from_line(line);
    EXPECT_EQ(rec.to_line(), result.records[lines].to_line());
    ++lines;
  }
  EXPECT_EQ(lines, result.records.size());

  auto ckpt = load_checkpoint(*result.checkpoint);
  EXPECT_EQ(ckpt.metadata.at("env"), "locksequence");
  auto restored = learner_from_checkpoint(ckpt);
  auto again = learner_from_checkpoint(load_checkpoint(*result.checkpoint));
  envs::LockSequence env;
  auto r1 = evaluate(*restored, env, 3, 42);
  auto r2 = evaluate(*again, env, 3, 42);
  EXPECT_EQ(r1.returns, r2.returns);
  EXPECT_EQ(r1.distinct_state_bins, r2.distinct_state_bins);
  auto r3 = evaluate_checkpoint(*result.checkpoint, "locksequence", 3, 42);
  EXPECT_EQ(r1.returns, r3.returns);

  // Bit-identical tensors after the round trip.
  for (const auto& [name, t] : restored->named_tensors()) {
    const auto* stored = ckpt.find(name);
    ASSERT_NE(stored, nullptr) << name;
    EXPECT_TRUE(torch::equal(t.to(torch::kFloat32), *stored)) << name;
  }

  export_metrics_csv(dir / "metrics.jsonl", dir / "metrics.csv");
  std::ifstream csv(dir / "metrics.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header.rfind("step,scheduled_step,mean_return,ci95_low,ci95_high,distinct_state_bins,beta", 0), 0u);
  size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, result.records.size());
  fs::remove_all(dir);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  auto dir = scratch("corrupt");
  {
    std::ofstream out(dir / "bad.mxdw", std::ios::binary);
    out << "NOPE0000";
  }
  EXPECT_THROW(load_checkpoint(dir / "bad.mxdw"), std::runtime_error);
  Checkpoint ck;
  ck.metadata["k"] = "v";
  ck.tensors.emplace_back("w", torch::arange(6, torch::kFloat32).reshape({2, 3}));
  save_checkpoint(dir / "ok.mxdw", ck);
  std::ifstream in(dir / "ok.mxdw", std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "MXDW");
  auto back = load_checkpoint(dir / "ok.mxdw");
  EXPECT_TRUE(torch::equal(back.tensors.at(0).second, ck.tensors.at(0).second));
  fs::resize_file(dir / "ok.mxdw", fs::file_size(dir / "ok.mxdw") - 3);
  EXPECT_THROW(load_checkpoint(dir / "ok.mxdw"), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Ablation, AlignedTableWithOneColumnGroupPerVariant) {
  auto dir = scratch("ablation");
  auto cfg = tiny_config();
  cfg.total_env_steps = 400;
  const std::vector<std::string> variants = {"baseline", "exploration", "modifications", "full"};
  auto runs = run_ablation(cfg, variants, {0, 1}, dir);
  ASSERT_EQ(runs.size(), 8u);
  for (const auto& v : variants) EXPECT_TRUE(fs::exists(dir / (v + "_seed0") / "metrics.jsonl"));
  write_ablation_csv(runs, dir / "ablation.csv");
  std::ifstream in(dir / "ablation.csv");
  std::string header, line;
  std::getline(in, header);
  for (const auto& v : variants) EXPECT_NE(header.find(v + "_mean"), std::string::npos) << v;
  size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 16);
  }
  // Corridor episodes are 100 steps and every run consumes the same schedule.
  EXPECT_EQ(rows, runs.front().records.size());
  EXPECT_EQ(runs.front().records.back().report.scheduled_step, 400);
  fs::remove_all(dir);
}

TEST(Ablation, FirstNonzeroStep) {
  std::vector<MetricsRecord> recs(3);
  recs[0].report.step = 0;
  recs[1].report.step = 150;
  recs[2].report.step = 300;
  EXPECT_FALSE(first_nonzero_step(recs).has_value());
  recs[1].report.mean = 0.5;
  recs[2].report.mean = 1.0;
  EXPECT_EQ(first_nonzero_step(recs).value(), 150);
}

TEST(Verification, GradCheckSuite) {
  for (const auto& name : grad_check_components()) {
    auto r = grad_check(name, 1);
    EXPECT_TRUE(r.passed()) << name << " " << r.max_rel_error;
    EXPECT_LE(r.tolerance, name == "mdn" ? 1e-4 : 1e-3) << name;
  }
  EXPECT_THROW(grad_check("nothing"), std::invalid_argument);
}

TEST(Verification, OracleCheck) {
  auto r = oracle_check(0.5, 3, 0, 600);
  EXPECT_NEAR(r.oracle[0], 0.0, 1e-9);
  EXPECT_NEAR(r.oracle[1], 0.5, 1e-9);
  EXPECT_NEAR(r.oracle[2], 0.5, 1e-9);
  EXPECT_GE(r.tv, 0.0);
  EXPECT_LE(r.tv, 1.0);
}
