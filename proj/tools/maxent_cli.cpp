#include <torch/torch.h>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "maxent/config.hpp"
#include "maxent/errors.hpp"
#include "maxent/trainer.hpp"
#include "maxent/verify.hpp"

namespace fs = std::filesystem;
using namespace maxent;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericError = 3;

std::string join(const std::vector<double>& v) {
  std::ostringstream s;
  s.precision(6);
  for (size_t i = 0; i < v.size(); ++i) s << (i ? " " : "") << v[i];
  return s.str();
}

void print_report(const EvalReport& r) {
  std::cout << "step " << r.step << "  mean " << r.mean << "  ci95 [" << r.ci95_low << ", " << r.ci95_high
            << "]  bins " << r.distinct_state_bins << "\n  returns " << join(r.returns) << "\n";
}

TrainConfig base_config(const std::string& config_file) {
  TrainConfig cfg;
  if (!config_file.empty()) cfg = load_config(config_file);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"Maximum-entropy model-based RL toolkit"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train an agent and write metrics + checkpoint");
  std::string env_name = "corridor1d", out_dir, config_file;
  uint64_t seed = 0;
  int64_t steps = -1;
  bool no_exploration = false, no_modifications = false;
  train_cmd->add_option("--env", env_name, "Environment name");
  train_cmd->add_option("--seed", seed, "Random seed");
  train_cmd->add_option("--steps", steps, "Total environment steps");
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  train_cmd->add_flag("--no-exploration", no_exploration, "Disable the occupancy-entropy exploration");
  train_cmd->add_flag("--no-modifications", no_modifications, "Use the original world-model/agent recipe");
  train_cmd->add_option("--config", config_file, "Flat key = value config file");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ckpt;
  int64_t episodes = 10;
  eval_cmd->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--env", env_name, "Environment name")->required();
  eval_cmd->add_option("--episodes", episodes, "Evaluation episodes");
  eval_cmd->add_option("--seed", seed, "Base reset seed");

  // grad-check
  auto* grad_cmd = app.add_subcommand("grad-check", "Finite-difference gradient check");
  std::string component = "all";
  grad_cmd->add_option("--component", component, "world_model|mdn|critic|actor_stoch|actor_det|imagination|all");
  grad_cmd->add_option("--seed", seed, "Random seed");

  // oracle-check
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Compare the MDN occupancy with the tabular oracle");
  double gamma_q = 0.9;
  int chain = 3, iterations = 1500;
  oracle_cmd->add_option("--gamma", gamma_q, "Occupancy discount");
  oracle_cmd->add_option("--chain", chain, "Chain length (<= 20)");
  oracle_cmd->add_option("--iterations", iterations, "MDN training iterations");
  oracle_cmd->add_option("--seed", seed, "Random seed");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Run the four ablation variants over several seeds");
  int64_t n_seeds = 3;
  std::vector<std::string> variants = {"baseline", "exploration", "modifications", "full"};
  ablate_cmd->add_option("--env", env_name, "Environment name");
  ablate_cmd->add_option("--seeds", n_seeds, "Number of seeds (0..n-1)");
  ablate_cmd->add_option("--steps", steps, "Total environment steps per run");
  ablate_cmd->add_option("--out", out_dir, "Output directory")->required();
  ablate_cmd->add_option("--config", config_file, "Flat key = value config file");
  ablate_cmd->add_option("--variants", variants, "Subset of baseline, exploration, modifications, full");

  // export-csv
  auto* csv_cmd = app.add_subcommand("export-csv", "Convert a metrics stream into CSV");
  std::string metrics_path, csv_path;
  csv_cmd->add_option("--metrics", metrics_path, "metrics.jsonl")->required();
  csv_cmd->add_option("--out", csv_path, "CSV output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train_cmd) {
      auto cfg = base_config(config_file);
      cfg.env = env_name;
      cfg.seed = seed;
      if (steps > 0) cfg.total_env_steps = steps;
      if (no_exploration) cfg.exploration = false;
      if (no_modifications) cfg.modifications = false;
      envs::make_env(cfg.env);  // unknown names are config errors
      auto result = train(cfg, fs::path(out_dir));
      for (const auto& rec : result.records) print_report(rec.report);
      std::cout << "variant " << cfg.variant() << "  env steps " << result.env_steps << "  checkpoint "
                << result.checkpoint->string() << "\n";
    } else if (*eval_cmd) {
      if (episodes < 2) throw ConfigError("--episodes must be at least 2");
      auto report = evaluate_checkpoint(ckpt, env_name, episodes, seed);
      std::cout << "episodes " << report.returns.size() << "\n";
      print_report(report);
    } else if (*grad_cmd) {
      std::vector<std::string> names = component == "all" ? grad_check_components() : std::vector{component};
      bool ok = true;
      for (const auto& name : names) {
        const auto& known = grad_check_components();
        if (std::find(known.begin(), known.end(), name) == known.end())
          throw ConfigError("unknown component '" + name + "'");
        auto r = grad_check(name, seed);
        std::cout << r.component << "  max_rel_error " << r.max_rel_error << "  tolerance " << r.tolerance
                  << "  coordinates " << r.coordinates << "  " << (r.passed() ? "PASS" : "FAIL") << "\n";
        ok = ok && r.passed();
      }
      return ok ? kOk : kNumericError;
    } else if (*oracle_cmd) {
      if (chain < 2 || chain > 20) throw ConfigError("--chain must lie in [2, 20]");
      if (!(gamma_q > 0.0 && gamma_q < 1.0)) throw ConfigError("--gamma must lie in (0, 1)");
      auto r = oracle_check(gamma_q, chain, seed, iterations);
      std::cout << "oracle    " << join(r.oracle) << "\nestimate  " << join(r.estimate) << "\ntv        " << r.tv
                << "\n";
    } else if (*ablate_cmd) {
      auto cfg = base_config(config_file);
      cfg.env = env_name;
      if (steps > 0) cfg.total_env_steps = steps;
      envs::make_env(cfg.env);
      if (n_seeds < 1) throw ConfigError("--seeds must be positive");
      for (const auto& v : variants) with_variant(cfg, v);
      std::vector<uint64_t> seeds;
      for (int64_t s = 0; s < n_seeds; ++s) seeds.push_back(static_cast<uint64_t>(s));
      auto runs = run_ablation(cfg, variants, seeds, fs::path(out_dir));
      write_ablation_csv(runs, fs::path(out_dir) / "ablation.csv");
      for (const auto& r : runs) {
        auto first = first_nonzero_step(r.records);
        std::cout << r.variant << " seed " << r.seed << "  first_nonzero_step "
                  << (first ? std::to_string(*first) : std::string("none")) << "  final_mean "
                  << r.records.back().report.mean << "  final_bins " << r.records.back().report.distinct_state_bins
                  << "\n";
      }
      std::cout << "table " << (fs::path(out_dir) / "ablation.csv").string() << "\n";
    } else if (*csv_cmd) {
      export_metrics_csv(metrics_path, csv_path);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}
