#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>
#include <torch/extension.h>

#include "maxent/config.hpp"
#include "maxent/envs.hpp"
#include "maxent/errors.hpp"
#include "maxent/nn.hpp"
#include "maxent/occupancy.hpp"
#include "maxent/trainer.hpp"
#include "maxent/verify.hpp"

namespace py = pybind11;
using namespace maxent;

namespace {

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["step"] = r.step;
  d["scheduled_step"] = r.scheduled_step;
  d["mean_return"] = r.mean;
  d["ci95_low"] = r.ci95_low;
  d["ci95_high"] = r.ci95_high;
  d["distinct_state_bins"] = r.distinct_state_bins;
  d["returns"] = r.returns;
  return d;
}

TrainConfig config_from(const std::map<std::string, std::string>& values) {
  TrainConfig cfg;
  cfg.apply(values);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Maximum-entropy model-based RL core (C++/libtorch)";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "occupancy_weights",
      [](int n, double gamma_q) {
        auto w = occupancy_weights(n, gamma_q);
        return py::make_tuple(w.w, w.w_boot);
      },
      py::arg("n"), py::arg("gamma_q"), "In-trajectory weights (1-g)g^i and bootstrap weight g^n.");
  m.def("occupancy_term_weights", &occupancy_term_weights, py::arg("continues"), py::arg("gamma_q"));
  m.def("lambda_returns", &lambda_returns, py::arg("rewards"), py::arg("values"), py::arg("continues"),
        py::arg("gamma"), py::arg("lam"));
  m.def("lambda_return_closed_form", &lambda_return_closed_form, py::arg("rewards"), py::arg("values"),
        py::arg("gamma"), py::arg("lam"));
  m.def(
      "beta_schedule",
      [](int64_t step, int64_t total, double beta_start, double beta_end) {
        LambdaConfig lc;
        lc.beta_start = beta_start;
        lc.beta_end = beta_end;
        return beta_schedule(step, total, lc);
      },
      py::arg("step"), py::arg("total_steps"), py::arg("beta_start") = 0.2, py::arg("beta_end") = 0.0001);
  m.def(
      "gaussian_kl",
      [](const torch::Tensor& mp, const torch::Tensor& sp, const torch::Tensor& mq, const torch::Tensor& sq) {
        return gaussian_kl({mp, sp}, {mq, sq});
      },
      py::arg("mean_p"), py::arg("std_p"), py::arg("mean_q"), py::arg("std_q"));
  m.def(
      "jeffreys",
      [](const torch::Tensor& mp, const torch::Tensor& sp, const torch::Tensor& mq, const torch::Tensor& sq) {
        return jeffreys({mp, sp}, {mq, sq});
      },
      py::arg("mean_p"), py::arg("std_p"), py::arg("mean_q"), py::arg("std_q"));
  m.def(
      "chain_occupancy_oracle",
      [](int n_states, const PolicyTable& policy, double gamma_q, int s0, double slip) {
        return tabular_occupancy_oracle(envs::ChainMdp(n_states, slip).as_tabular(), policy, gamma_q, s0);
      },
      py::arg("n_states"), py::arg("policy"), py::arg("gamma_q"), py::arg("s0") = 0, py::arg("slip") = 0.0,
      "Exact discounted occupancy of the chain MDP under a tabular policy.");

  m.def("grad_check_components", &grad_check_components);
  m.def(
      "grad_check",
      [](const std::string& component, uint64_t seed) {
        GradCheckReport r;
        {
          py::gil_scoped_release release;
          r = grad_check(component, seed);
        }
        py::dict d;
        d["component"] = r.component;
        d["max_rel_error"] = r.max_rel_error;
        d["tolerance"] = r.tolerance;
        d["coordinates"] = r.coordinates;
        d["passed"] = r.passed();
        return d;
      },
      py::arg("component"), py::arg("seed") = 0);
  m.def(
      "oracle_check",
      [](double gamma_q, int chain, uint64_t seed, int iterations) {
        OracleCheckReport r;
        {
          py::gil_scoped_release release;
          r = oracle_check(gamma_q, chain, seed, iterations);
        }
        py::dict d;
        d["oracle"] = r.oracle;
        d["estimate"] = r.estimate;
        d["tv"] = r.tv;
        return d;
      },
      py::arg("gamma_q") = 0.9, py::arg("chain") = 3, py::arg("seed") = 0, py::arg("iterations") = 1500);

  py::class_<envs::Environment>(m, "Environment")
      .def_property_readonly("name", &envs::Environment::name)
      .def_property_readonly("obs_dim", [](const envs::Environment& e) { return e.spec().obs_dim; })
      .def_property_readonly("act_dim", [](const envs::Environment& e) { return e.spec().act_dim; })
      .def_property_readonly("max_steps", [](const envs::Environment& e) { return e.spec().max_steps; })
      .def("reset", &envs::Environment::reset, py::arg("seed"))
      .def(
          "step",
          [](envs::Environment& e, const std::vector<double>& action) {
            auto r = e.step(action);
            return py::make_tuple(r.obs, r.reward, r.done, r.info);
          },
          py::arg("action"));
  m.def(
      "make_env", [](const std::string& name) { return envs::make_env(name); }, py::arg("name"));

  m.def("default_config", [] { return TrainConfig{}.to_map(); });
  m.def(
      "train",
      [](const std::map<std::string, std::string>& config, std::optional<std::filesystem::path> out_dir) {
        auto cfg = config_from(config);
        TrainResult result;
        {
          py::gil_scoped_release release;
          result = train(cfg, out_dir);
        }
        std::vector<std::string> lines;
        for (const auto& rec : result.records) lines.push_back(rec.to_line());
        return lines;
      },
      py::arg("config"), py::arg("out_dir") = std::nullopt, "Returns one JSON metrics line per evaluation.");
  m.def(
      "evaluate_checkpoint",
      [](const std::filesystem::path& ckpt, const std::string& env, int64_t episodes, uint64_t seed) {
        EvalReport r;
        {
          py::gil_scoped_release release;
          r = evaluate_checkpoint(ckpt, env, episodes, seed);
        }
        return report_dict(r);
      },
      py::arg("checkpoint"), py::arg("env"), py::arg("episodes") = 10, py::arg("seed") = 0);
  m.def("export_metrics_csv", &export_metrics_csv, py::arg("metrics"), py::arg("csv"));
}
