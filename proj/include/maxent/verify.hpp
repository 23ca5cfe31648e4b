#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "maxent/envs.hpp"
#include "maxent/trajectory.hpp"

namespace maxent {

struct GradCheckReport {
  std::string component;
  double max_rel_error = 0.0;
  int64_t coordinates = 0;
  double tolerance = 0.0;

  bool passed() const { return max_rel_error < tolerance; }
};

/// Component names accepted by grad_check.
const std::vector<std::string>& grad_check_components();

/// Relative error |a - n| / max(|a|, |n|, floor) used throughout the gradient checks.
double relative_error(double analytic, double numeric, double floor = 1e-5);

/// Compares reverse-mode gradients of `loss_fn` against central differences (step 1e-5) on up
/// to `per_tensor` randomly chosen coordinates of every tensor in `params`. `loss_fn` must be a
/// pure function of the parameters (re-seed any noise inside it). Returns the max rel. error.
double finite_difference_check(const std::function<torch::Tensor()>& loss_fn, const std::vector<torch::Tensor>& params,
                               int per_tensor, uint64_t seed, int64_t* coordinates = nullptr);

/// Tiny float64 instance of one differentiable path: world_model, mdn, critic, actor_stoch,
/// actor_det (both actors through a frozen world model) or imagination (summed imagined rewards).
GradCheckReport grad_check(const std::string& component, uint64_t seed = 0);

/// Exact latent model of ChainMdp: one-hot states, deterministic right shift, expected reward
/// of the lever distribution p(lever 1) = (a + 1) / 2. With `absorbing` the last state loops
/// forever with continuation 1; otherwise entering it terminates (continuation 0).
class ChainExactModel : public LatentDynamics {
 public:
  ChainExactModel(int n_states, bool absorbing);
  ImaginedStep imagine_features(const torch::Tensor& state, const torch::Tensor& action, NoiseSource& noise) override;
  torch::Tensor one_hot(const std::vector<int64_t>& states) const;
  int n_states() const { return n_; }

 private:
  int n_;
  bool absorbing_;
};

struct ValueIterationResult {
  std::vector<double> values;
  std::vector<int> greedy_actions;  // -1 at terminal states
};

ValueIterationResult value_iteration(const envs::TabularMdp& mdp, double gamma, double tol = 1e-12);

struct OracleCheckReport {
  std::vector<double> oracle;
  std::vector<double> estimate;  // MDN mass per unit cell
  double tv = 0.0;               // includes mass outside every cell
};

/// Trains an MDN on imagined rollouts of the exact chain model (every start state, absorbing
/// last state) and compares its occupancy from state 0 with the tabular oracle.
OracleCheckReport oracle_check(double gamma_q, int chain_size, uint64_t seed = 0, int iterations = 1500);

}  // namespace maxent
