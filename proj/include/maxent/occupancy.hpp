#pragma once

#include <torch/torch.h>

#include <vector>

#include "maxent/envs.hpp"
#include "maxent/nn.hpp"
#include "maxent/trajectory.hpp"

namespace maxent {

/// Gaussian mixture over latent states.
///   log_weights [B, K]   (normalized)
///   means       [B, K, d]
///   stds        [B, K, d]
struct MixtureParams {
  torch::Tensor log_weights;
  torch::Tensor means;
  torch::Tensor stds;

  torch::Tensor weights() const { return log_weights.exp(); }
  int64_t components() const { return means.size(-2); }
  int64_t dim() const { return means.size(-1); }
};

struct OccupancyConfig {
  double gamma_q = 0.9;
  double soft_tau = 0.1;
  double lr = 2e-4;
  int horizon = 15;  // bootstrap horizon n, tied to the imagination horizon
  int components = 8;
  int hidden = 256;
  double min_std = 0.05;

  void validate() const;
};

/// Conditional mixture density network: state (d) -> MixtureParams over R^d.
class MdnImpl : public torch::nn::Module {
 public:
  MdnImpl(int64_t dim, int64_t hidden, int64_t components, double min_std);
  MixtureParams forward(const torch::Tensor& state);

  int64_t dim() const { return dim_; }
  int64_t components() const { return k_; }

 private:
  int64_t dim_;
  int64_t k_;
  double min_std_;
  Mlp net_{nullptr};
};
TORCH_MODULE(Mdn);

/// Online and target MDN pair. The target starts as an exact copy and never receives
/// gradients; it only moves through soft_update.
struct MdnPair {
  Mdn online{nullptr};
  Mdn target{nullptr};

  MdnPair(int64_t dim, const OccupancyConfig& cfg);
};

/// log sum_k w_k N(x; mu_k, diag sigma_k^2). `x` is [B, d] or [N, B, d]; result drops d.
torch::Tensor mdn_log_prob(const MixtureParams& params, const torch::Tensor& x);

/// Ancestral sampling, [count, B, d]. Component indices are not differentiable; the Gaussian
/// draw is reparametrized.
torch::Tensor mdn_sample(const MixtureParams& params, int64_t count, NoiseSource& noise);

struct OccupancyWeights {
  std::vector<double> w;  // (1 - g) g^i, i = 0..n-1
  double w_boot = 0.0;    // g^n
};

/// Importance weights of the n in-trajectory states and of the bootstrap sample.
OccupancyWeights occupancy_weights(int n, double gamma_q);

/// Weights [n+1, B] with termination folded in. With alive_i = prod_{j<i} c_j the state
/// reached after transition i gets alive_i * ((1 - g) g^i + (1 - c_i) g^{i+1}) and the
/// bootstrap gets alive_n * g^n, so every column still sums to 1.
torch::Tensor occupancy_term_weights(const torch::Tensor& continues, double gamma_q);

/// Weighted negative log-likelihood of the online MDN anchored at states[0]. The states are
/// detached; the bootstrap draw comes from the target MDN at states[n].
torch::Tensor occupancy_loss(MdnPair& nets, const ImaginedTrajectory& traj, const OccupancyConfig& cfg,
                             NoiseSource& noise);

/// Per-rollout Monte-Carlo entropy estimate [B] of the discounted occupancy anchored at
/// states[0], evaluated with the (frozen) target MDN. Gradients flow into the trajectory
/// states; the bootstrap draw is detached.
torch::Tensor entropy_bonus(Mdn& target, const ImaginedTrajectory& traj, const OccupancyConfig& cfg,
                            NoiseSource& noise);

/// entropy_bonus with caller-supplied bootstrap draws [1, B, d] and, optionally, weights
/// [n+1, B] (both treated as constants).
torch::Tensor entropy_bonus_given(Mdn& target, const ImaginedTrajectory& traj, const OccupancyConfig& cfg,
                                  const torch::Tensor& bootstrap, const torch::Tensor& weights = {});

/// target <- (1 - tau) target + tau online, for every parameter.
void soft_update(Mdn& target, Mdn& online, double tau);

/// Row-stochastic policy table pi[s][a].
using PolicyTable = std::vector<std::vector<double>>;

/// Exact discounted occupancy q(s | s0) = (1 - g) sum_i g^i Pr(s_{i+1} = s | s0), from the
/// linear system q = (1 - g) p1 + g P_pi^T q.
std::vector<double> tabular_occupancy_oracle(const envs::TabularMdp& mdp, const PolicyTable& policy, double gamma_q,
                                             int s0);

/// Mass of each mixture in the unit cells centred on the one-hot vectors e_0..e_{d-1}:
/// [B, d]. The cells are disjoint, so rows sum to at most 1.
torch::Tensor mixture_unit_cell_mass(const MixtureParams& params);

}  // namespace maxent
