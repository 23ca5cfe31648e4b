#pragma once

#include <torch/torch.h>

#include "maxent/nn.hpp"

namespace maxent {

/// Differentiable synthetic rollout, time-major.
///   states    [H+1, B, d]   latent features (h, z) concatenated
///   actions   [H,   B, A]
///   rewards   [H,   B]
///   continues [H,   B]      probability the episode goes on after each transition
struct ImaginedTrajectory {
  torch::Tensor states;
  torch::Tensor actions;
  torch::Tensor rewards;
  torch::Tensor continues;

  int64_t horizon() const { return actions.size(0); }
  int64_t batch() const { return states.size(1); }
  ImaginedTrajectory detach() const {
    return {states.detach(), actions.detach(), rewards.detach(), continues.detach()};
  }
};

/// Output of one imagined transition on latent features.
struct ImaginedStep {
  torch::Tensor next_state;  // [B, d]
  torch::Tensor reward;      // [B]
  torch::Tensor cont;        // [B]
};

/// Anything that can advance latent features under an action without observations.
class LatentDynamics {
 public:
  virtual ~LatentDynamics() = default;
  virtual ImaginedStep imagine_features(const torch::Tensor& state, const torch::Tensor& action,
                                        NoiseSource& noise) = 0;
};

}  // namespace maxent
