#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace maxent {

/// Source of reparametrization noise. A zero source returns exact zeros for normal draws and
/// 0.5 for uniform ones, which turns every sampler into its mode.
class NoiseSource {
 public:
  explicit NoiseSource(uint64_t seed);
  static NoiseSource zero();

  torch::Tensor normal(at::IntArrayRef shape, const torch::TensorOptions& opts);
  torch::Tensor uniform(at::IntArrayRef shape, const torch::TensorOptions& opts);
  /// Categorical draws from rows of `probs` ([B, K]) -> [count, B] int64.
  torch::Tensor categorical(const torch::Tensor& probs, int64_t count);

  bool is_zero() const { return zero_; }

 private:
  NoiseSource() : zero_(true) {}

  torch::Generator gen_;
  bool zero_ = false;
};

/// Dense stack: `layers` hidden Linear+ELU blocks followed by a linear head.
class MlpImpl : public torch::nn::Module {
 public:
  MlpImpl(int64_t in, int64_t hidden, int64_t layers, int64_t out, bool zero_head = false);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Linear head() const { return head_; }

 private:
  std::vector<torch::nn::Linear> hidden_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Mlp);

/// Diagonal Gaussian over the last tensor dimension.
struct DiagGaussian {
  torch::Tensor mean;
  torch::Tensor std;

  /// mean = first half of `raw`, std = softplus(second half) + min_std.
  static DiagGaussian from_raw(const torch::Tensor& raw, double min_std);
  static DiagGaussian standard(const torch::Tensor& like_mean);

  /// mean + std * eps.
  torch::Tensor rsample(NoiseSource& noise) const;
  DiagGaussian detach() const { return {mean.detach(), std.detach()}; }
};

/// Closed-form KL(p || q), summed over the last dimension.
torch::Tensor gaussian_kl(const DiagGaussian& p, const DiagGaussian& q);
/// KL(p || q) + KL(q || p).
torch::Tensor jeffreys(const DiagGaussian& p, const DiagGaussian& q);

/// Elementwise Huber loss with transition point 1: 0.5 x^2 inside, |x| - 0.5 outside.
torch::Tensor smooth_l1(const torch::Tensor& pred, const torch::Tensor& target);

/// Throws NumericError naming `what` when `t` holds NaN or Inf.
void require_finite(const torch::Tensor& t, const std::string& what);

/// Toggles requires_grad on every parameter of a module.
void set_requires_grad(torch::nn::Module& module, bool on);

/// Gradients of `loss` with respect to `params` written into their .grad slots, followed by
/// global-norm clipping. Other leaves of the graph are left untouched.
void assign_grads(const torch::Tensor& loss, const std::vector<torch::Tensor>& params, double clip_norm,
                  bool retain_graph = false);

}  // namespace maxent
