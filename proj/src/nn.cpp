#include "maxent/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "maxent/errors.hpp"

namespace maxent {

NoiseSource::NoiseSource(uint64_t seed) : gen_(at::make_generator<at::CPUGeneratorImpl>(seed)) {}

NoiseSource NoiseSource::zero() { return NoiseSource(); }

torch::Tensor NoiseSource::normal(at::IntArrayRef shape, const torch::TensorOptions& opts) {
  if (zero_) return torch::zeros(shape, opts);
  return torch::randn(shape, gen_, opts);
}

torch::Tensor NoiseSource::uniform(at::IntArrayRef shape, const torch::TensorOptions& opts) {
  if (zero_) return torch::full(shape, 0.5, opts);
  return torch::rand(shape, gen_, opts);
}

torch::Tensor NoiseSource::categorical(const torch::Tensor& probs, int64_t count) {
  if (zero_) return probs.argmax(-1).unsqueeze(0).expand({count, probs.size(0)}).contiguous();
  // Inverse-CDF sampling keeps the draw a pure function of the generator state.
  auto cdf = probs.detach().cumsum(-1);
  cdf.select(-1, cdf.size(-1) - 1).fill_(1.0);
  auto u = torch::rand({count, probs.size(0), 1}, gen_, probs.options().requires_grad(false));
  return (u > cdf.unsqueeze(0)).sum(-1).clamp_max(probs.size(-1) - 1);
}

MlpImpl::MlpImpl(int64_t in, int64_t hidden, int64_t layers, int64_t out, bool zero_head) {
  int64_t width = in;
  for (int64_t i = 0; i < layers; ++i) {
    hidden_.push_back(register_module("l" + std::to_string(i), torch::nn::Linear(width, hidden)));
    width = hidden;
  }
  head_ = register_module("out", torch::nn::Linear(width, out));
  if (zero_head) {
    torch::NoGradGuard guard;
    head_->weight.zero_();
    head_->bias.zero_();
  }
}

torch::Tensor MlpImpl::forward(torch::Tensor x) {
  for (auto& layer : hidden_) x = torch::elu(layer->forward(x));
  return head_->forward(x);
}

DiagGaussian DiagGaussian::from_raw(const torch::Tensor& raw, double min_std) {
  auto parts = raw.chunk(2, -1);
  return {parts[0], torch::nn::functional::softplus(parts[1]) + min_std};
}

DiagGaussian DiagGaussian::standard(const torch::Tensor& like_mean) {
  return {torch::zeros_like(like_mean), torch::ones_like(like_mean)};
}

torch::Tensor DiagGaussian::rsample(NoiseSource& noise) const {
  return mean + std * noise.normal(mean.sizes(), mean.options().requires_grad(false));
}

torch::Tensor gaussian_kl(const DiagGaussian& p, const DiagGaussian& q) {
  if (p.mean.sizes() != q.mean.sizes()) throw std::invalid_argument("gaussian_kl: dimension mismatch");
  if ((p.std <= 0).any().item<bool>() || (q.std <= 0).any().item<bool>())
    throw std::invalid_argument("gaussian_kl: standard deviations must be positive");
  auto var_ratio = (p.std / q.std).pow(2);
  auto mean_term = ((p.mean - q.mean) / q.std).pow(2);
  return (0.5 * (var_ratio + mean_term - 1.0 - var_ratio.log())).sum(-1);
}

torch::Tensor jeffreys(const DiagGaussian& p, const DiagGaussian& q) {
  return gaussian_kl(p, q) + gaussian_kl(q, p);
}

torch::Tensor smooth_l1(const torch::Tensor& pred, const torch::Tensor& target) {
  auto diff = (pred - target).abs();
  return torch::where(diff < 1.0, 0.5 * diff * diff, diff - 0.5);
}

void require_finite(const torch::Tensor& t, const std::string& what) {
  if (!torch::isfinite(t.detach()).all().item<bool>()) throw NumericError("non-finite values in " + what);
}

void set_requires_grad(torch::nn::Module& module, bool on) {
  for (auto& p : module.parameters()) p.set_requires_grad(on);
}

void assign_grads(const torch::Tensor& loss, const std::vector<torch::Tensor>& params, double clip_norm,
                  bool retain_graph) {
  auto grads = torch::autograd::grad({loss}, params, /*grad_outputs=*/{}, retain_graph,
                                     /*create_graph=*/false, /*allow_unused=*/true);
  for (size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i].defined() ? grads[i] : torch::zeros_like(params[i]);
    params[i].mutable_grad() = g.detach();
  }
  if (clip_norm > 0.0) torch::nn::utils::clip_grad_norm_(params, clip_norm);
}

}  // namespace maxent
