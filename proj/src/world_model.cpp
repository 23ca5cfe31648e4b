#include "maxent/world_model.hpp"

#include <stdexcept>

#include "maxent/errors.hpp"

namespace maxent {

void WorldModelConfig::validate() const {
  if (obs_dim < 1 || act_dim < 1 || deter_dim < 1 || stoch_dim < 1 || hidden < 1 || layers < 1)
    throw ConfigError("world model dimensions must be positive");
  if (!(min_std > 0.0)) throw ConfigError("world model min_std must be positive");
  if (kl_coef < 0.0 || jeffreys_coef < 0.0 || baseline_kl_coef < 0.0)
    throw ConfigError("divergence coefficients must be non-negative");
  if (!(obs_scale > 0.0)) throw ConfigError("obs_scale must be positive");
  if (!act_low.empty() || !act_high.empty()) {
    if (static_cast<int>(act_low.size()) != act_dim || static_cast<int>(act_high.size()) != act_dim)
      throw ConfigError("action bounds must match act_dim");
    for (int i = 0; i < act_dim; ++i)
      if (!(act_high[i] > act_low[i])) throw ConfigError("action bounds must satisfy low < high");
  }
  if (!obs_low.empty() || !obs_high.empty()) {
    if (static_cast<int>(obs_low.size()) != obs_dim || static_cast<int>(obs_high.size()) != obs_dim)
      throw ConfigError("observation bounds must match obs_dim");
    for (int i = 0; i < obs_dim; ++i)
      if (!(obs_high[i] > obs_low[i])) throw ConfigError("observation bounds must satisfy low < high");
  }
}

void SequenceBatch::validate() const {
  if (observations.dim() != 3) throw std::invalid_argument("SequenceBatch: observations must be [B, L, obs]");
  const auto b = observations.size(0);
  const auto l = observations.size(1);
  if (l < 2) throw std::invalid_argument("SequenceBatch: sequence length must be at least 2");
  if (actions.dim() != 3 || actions.size(0) != b || actions.size(1) != l - 1)
    throw std::invalid_argument("SequenceBatch: actions must be [B, L-1, act]");
  if (rewards.sizes() != torch::IntArrayRef({b, l - 1}) || dones.sizes() != torch::IntArrayRef({b, l - 1}))
    throw std::invalid_argument("SequenceBatch: rewards and dones must be [B, L-1]");
}

WorldModelImpl::WorldModelImpl(WorldModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int64_t H = cfg_.hidden;
  pre_ = register_module("pre", Mlp(cfg_.stoch_dim + cfg_.act_dim, H, 0, H));
  cell_ = register_module("cell", torch::nn::GRUCell(H, cfg_.deter_dim));
  prior_net_ = register_module("prior", Mlp(cfg_.deter_dim, H, 1, 2 * cfg_.stoch_dim));
  posterior_net_ = register_module("posterior", Mlp(cfg_.deter_dim + cfg_.obs_dim, H, cfg_.layers, 2 * cfg_.stoch_dim));
  const int64_t decoder_in = cfg_.modifications ? cfg_.stoch_dim : cfg_.deter_dim + cfg_.stoch_dim;
  decoder_ = register_module("decoder", Mlp(decoder_in, H, cfg_.layers, cfg_.obs_dim));
  reward_net_ = register_module("reward", Mlp(state_dim(), H, cfg_.layers, 1));
  if (cfg_.modifications) continue_net_ = register_module("termination", Mlp(state_dim(), H, cfg_.layers, 1));
}

LatentState WorldModelImpl::init_state(int64_t batch) const {
  if (batch < 1) throw std::invalid_argument("init_state: batch must be at least 1");
  auto opts = reward_net_->head()->weight.options().requires_grad(false);
  return {torch::zeros({batch, cfg_.deter_dim}, opts), torch::zeros({batch, cfg_.stoch_dim}, opts)};
}

LatentState WorldModelImpl::split(const torch::Tensor& features) const {
  if (features.size(-1) != state_dim()) throw std::invalid_argument("latent features have wrong dimension");
  return {features.narrow(-1, 0, cfg_.deter_dim), features.narrow(-1, cfg_.deter_dim, cfg_.stoch_dim)};
}

torch::Tensor WorldModelImpl::transition(const LatentState& state, const torch::Tensor& action) {
  if (action.size(-1) != cfg_.act_dim) throw std::invalid_argument("transition: action has wrong dimension");
  auto a = action;
  if (!cfg_.act_low.empty()) {
    auto low = torch::tensor(cfg_.act_low, torch::kFloat64).to(action.scalar_type());
    auto high = torch::tensor(cfg_.act_high, torch::kFloat64).to(action.scalar_type());
    a = 2.0 * (action - low) / (high - low) - 1.0;
  }
  auto x = torch::elu(pre_->forward(torch::cat({state.z, a}, -1)));
  return cell_->forward(x, state.h);
}

DiagGaussian WorldModelImpl::prior(const torch::Tensor& h) {
  return DiagGaussian::from_raw(prior_net_->forward(h), cfg_.min_std);
}

DiagGaussian WorldModelImpl::posterior(const torch::Tensor& h, const torch::Tensor& obs) {
  if (obs.size(-1) != cfg_.obs_dim) throw std::invalid_argument("posterior: observation has wrong dimension");
  return DiagGaussian::from_raw(posterior_net_->forward(torch::cat({h, normalize_obs(obs)}, -1)), cfg_.min_std);
}

torch::Tensor WorldModelImpl::normalize_obs(const torch::Tensor& obs) const {
  if (cfg_.obs_low.empty()) return obs * cfg_.obs_scale;
  auto opts = obs.options().requires_grad(false);
  auto low = torch::tensor(cfg_.obs_low, torch::kFloat64).to(opts.dtype());
  auto high = torch::tensor(cfg_.obs_high, torch::kFloat64).to(opts.dtype());
  return (2.0 * (obs - low) / (high - low) - 1.0) * cfg_.obs_scale;
}

torch::Tensor WorldModelImpl::decode(const torch::Tensor& z) {
  if (!cfg_.modifications) throw std::logic_error("decode(z) needs the stochastic-only decoder");
  if (z.size(-1) != cfg_.stoch_dim) throw std::invalid_argument("decode: z has wrong dimension");
  return decoder_->forward(z);
}

torch::Tensor WorldModelImpl::reconstruct(const LatentState& state) {
  return cfg_.modifications ? decode(state.z) : decoder_->forward(state.features());
}

torch::Tensor WorldModelImpl::reward(const LatentState& state) {
  return reward_net_->forward(state.features()).squeeze(-1);
}

torch::Tensor WorldModelImpl::termination_logit(const LatentState& state) {
  if (!has_termination_head()) throw std::logic_error("this world model has no termination head");
  return continue_net_->forward(state.features()).squeeze(-1);
}

ObserveResult WorldModelImpl::observe_step(const LatentState& state, const std::optional<torch::Tensor>& prev_action,
                                           const torch::Tensor& obs, NoiseSource& noise) {
  auto h = prev_action ? transition(state, *prev_action) : state.h;
  auto post = posterior(h, obs);
  return {{h, post.rsample(noise)}, post};
}

LatentState WorldModelImpl::start_episode(const torch::Tensor& obs, NoiseSource& noise) {
  auto init = init_state(obs.size(0));
  if (!cfg_.modifications) return init;
  return observe_step(init, std::nullopt, obs, noise).state;
}

ImagineResult WorldModelImpl::imagine_step(const LatentState& state, const torch::Tensor& action, NoiseSource& noise) {
  auto h = transition(state, action);
  auto pri = prior(h);
  LatentState next{h, pri.rsample(noise)};
  auto r = reward(next);
  auto c = has_termination_head() ? torch::sigmoid(-termination_logit(next)) : torch::ones_like(r);
  require_finite(next.h, "imagined deterministic state");
  return {next, pri, r, c};
}

ImaginedStep WorldModelImpl::imagine_features(const torch::Tensor& state, const torch::Tensor& action,
                                              NoiseSource& noise) {
  auto out = imagine_step(split(state), action, noise);
  return {out.state.features(), out.reward, out.cont};
}

WorldModelLoss WorldModelImpl::loss(const SequenceBatch& batch, NoiseSource& noise) {
  batch.validate();
  const int64_t B = batch.batch();
  const int64_t L = batch.length();
  if (batch.observations.size(2) != cfg_.obs_dim || batch.actions.size(2) != cfg_.act_dim)
    throw std::invalid_argument("world model loss: batch dimensions do not match the model");

  std::vector<torch::Tensor> recon, reward_terms, term_terms, kl_fixed, jeff, kl_prior;
  LatentState state = init_state(B);
  LatentState start;

  for (int64_t t = 0; t < L; ++t) {
    auto obs = batch.observations.select(1, t);
    std::optional<torch::Tensor> prev;
    if (t > 0) prev = batch.actions.select(1, t - 1);
    if (!cfg_.modifications && t == 0) continue;  // original order: o_0 is never encoded

    auto step = observe_step(state, prev, obs, noise);
    state = step.state;
    if (!start.h.defined()) start = state.detach();

    recon.push_back((reconstruct(state) - normalize_obs(obs)).pow(2).sum(-1));
    auto pri = prior(state.h);
    if (cfg_.modifications) {
      kl_fixed.push_back(gaussian_kl(step.posterior, DiagGaussian::standard(step.posterior.mean)));
      jeff.push_back(jeffreys(step.posterior, pri));
    } else {
      kl_prior.push_back(gaussian_kl(step.posterior, pri));
    }
    if (t > 0) {
      auto r_hat = reward(state);
      auto r = batch.rewards.select(1, t - 1);
      reward_terms.push_back(cfg_.modifications ? smooth_l1(r_hat, r) : (r_hat - r).pow(2));
      if (cfg_.modifications) {
        term_terms.push_back(torch::binary_cross_entropy_with_logits(
            termination_logit(state), batch.dones.select(1, t - 1), {}, {}, at::Reduction::None));
      }
    }
  }

  WorldModelLoss out;
  auto mean_of = [](const std::vector<torch::Tensor>& terms) { return torch::stack(terms).mean(); };
  out.components["recon"] = mean_of(recon);
  out.components["reward"] = mean_of(reward_terms);
  if (cfg_.modifications) {
    out.components["termination"] = mean_of(term_terms);
    out.components["kl_fixed"] = mean_of(kl_fixed);
    out.components["jeffreys"] = mean_of(jeff);
    out.total = out.components["recon"] + out.components["reward"] + out.components["termination"] +
                cfg_.kl_coef * out.components["kl_fixed"] + cfg_.jeffreys_coef * out.components["jeffreys"];
  } else {
    out.components["kl"] = mean_of(kl_prior);
    out.total = out.components["recon"] + out.components["reward"] + cfg_.baseline_kl_coef * out.components["kl"];
  }
  out.start = start;
  return out;
}

}  // namespace maxent
