#include "maxent/envs.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "maxent/errors.hpp"

namespace maxent::envs {

void EnvSpec::validate() const {
  if (obs_dim < 1 || act_dim < 1) throw std::invalid_argument("EnvSpec: dimensions must be positive");
  if (static_cast<int>(act_low.size()) != act_dim || static_cast<int>(act_high.size()) != act_dim)
    throw std::invalid_argument("EnvSpec: action bounds do not match act_dim");
  for (int i = 0; i < act_dim; ++i)
    if (!(act_low[i] < act_high[i])) throw std::invalid_argument("EnvSpec: act_low must be below act_high");
  if (max_steps < 1) throw std::invalid_argument("EnvSpec: max_steps must be at least 1");
  if (static_cast<int>(obs_low.size()) != obs_dim || static_cast<int>(obs_high.size()) != obs_dim)
    throw std::invalid_argument("EnvSpec: observation bounds do not match obs_dim");
}

bool StepResult::has_tag(std::string_view tag) const {
  return std::find(info.begin(), info.end(), tag) != info.end();
}

void TabularMdp::validate(double tol) const {
  if (n_states < 1 || n_actions < 1) throw std::invalid_argument("TabularMdp: empty");
  if (transition.size() != static_cast<size_t>(n_states) * n_actions * n_states)
    throw std::invalid_argument("TabularMdp: transition tensor has wrong size");
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double total = 0.0;
      for (int t = 0; t < n_states; ++t) {
        if (p(s, a, t) < 0.0) throw std::invalid_argument("TabularMdp: negative transition probability");
        total += p(s, a, t);
      }
      if (std::abs(total - 1.0) > tol) throw std::invalid_argument("TabularMdp: transition row does not sum to 1");
    }
  }
  double total = 0.0;
  for (double v : start) total += v;
  if (static_cast<int>(start.size()) != n_states || std::abs(total - 1.0) > tol)
    throw std::invalid_argument("TabularMdp: start is not a distribution");
}

TabularMdp Environment::as_tabular() const {
  throw std::logic_error(name() + " has no tabular form");
}

std::vector<double> Environment::reset(uint64_t seed) {
  rng_.seed(seed);
  steps_ = 0;
  done_ = false;
  was_reset_ = true;
  return reset_impl(rng_);
}

StepResult Environment::step(std::span<const double> action) {
  if (!was_reset_) throw std::logic_error(name() + ": step() before reset()");
  if (done_) throw std::logic_error(name() + ": step() after episode end; call reset()");
  const EnvSpec s = spec();
  if (static_cast<int>(action.size()) != s.act_dim)
    throw std::invalid_argument(name() + ": action has wrong dimension");
  std::vector<double> clipped(action.begin(), action.end());
  for (int i = 0; i < s.act_dim; ++i) {
    // NaN actions collapse to the box center.
    if (std::isnan(clipped[i])) clipped[i] = 0.5 * (s.act_low[i] + s.act_high[i]);
    clipped[i] = std::clamp(clipped[i], s.act_low[i], s.act_high[i]);
  }
  StepResult result = step_impl(clipped, rng_);
  ++steps_;
  if (result.done && !result.has_tag("terminal")) result.info.emplace_back("terminal");
  if (steps_ >= s.max_steps && !result.done) {
    result.done = true;
    result.info.emplace_back("timeout");
  }
  done_ = result.done;
  return result;
}

// Corridor1D ------------------------------------------------------------------

EnvSpec Corridor1D::spec() const {
  return EnvSpec{1, 1, {-kMaxMove}, {kMaxMove}, 100, {0.0}, {1.0}};
}

std::vector<double> Corridor1D::reset_impl(std::mt19937_64&) {
  x_ = 0.0;
  return {x_};
}

StepResult Corridor1D::step_impl(std::span<const double> action, std::mt19937_64&) {
  x_ = std::clamp(x_ + action[0], 0.0, 1.0);
  StepResult r;
  r.obs = {x_};
  r.reward = x_ >= kGoal ? 1.0 : 0.0;
  if (r.reward > 0.0) r.info.emplace_back("goal");
  return r;
}

// PointMass2D -----------------------------------------------------------------

EnvSpec PointMass2D::spec() const {
  return EnvSpec{4,
                 2,
                 {-1.0, -1.0},
                 {1.0, 1.0},
                 100,
                 {-1.0, -1.0, -kMaxSpeed, -kMaxSpeed},
                 {1.0, 1.0, kMaxSpeed, kMaxSpeed}};
}

std::vector<double> PointMass2D::reset_impl(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-kStartJitter, kStartJitter);
  pos_[0] = kStartX + jitter(rng);
  pos_[1] = jitter(rng);
  vel_[0] = vel_[1] = 0.0;
  return observe();
}

StepResult PointMass2D::step_impl(std::span<const double> action, std::mt19937_64&) {
  const double x_before = pos_[0];
  for (int i = 0; i < 2; ++i) {
    vel_[i] = kDamping * vel_[i] + kForceGain * action[i];
    pos_[i] += vel_[i];
    if (pos_[i] > 1.0 || pos_[i] < -1.0) {
      pos_[i] = std::clamp(pos_[i], -1.0, 1.0);
      vel_[i] = 0.0;
    }
  }
  StepResult r;
  const double lo = std::min(x_before, pos_[0]);
  const double hi = std::max(x_before, pos_[0]);
  const bool touches_band = hi >= kBandLow && lo <= kBandHigh;
  if (touches_band && std::abs(vel_[0]) > kCrashSpeed) {
    r.done = true;
    r.info = {"crash", "terminal"};
  } else if (pos_[0] >= kGoalX && std::abs(pos_[1]) <= kGoalHalfWidth) {
    r.reward = 1.0;
    r.info.emplace_back("goal");
  }
  r.obs = observe();
  return r;
}

// LockSequence ----------------------------------------------------------------

EnvSpec LockSequence::spec() const {
  return EnvSpec{3, 1, {-1.0}, {1.0}, 100, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
}

bool LockSequence::at_gate() const {
  return passed_ < 3 && std::abs(x_ - kGates[passed_]) < 1e-9;
}

std::vector<double> LockSequence::observe() const {
  return {x_, passed_ / 3.0, at_gate() ? 1.0 : 0.0};
}

std::vector<double> LockSequence::reset_impl(std::mt19937_64&) {
  x_ = 0.0;
  passed_ = 0;
  return observe();
}

StepResult LockSequence::step_impl(std::span<const double> action, std::mt19937_64&) {
  const double a = action[0];
  StepResult r;
  if (at_gate() && a * kSigns[passed_] >= kUnlockMagnitude) {
    ++passed_;
    r.info.emplace_back("gate");
  } else {
    double next = std::clamp(x_ + kStepScale * a, 0.0, 1.0);
    if (passed_ < 3 && next > kGates[passed_]) next = kGates[passed_];
    x_ = next;
  }
  r.reward = x_ >= kGoal ? 1.0 : 0.0;
  if (r.reward > 0.0) r.info.emplace_back("goal");
  r.obs = observe();
  return r;
}

// ChainMdp --------------------------------------------------------------------

ChainMdp::ChainMdp(int n_states, double slip) : n_(n_states), slip_(slip) {
  if (n_states < 2) throw std::invalid_argument("ChainMdp needs at least 2 states");
  if (!(slip >= 0.0 && slip < 1.0)) throw std::invalid_argument("ChainMdp slip must be in [0, 1)");
}

EnvSpec ChainMdp::spec() const {
  return EnvSpec{n_, 1, {-1.0}, {1.0}, 4 * n_, std::vector<double>(n_, 0.0), std::vector<double>(n_, 1.0)};
}

std::string ChainMdp::name() const {
  std::string s = "chainmdp:" + std::to_string(n_);
  if (slip_ > 0.0) s += ":" + std::to_string(slip_);
  return s;
}

std::vector<double> ChainMdp::one_hot(int s) const {
  std::vector<double> v(n_, 0.0);
  v[s] = 1.0;
  return v;
}

TabularMdp ChainMdp::as_tabular() const {
  TabularMdp m;
  m.n_states = n_;
  m.n_actions = 2;
  m.transition.assign(static_cast<size_t>(n_) * 2 * n_, 0.0);
  m.reward.assign(static_cast<size_t>(n_) * 2, 0.0);
  m.terminal.assign(n_, false);
  m.terminal[n_ - 1] = true;
  m.start.assign(n_, 0.0);
  m.start[0] = 1.0;
  for (int s = 0; s < n_; ++s) {
    for (int a = 0; a < 2; ++a) {
      if (s == n_ - 1) {
        m.p(s, a, s) = 1.0;
        continue;
      }
      m.p(s, a, s + 1) += 1.0 - slip_;
      m.p(s, a, s) += slip_;
      m.reward[static_cast<size_t>(s) * 2 + a] = a == rewarded_lever(s) ? 1.0 : 0.0;
    }
  }
  return m;
}

std::vector<double> ChainMdp::reset_impl(std::mt19937_64&) {
  state_ = 0;
  return one_hot(state_);
}

StepResult ChainMdp::step_impl(std::span<const double> action, std::mt19937_64& rng) {
  StepResult r;
  const int a = lever(action[0]);
  r.reward = a == rewarded_lever(state_) ? 1.0 : 0.0;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) >= slip_) ++state_;
  if (state_ == n_ - 1) {
    r.done = true;
    r.info.emplace_back("terminal");
  }
  r.obs = one_hot(state_);
  return r;
}

// Factory ---------------------------------------------------------------------

namespace {

template <typename T>
T parse_number(std::string_view text, std::string_view what) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("bad " + std::string(what) + " in environment name: '" + std::string(text) + "'");
  return value;
}

}  // namespace

std::unique_ptr<Environment> make_env(std::string_view name) {
  if (name == "corridor1d") return std::make_unique<Corridor1D>();
  if (name == "pointmass2d") return std::make_unique<PointMass2D>();
  if (name == "locksequence") return std::make_unique<LockSequence>();
  if (name.starts_with("chainmdp:")) {
    std::string_view rest = name.substr(9);
    const auto colon = rest.find(':');
    const int n = parse_number<int>(rest.substr(0, colon), "chain size");
    double slip = 0.0;
    if (colon != std::string_view::npos) slip = parse_number<double>(rest.substr(colon + 1), "slip");
    if (n < 2 || slip < 0.0 || slip >= 1.0) throw ConfigError("chainmdp needs N >= 2 and slip in [0, 1)");
    return std::make_unique<ChainMdp>(n, slip);
  }
  throw ConfigError("unknown environment '" + std::string(name) + "'");
}

}  // namespace maxent::envs
