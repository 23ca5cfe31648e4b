#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace maxent::envs {

struct EnvSpec {
  int obs_dim = 0;
  int act_dim = 0;
  std::vector<double> act_low;
  std::vector<double> act_high;
  int max_steps = 1;
  // Documented range of every observation dimension. Used for coverage binning.
  std::vector<double> obs_low;
  std::vector<double> obs_high;

  void validate() const;
};

struct StepResult {
  std::vector<double> obs;
  double reward = 0.0;
  bool done = false;
  // Free-form tags: "timeout", "terminal", "goal", "gate", "crash".
  std::vector<std::string> info;

  bool has_tag(std::string_view tag) const;
  /// True when the episode ended because of the environment rule, not the step limit.
  bool terminal() const { return has_tag("terminal"); }
};

/// Exact tables of a finite MDP. transition is indexed [s][a][s'] in row-major order.
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transition;
  std::vector<double> reward;  // [s][a]
  std::vector<bool> terminal;
  std::vector<double> start;

  double p(int s, int a, int next) const {
    return transition[(static_cast<size_t>(s) * n_actions + a) * n_states + next];
  }
  double& p(int s, int a, int next) {
    return transition[(static_cast<size_t>(s) * n_actions + a) * n_states + next];
  }
  double r(int s, int a) const { return reward[static_cast<size_t>(s) * n_actions + a]; }

  /// Throws std::invalid_argument when a row or the start vector is not a distribution.
  void validate(double tol = 1e-9) const;
};

/// Seedable single-owner environment. Actions are clipped into the box before use.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvSpec spec() const = 0;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;

  /// Only the discrete chain has an exact tabular form; everything else throws.
  virtual TabularMdp as_tabular() const;

  std::vector<double> reset(uint64_t seed);
  StepResult step(std::span<const double> action);

  int steps() const { return steps_; }
  bool done() const { return done_; }

 protected:
  virtual std::vector<double> reset_impl(std::mt19937_64& rng) = 0;
  virtual StepResult step_impl(std::span<const double> action, std::mt19937_64& rng) = 0;

 private:
  std::mt19937_64 rng_;
  int steps_ = 0;
  bool done_ = true;
  bool was_reset_ = false;
};

/// x in [0, 1], action dx in [-0.05, 0.05], reward 1 on every step that ends with x >= 0.9.
class Corridor1D final : public Environment {
 public:
  static constexpr double kGoal = 0.9;
  static constexpr double kMaxMove = 0.05;

  EnvSpec spec() const override;
  std::string name() const override { return "corridor1d"; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<Corridor1D>(*this); }

  double position() const { return x_; }
  void set_position(double x) { x_ = x; }

 protected:
  std::vector<double> reset_impl(std::mt19937_64& rng) override;
  StepResult step_impl(std::span<const double> action, std::mt19937_64& rng) override;

 private:
  double x_ = 0.0;
};

/// Damped point mass in [-1, 1]^2. Observation (x, y, vx, vy), action is a force in [-1, 1]^2.
///
/// Walls stop the mass. A collision band x in [kBandLow, kBandHigh] ends the episode when it
/// is crossed faster than kCrashSpeed along x. Reward 1 per step inside the goal strip
/// x >= kGoalX, |y| <= kGoalHalfWidth. The start position is jittered by the reset seed.
class PointMass2D final : public Environment {
 public:
  static constexpr double kDamping = 0.85;
  static constexpr double kForceGain = 0.03;
  static constexpr double kMaxSpeed = kForceGain / (1.0 - kDamping);
  static constexpr double kBandLow = 0.0;
  static constexpr double kBandHigh = 0.3;
  static constexpr double kCrashSpeed = 0.08;
  static constexpr double kGoalX = 0.45;
  static constexpr double kGoalHalfWidth = 0.4;
  static constexpr double kStartX = -0.5;
  static constexpr double kStartJitter = 0.05;

  EnvSpec spec() const override;
  std::string name() const override { return "pointmass2d"; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<PointMass2D>(*this); }

 protected:
  std::vector<double> reset_impl(std::mt19937_64& rng) override;
  StepResult step_impl(std::span<const double> action, std::mt19937_64& rng) override;

 private:
  std::vector<double> observe() const { return {pos_[0], pos_[1], vel_[0], vel_[1]}; }

  double pos_[2] = {0.0, 0.0};
  double vel_[2] = {0.0, 0.0};
};

/// 1-D track with three locked gates at 0.25, 0.5, 0.75. A locked gate blocks movement past
/// it; standing on the gate and pushing with the required sign (+, -, +) and magnitude at
/// least kUnlockMagnitude opens it. Reward 1 per step once x >= 0.9.
/// Observation (x, gates_passed / 3, at_gate).
class LockSequence final : public Environment {
 public:
  static constexpr double kGates[3] = {0.25, 0.5, 0.75};
  static constexpr int kSigns[3] = {+1, -1, +1};
  static constexpr double kStepScale = 0.05;
  static constexpr double kUnlockMagnitude = 0.5;
  static constexpr double kGoal = 0.9;

  EnvSpec spec() const override;
  std::string name() const override { return "locksequence"; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<LockSequence>(*this); }

  int gates_passed() const { return passed_; }

 protected:
  std::vector<double> reset_impl(std::mt19937_64& rng) override;
  StepResult step_impl(std::span<const double> action, std::mt19937_64& rng) override;

 private:
  bool at_gate() const;
  std::vector<double> observe() const;

  double x_ = 0.0;
  int passed_ = 0;
};

/// Discrete chain with one-hot observations and a scalar action; a >= 0 selects lever 1.
///
/// Every non-terminal state moves right with probability 1 - slip and stays otherwise; the
/// last state is absorbing and terminal. Levers do not change the dynamics: pulling the
/// lever that matches the state parity (1 on even states, 0 on odd ones) pays reward 1.
class ChainMdp final : public Environment {
 public:
  explicit ChainMdp(int n_states, double slip = 0.0);

  EnvSpec spec() const override;
  std::string name() const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<ChainMdp>(*this); }
  TabularMdp as_tabular() const override;

  int state() const { return state_; }
  static int lever(double action) { return action >= 0.0 ? 1 : 0; }
  static int rewarded_lever(int state) { return state % 2 == 0 ? 1 : 0; }

 protected:
  std::vector<double> reset_impl(std::mt19937_64& rng) override;
  StepResult step_impl(std::span<const double> action, std::mt19937_64& rng) override;

 private:
  std::vector<double> one_hot(int s) const;

  int n_;
  double slip_;
  int state_ = 0;
};

/// Builds an environment from its CLI name: corridor1d, pointmass2d, locksequence,
/// chainmdp:N or chainmdp:N:SLIP. Throws ConfigError for unknown names.
std::unique_ptr<Environment> make_env(std::string_view name);

}  // namespace maxent::envs
