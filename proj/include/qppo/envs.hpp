#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "qppo/rng.hpp"

namespace qppo {

enum class EnvKind { Bandit, PointMass, Pendulum };

/// One-step bandit; reward ~ w*N(mu1, sd1) + (1-w)*N(mu2, sd2).
struct BanditParams {
  double weight = 0.7;
  double mu1 = 0.0;
  double sd1 = 1.0;
  double mu2 = 4.0;
  double sd2 = 1.0;
};

/// x' = x + dt*v, v' = v + dt*force*a + eta, reward -(x^2 + action_cost*a^2) + zeta.
/// zeta is the optional heavy-tailed mixture (1-tail_p)*N(0, core_sd) + tail_p*N(0, tail_sd).
struct PointMassParams {
  double dt = 0.05;
  double force = 3.0;
  double sigma_n = 0.05;
  double action_cost = 0.1;
  double init_range = 1.0;
  bool heavy_tail_reward = false;
  double tail_p = 0.05;
  double core_sd = 0.05;
  double tail_sd = 1.0;
};

/// Swing-up with theta = 0 upright; observation (cos, sin, omega).
struct PendulumParams {
  double g = 10.0;
  double length = 1.0;
  double mass = 1.0;
  double dt = 0.05;
  double torque_scale = 2.0;
  double torque_noise = 0.05;
  double max_speed = 8.0;
};

struct EnvSpec {
  EnvKind kind = EnvKind::PointMass;
  std::string name;
  int obs_dim = 0;
  int act_dim = 0;
  int horizon = 0;
  BanditParams bandit;
  PointMassParams pointmass;
  PendulumParams pendulum;
};

/// Defaults for "bandit", "pointmass" or "pendulum"; anything else is a ConfigError.
EnvSpec make_env_spec(std::string_view name);
void validate(const EnvSpec& spec);

struct EnvState {
  Eigen::VectorXd values;
  int t = 0;
  bool done = false;
};

struct StepOutcome {
  EnvState next_state;
  double reward = 0.0;
  bool done = false;
};

EnvState reset(const EnvSpec& spec, Rng& rng);
/// Actions are clamped to [-1, 1] before the dynamics.
StepOutcome step(const EnvSpec& spec, const EnvState& state, const Eigen::VectorXd& action, Rng& rng);

struct PolicyOutput {
  Eigen::VectorXd action;
  double log_prob = 0.0;
};
using PolicyFn = std::function<PolicyOutput(const Eigen::VectorXd& obs, Rng& rng, bool deterministic)>;

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;  // as emitted by the policy, before clamping
  double reward = 0.0;
  bool done = false;
  double log_prob = 0.0;
};

struct Trajectory {
  std::vector<Transition> steps;
  double episodic_return = 0.0;  // undiscounted
};

/// Runs one episode from reset(). Throws NumericError if the policy emits a
/// non-finite action.
Trajectory rollout(const EnvSpec& spec, const PolicyFn& policy, Rng& rng, bool deterministic);
Trajectory rollout_from(const EnvSpec& spec, EnvState start, const PolicyFn& policy, Rng& rng, bool deterministic);

double sample_bandit_reward(const BanditParams& params, Rng& rng);

/// Midpoint levels (2j-1)/(2k), j = 1..k.
Eigen::VectorXd midpoint_taus(int k);

/// Empirical quantiles of the bandit reward law at the midpoint levels,
/// from mc_samples draws (at least 1e5). Sorted ascending.
Eigen::VectorXd bandit_true_quantiles(const BanditParams& params, int k, long mc_samples, Rng& rng);

double wrap_angle(double theta);

}  // namespace qppo
