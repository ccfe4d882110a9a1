#include "qppo/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qppo/errors.hpp"

namespace qppo {

EnvSpec make_env_spec(std::string_view name) {
  EnvSpec spec;
  spec.name = std::string(name);
  if (name == "bandit") {
    spec.kind = EnvKind::Bandit;
    spec.obs_dim = 1;
    spec.act_dim = 1;
    spec.horizon = 1;
  } else if (name == "pointmass") {
    spec.kind = EnvKind::PointMass;
    spec.obs_dim = 2;
    spec.act_dim = 1;
    spec.horizon = 100;
  } else if (name == "pendulum") {
    spec.kind = EnvKind::Pendulum;
    spec.obs_dim = 3;
    spec.act_dim = 1;
    spec.horizon = 200;
  } else {
    throw ConfigError("unknown environment '" + std::string(name) + "' (expected bandit, pointmass or pendulum)");
  }
  return spec;
}

void validate(const EnvSpec& spec) {
  if (spec.obs_dim <= 0 || spec.act_dim <= 0 || spec.horizon <= 0)
    throw ConfigError("env " + spec.name + ": obs_dim, act_dim and horizon must be positive");
  if (spec.kind == EnvKind::Bandit && spec.horizon != 1) throw ConfigError("env bandit: horizon must be 1");
  const auto& b = spec.bandit;
  if (b.weight < 0 || b.weight > 1 || b.sd1 < 0 || b.sd2 < 0) throw ConfigError("env bandit: invalid mixture");
  const auto& p = spec.pointmass;
  if (p.dt <= 0 || p.sigma_n < 0 || p.tail_p < 0 || p.tail_p > 1 || p.core_sd < 0 || p.tail_sd < 0 || p.init_range < 0)
    throw ConfigError("env pointmass: invalid noise or time-step parameters");
  const auto& q = spec.pendulum;
  if (q.dt <= 0 || q.length <= 0 || q.mass <= 0 || q.torque_noise < 0 || q.max_speed <= 0)
    throw ConfigError("env pendulum: invalid physical parameters");
}

double wrap_angle(double theta) {
  return std::remainder(theta, 2.0 * std::numbers::pi);
}

double sample_bandit_reward(const BanditParams& params, Rng& rng) {
  const bool first = rng.uniform() < params.weight;
  return first ? rng.normal(params.mu1, params.sd1) : rng.normal(params.mu2, params.sd2);
}

EnvState reset(const EnvSpec& spec, Rng& rng) {
  EnvState s;
  switch (spec.kind) {
    case EnvKind::Bandit:
      s.values = Eigen::VectorXd::Zero(1);
      break;
    case EnvKind::PointMass:
      s.values = Eigen::Vector2d(rng.uniform(-spec.pointmass.init_range, spec.pointmass.init_range), 0.0);
      break;
    case EnvKind::Pendulum: {
      const double theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
      s.values = Eigen::Vector3d(std::cos(theta), std::sin(theta), 0.0);
      break;
    }
  }
  return s;
}

StepOutcome step(const EnvSpec& spec, const EnvState& state, const Eigen::VectorXd& action, Rng& rng) {
  if (state.done) throw UsageError("step: episode already finished");
  if (action.size() != spec.act_dim) throw UsageError("step: action dimension mismatch for env " + spec.name);
  const double a = std::clamp(action[0], -1.0, 1.0);

  StepOutcome out;
  out.next_state.t = state.t + 1;
  switch (spec.kind) {
    case EnvKind::Bandit:
      out.next_state.values = state.values;
      out.reward = sample_bandit_reward(spec.bandit, rng);
      break;
    case EnvKind::PointMass: {
      const auto& p = spec.pointmass;
      const double x = state.values[0];
      const double v = state.values[1];
      const double eta = p.sigma_n > 0 ? rng.normal(0.0, p.sigma_n) : 0.0;
      out.next_state.values = Eigen::Vector2d(x + p.dt * v, v + p.dt * p.force * a + eta);
      out.reward = -(x * x + p.action_cost * a * a);
      if (p.heavy_tail_reward) {
        const bool tail = rng.uniform() < p.tail_p;
        out.reward += rng.normal(0.0, tail ? p.tail_sd : p.core_sd);
      }
      break;
    }
    case EnvKind::Pendulum: {
      const auto& p = spec.pendulum;
      const double theta = std::atan2(state.values[1], state.values[0]);
      const double omega = state.values[2];
      const double noise = p.torque_noise > 0 ? rng.normal(0.0, p.torque_noise) : 0.0;
      const double torque = p.torque_scale * a + noise;
      const double wrapped = wrap_angle(theta);
      out.reward = -(wrapped * wrapped + 0.1 * omega * omega + 0.001 * a * a);
      const double accel =
          3.0 * p.g / (2.0 * p.length) * std::sin(theta) + 3.0 / (p.mass * p.length * p.length) * torque;
      const double next_omega = std::clamp(omega + accel * p.dt, -p.max_speed, p.max_speed);
      const double next_theta = theta + next_omega * p.dt;
      out.next_state.values = Eigen::Vector3d(std::cos(next_theta), std::sin(next_theta), next_omega);
      break;
    }
  }
  out.done = out.next_state.t >= spec.horizon;
  out.next_state.done = out.done;
  return out;
}

Trajectory rollout_from(const EnvSpec& spec, EnvState start, const PolicyFn& policy, Rng& rng, bool deterministic) {
  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(spec.horizon));
  EnvState state = std::move(start);
  while (!state.done) {
    PolicyOutput po = policy(state.values, rng, deterministic);
    if (!po.action.allFinite())
      throw NumericError("rollout: policy produced a non-finite action at t=" + std::to_string(state.t));
    StepOutcome so = step(spec, state, po.action, rng);
    traj.episodic_return += so.reward;
    traj.steps.push_back({state.values, std::move(po.action), so.reward, so.done, po.log_prob});
    state = std::move(so.next_state);
  }
  return traj;
}

Trajectory rollout(const EnvSpec& spec, const PolicyFn& policy, Rng& rng, bool deterministic) {
  return rollout_from(spec, reset(spec, rng), policy, rng, deterministic);
}

Eigen::VectorXd midpoint_taus(int k) {
  if (k < 1) throw ConfigError("midpoint_taus: k must be >= 1");
  Eigen::VectorXd taus(k);
  for (int j = 0; j < k; ++j) taus[j] = (2.0 * j + 1.0) / (2.0 * k);
  return taus;
}

Eigen::VectorXd bandit_true_quantiles(const BanditParams& params, int k, long mc_samples, Rng& rng) {
  if (k < 1) throw ConfigError("bandit_true_quantiles: k must be >= 1");
  if (mc_samples < 100000) throw ConfigError("bandit_true_quantiles: need at least 1e5 samples");
  std::vector<double> draws(static_cast<std::size_t>(mc_samples));
  for (auto& d : draws) d = sample_bandit_reward(params, rng);
  std::sort(draws.begin(), draws.end());
  const Eigen::VectorXd taus = midpoint_taus(k);
  Eigen::VectorXd q(k);
  for (int j = 0; j < k; ++j) {
    const auto idx = static_cast<std::size_t>(std::floor(taus[j] * static_cast<double>(mc_samples)));
    q[j] = draws[std::min(idx, draws.size() - 1)];
  }
  return q;
}

}  // namespace qppo
