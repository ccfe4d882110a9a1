#include <doctest.h>

#include <fstream>
#include <sstream>

#include "../oracles.hpp"
#include "qppo/envs.hpp"
#include "qppo/errors.hpp"

using namespace qppo;

namespace {

PolicyFn constant_policy(double a) {
  return [a](const Eigen::VectorXd&, Rng&, bool) { return PolicyOutput{Eigen::VectorXd::Constant(1, a), 0.0}; };
}

PolicyFn noisy_policy() {
  return [](const Eigen::VectorXd& obs, Rng& rng, bool) {
    return PolicyOutput{Eigen::VectorXd::Constant(1, 0.3 * obs[0] + rng.normal()), 0.0};
  };
}

EnvSpec quiet_pointmass() {
  EnvSpec s = make_env_spec("pointmass");
  s.pointmass.sigma_n = 0.0;
  return s;
}

EnvState pointmass_at(double x, double v) { return {Eigen::Vector2d(x, v), 0, false}; }

double mixture_cdf(const BanditParams& p, double x) {
  return p.weight * oracle::normal_cdf(x, p.mu1, p.sd1) + (1 - p.weight) * oracle::normal_cdf(x, p.mu2, p.sd2);
}

}  // namespace

TEST_CASE("env specs") {
  CHECK(make_env_spec("bandit").obs_dim == 1);
  CHECK(make_env_spec("pointmass").obs_dim == 2);
  CHECK(make_env_spec("pendulum").obs_dim == 3);
  CHECK(make_env_spec("pendulum").act_dim == 1);
  CHECK_THROWS_AS(make_env_spec("cartpole"), ConfigError);
  EnvSpec bad = make_env_spec("bandit");
  bad.bandit.weight = 1.5;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("reset examples") {
  Rng rng(1);
  const EnvState b = reset(make_env_spec("bandit"), rng);
  CHECK(b.values.size() == 1);
  CHECK(b.values[0] == 0.0);
  CHECK(b.t == 0);

  Rng r1(5), r2(5);
  const EnvSpec pm = make_env_spec("pointmass");
  CHECK(reset(pm, r1).values == reset(pm, r2).values);

  const EnvSpec pend = make_env_spec("pendulum");
  int differing = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng a(s), c(s + 1);
    if (reset(pend, a).values != reset(pend, c).values) ++differing;
  }
  CHECK(differing == 20);
}

TEST_CASE("bandit step ends the episode") {
  const EnvSpec spec = make_env_spec("bandit");
  Rng rng(2);
  const StepOutcome o = step(spec, reset(spec, rng), Eigen::VectorXd::Constant(1, 0.4), rng);
  CHECK(o.done);
  CHECK(std::isfinite(o.reward));
  CHECK_THROWS_AS(step(spec, o.next_state, Eigen::VectorXd::Zero(1), rng), UsageError);
}

TEST_CASE("pointmass hand arithmetic") {
  const EnvSpec spec = quiet_pointmass();
  Rng rng(0);
  const StepOutcome eq = step(spec, pointmass_at(0, 0), Eigen::VectorXd::Zero(1), rng);
  CHECK(eq.next_state.values == Eigen::Vector2d(0, 0));
  CHECK(eq.reward == 0.0);

  const StepOutcome one = step(spec, pointmass_at(1, 0), Eigen::VectorXd::Zero(1), rng);
  CHECK(one.next_state.values[0] == 1.0);
  CHECK(one.next_state.values[1] == 0.0);
  CHECK(one.reward == -1.0);

  // action is clamped to [-1, 1] before it acts and before it is charged
  const StepOutcome pushed = step(spec, pointmass_at(0, 0), Eigen::VectorXd::Constant(1, 5.0), rng);
  CHECK(pushed.next_state.values[1] == doctest::Approx(spec.pointmass.dt * spec.pointmass.force));
  CHECK(pushed.reward == doctest::Approx(-spec.pointmass.action_cost));
}

TEST_CASE("pendulum wraps angles and clips speed") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(3 * M_PI / 2) == doctest::Approx(-M_PI / 2));
  CHECK(std::abs(wrap_angle(2 * M_PI)) < 1e-15);

  EnvSpec spec = make_env_spec("pendulum");
  spec.pendulum.torque_noise = 0;
  Rng rng(0);
  // hanging straight down (theta = pi) at rest is an equilibrium
  EnvState down{Eigen::Vector3d(-1, 0, 0), 0, false};
  const StepOutcome o = step(spec, down, Eigen::VectorXd::Zero(1), rng);
  CHECK(std::abs(o.next_state.values[2]) < 1e-12);
  CHECK(o.reward == doctest::Approx(-M_PI * M_PI));

  EnvState fast{Eigen::Vector3d(1, 0, 7.99), 0, false};
  const StepOutcome f = step(spec, fast, Eigen::VectorXd::Constant(1, 1.0), rng);
  CHECK(f.next_state.values[2] == spec.pendulum.max_speed);
}

TEST_CASE("rollout examples") {
  Rng rng(3);
  CHECK(rollout(make_env_spec("bandit"), noisy_policy(), rng, false).steps.size() == 1);

  for (const char* name : {"bandit", "pointmass", "pendulum"}) {
    const EnvSpec spec = make_env_spec(name);
    Rng a(77), b(77);
    const Trajectory ta = rollout(spec, noisy_policy(), a, false);
    const Trajectory tb = rollout(spec, noisy_policy(), b, false);
    REQUIRE(ta.steps.size() == tb.steps.size());
    CHECK(ta.steps.size() == static_cast<std::size_t>(spec.horizon));
    for (std::size_t i = 0; i < ta.steps.size(); ++i) {
      CHECK(ta.steps[i].state == tb.steps[i].state);
      CHECK(ta.steps[i].reward == tb.steps[i].reward);
    }
    CHECK(ta.episodic_return == tb.episodic_return);
  }

  const EnvSpec pm = quiet_pointmass();
  CHECK(pm.horizon == 100);
  const Trajectory frozen = rollout_from(pm, pointmass_at(1, 0), constant_policy(0.0), rng, true);
  CHECK(frozen.episodic_return == -100.0);
}

TEST_CASE("heavy-tail reward noise has the mixture variance") {
  EnvSpec spec = quiet_pointmass();
  spec.pointmass.heavy_tail_reward = true;
  Rng rng(12);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double r = step(spec, pointmass_at(0, 0), Eigen::VectorXd::Zero(1), rng).reward;
    s += r;
    s2 += r * r;
  }
  const auto& p = spec.pointmass;
  const double expected = p.tail_p * p.tail_sd * p.tail_sd + (1 - p.tail_p) * p.core_sd * p.core_sd;
  CHECK(std::abs(s / n) < 0.005);
  CHECK(s2 / n == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("bandit rewards follow the mixture law (KS)") {
  const BanditParams p;
  Rng rng(21);
  std::vector<double> draws(20000);
  for (auto& d : draws) d = sample_bandit_reward(p, rng);
  // 1.63 / sqrt(n) is the 1% critical value
  CHECK(oracle::ks_statistic(draws, [&](double x) { return mixture_cdf(p, x); }) < 1.63 / std::sqrt(20000.0));
}

TEST_CASE("bandit quantile oracle") {
  SUBCASE("degenerate bandit gives constant quantiles") {
    BanditParams p;
    p.mu1 = p.mu2 = 2.5;
    p.sd1 = p.sd2 = 0.0;
    Rng rng(1);
    const Eigen::VectorXd q = bandit_true_quantiles(p, 11, 100000, rng);
    CHECK((q.array() == 2.5).all());
  }
  SUBCASE("symmetric mixture gives antisymmetric quantiles") {
    BanditParams p;
    p.weight = 0.5;
    p.mu1 = -2;
    p.mu2 = 2;
    Rng rng(2);
    const Eigen::VectorXd q = bandit_true_quantiles(p, 21, 1000000, rng);
    for (int j = 0; j < 21; ++j) CHECK(std::abs(q[j] + q[20 - j]) < 0.03);
  }
  SUBCASE("default bandit matches the stored reference") {
    std::ifstream in(QPPO_TEST_DATA "/bandit_quantiles_k51.txt");
    REQUIRE(in.good());
    std::vector<double> ref_mc, ref_exact;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      double tau, mc, exact;
      ls >> tau >> mc >> exact;
      ref_mc.push_back(mc);
      ref_exact.push_back(exact);
    }
    REQUIRE(ref_mc.size() == 51);
    Rng rng(3);
    const Eigen::VectorXd q = bandit_true_quantiles(BanditParams{}, 51, 2000000, rng);
    for (int j = 0; j < 51; ++j) {
      CHECK(std::abs(ref_mc[j] - ref_exact[j]) < 0.01);
      CHECK(std::abs(q[j] - ref_exact[j]) < 0.02);
    }
  }
}
