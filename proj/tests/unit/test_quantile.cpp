#include <doctest.h>

#include "../oracles.hpp"
#include "qppo/quantile.hpp"
#include "qppo/rng.hpp"

using namespace qppo;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::vector<double> std_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_CASE("critic atoms from simple networks") {
  Mlp zero = zero_mlp<double>({2, 4, 5});
  const QuantileAtoms a = predict_atoms(zero, Eigen::VectorXd(Eigen::Vector2d(0.3, 1.0)));
  CHECK(a.size() == 5);
  CHECK(a.atoms.isZero(0.0));
  CHECK(a.mean() == 0.0);

  zero.biases.back().setConstant(1.25);
  CHECK((predict_atoms(zero, Eigen::VectorXd(Eigen::Vector2d(-4, 2))).atoms.array() == 1.25).all());

  const QuantileAtoms q{Eigen::VectorXd::Zero(4)};
  CHECK(q.taus().isApprox(vec({0.125, 0.375, 0.625, 0.875})));
}

TEST_CASE("quantile-huber loss examples") {
  CHECK(quantile_huber_loss(vec({0.7}), vec({0.7}), 1.0).loss == 0.0);

  const auto single = quantile_huber_loss(vec({0.0}), vec({1.0}), 1.0);
  CHECK(single.loss == doctest::Approx(0.5 * 0.5));

  // K=5: the top atom sits at tau=0.9; residual u=1 contributes 0.9 * 0.5 / K
  Eigen::VectorXd atoms = Eigen::VectorXd::Constant(5, 1.0);
  atoms[4] = 0.0;
  const auto top = quantile_huber_loss(atoms, vec({1.0}), 1.0);
  CHECK(top.loss == doctest::Approx(0.45 / 5));

  // linear branch beyond kappa
  const auto far = quantile_huber_loss(vec({0.0}), vec({3.0}), 1.0);
  CHECK(far.loss == doctest::Approx(0.5 * (3.0 - 0.5)));
}

TEST_CASE("quantile-huber gradient matches central differences") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(12));
    const int m = 1 + static_cast<int>(rng.below(9));
    Eigen::VectorXd atoms(k), targets(m);
    for (auto& x : atoms) x = rng.normal(0, 2);
    for (auto& x : targets) x = rng.normal(0, 2);
    const double kappa = rng.uniform(0.3, 2.0);
    const auto res = quantile_huber_loss(atoms, targets, kappa);
    const Eigen::VectorXd fd = oracle::finite_difference(
        [&](const Eigen::VectorXd& a) { return quantile_huber_loss(a, targets, kappa).loss; }, atoms, 1e-6);
    CHECK(oracle::max_relative_error(res.grad, fd) < 1e-4);
  }
}

TEST_CASE("moment examples") {
  const auto two = moments_from_atoms(vec({-1, 1}));
  CHECK(two.mean == 0.0);
  CHECK(two.variance == 1.0);
  CHECK(two.skewness == 0.0);
  CHECK(two.kurtosis == 1.0);

  const auto s = moments_from_atoms(vec({0, 0, 3}));
  CHECK(s.mean == doctest::Approx(1.0));
  CHECK(s.variance == doctest::Approx(2.0));
  CHECK(s.skewness == doctest::Approx(2.0 / std::pow(2.0, 1.5)).epsilon(1e-12));
  CHECK(s.kurtosis == doctest::Approx(1.5).epsilon(1e-12));

  const auto flat = moments_from_atoms(vec({4, 4, 4}));
  CHECK(flat.skewness == 0.0);
  CHECK(flat.kurtosis == 1.0);
  const auto one = moments_from_atoms(vec({2.0}));
  CHECK(one.kurtosis == 1.0);
  CHECK_THROWS(moments_from_atoms(Eigen::VectorXd()));
}

TEST_CASE("symmetric atoms have zero skew") {
  Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    const int half = 1 + static_cast<int>(rng.below(20));
    const double c = rng.normal(0, 3);
    Eigen::VectorXd a(2 * half);
    for (int i = 0; i < half; ++i) {
      const double d = std::abs(rng.normal(0, 2)) + 0.01;
      a[2 * i] = c + d;
      a[2 * i + 1] = c - d;
    }
    CHECK(std::abs(moments_from_atoms(a).skewness) < 1e-10);
  }
}

TEST_CASE("moments and cvar agree with the long-double oracle") {
  Rng rng(13);
  for (int t = 0; t < 200; ++t) {
    const int k = 2 + static_cast<int>(rng.below(60));
    Eigen::VectorXd a(k);
    for (auto& x : a) x = rng.normal(rng.normal(), 0.1 + rng.uniform() * 3) + (rng.uniform() < 0.2 ? 5 : 0);
    const auto got = moments_from_atoms(a);
    const auto want = oracle::moments(std_vec(a));
    CHECK(std::abs(got.mean - double(want.mean)) < 1e-10);
    CHECK(std::abs(got.skewness - double(want.skew)) < 1e-10);
    CHECK(std::abs(got.kurtosis - double(want.kurt)) < 1e-10);
    CHECK(got.kurtosis >= 1 + got.skewness * got.skewness - 1e-12);
    const double alpha = rng.uniform(0.01, 1.0);
    CHECK(std::abs(cvar_from_atoms(a, alpha) - double(oracle::cvar(std_vec(a), alpha))) < 1e-10);
  }
}

TEST_CASE("cvar examples") {
  const Eigen::VectorXd a = vec({7, 1, 3, 9, 2});
  CHECK(cvar_from_atoms(a, 1.0) == doctest::Approx(a.mean()));
  Eigen::VectorXd ten(10);
  for (int i = 0; i < 10; ++i) ten[i] = 10 - i;
  CHECK(cvar_from_atoms(ten, 0.2) == 1.5);
  CHECK(cvar_from_atoms(ten, 0.01) == 1.0);  // at least one atom

  // 51 standard-normal midpoint quantiles, alpha 0.1: mean of the 5 smallest
  // against a Monte-Carlo estimate of E[X | X <= q_0.1] = -phi(q)/0.1 = -1.7550
  Eigen::VectorXd nq(51);
  const Eigen::VectorXd taus = QuantileAtoms{Eigen::VectorXd::Zero(51)}.taus();
  for (int j = 0; j < 51; ++j) {
    double lo = -10, hi = 10;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (oracle::normal_cdf(mid, 0, 1) < taus[j] ? lo : hi) = mid;
    }
    nq[j] = 0.5 * (lo + hi);
  }
  Rng rng(99);
  const double q10 = -1.2815515655446004;
  double sum = 0;
  long count = 0;
  for (long i = 0; i < 10000000; ++i) {
    const double z = rng.normal();
    if (z <= q10) {
      sum += z;
      ++count;
    }
  }
  CHECK(std::abs(cvar_from_atoms(nq, 0.1) - sum / count) < 0.05);
}
