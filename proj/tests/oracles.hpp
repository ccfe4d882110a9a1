#pragma once

// Reference implementations used only by tests. They follow the textbook
// definitions directly and share no code with the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

struct Moments {
  long double mean, var, skew, kurt;
};

// Population moments in long double, two-pass, with the same degenerate rule
// as the library (variance below 1e-12 reads as skew 0, kurt 1).
inline Moments moments(const std::vector<double>& x) {
  const long double n = x.size();
  long double mean = 0;
  for (double v : x) mean += v;
  mean /= n;
  long double m2 = 0, m3 = 0, m4 = 0;
  for (double v : x) {
    const long double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 < 1e-12L) return {mean, m2, 0, 1};
  return {mean, m2, m3 / std::pow(m2, 1.5L), m4 / (m2 * m2)};
}

// Mean of the ceil-free m = max(1, floor(alpha * K)) smallest values.
inline long double cvar(std::vector<double> x, double alpha) {
  std::sort(x.begin(), x.end());
  const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(alpha * x.size())));
  long double s = 0;
  for (std::size_t i = 0; i < m; ++i) s += x[i];
  return s / m;
}

// A_t = sum_l (gamma lambda)^l delta_{t+l}, truncated at the first terminal.
inline std::vector<double> gae_direct(const std::vector<double>& r, const std::vector<double>& v,
                                      const std::vector<int>& done, double bootstrap, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : bootstrap;
    delta[t] = r[t] + gamma * (done[t] ? 0.0 : next) - v[t];
  }
  std::vector<double> adv(n);
  for (std::size_t t = 0; t < n; ++t) {
    long double sum = 0, w = 1;
    for (std::size_t l = t; l < n; ++l) {
      sum += w * delta[l];
      if (done[l]) break;
      w *= gamma * lambda;
    }
    adv[t] = static_cast<double>(sum);
  }
  return adv;
}

// Central differences of a scalar function of a flat parameter vector.
inline Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd p = x, m = x;
    p[i] += h;
    m[i] -= h;
    g[i] = (f(p) - f(m)) / (2 * h);
  }
  return g;
}

// Componentwise relative error with an absolute floor for near-zero entries.
inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-6) {
  double worst = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline double normal_cdf(double x, double mu, double sd) { return 0.5 * std::erfc(-(x - mu) / (sd * std::sqrt(2.0))); }

// Kolmogorov-Smirnov statistic of a sample against a CDF.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = x.size();
  double d = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double c = cdf(x[i]);
    d = std::max({d, std::abs(c - i / n), std::abs((i + 1) / n - c)});
  }
  return d;
}

}  // namespace oracle
