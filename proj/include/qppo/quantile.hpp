#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qppo/errors.hpp"
#include "qppo/mlp.hpp"

namespace qppo {

/// K critic outputs read as equally weighted atoms at midpoint levels
/// tau_j = (2j-1)/(2K). Atoms may cross; nothing here assumes sorted order.
template <typename Scalar>
struct QuantileAtomsT {
  VectorX<Scalar> atoms;

  Eigen::Index size() const { return atoms.size(); }
  Scalar mean() const { return atoms.mean(); }
  VectorX<Scalar> taus() const {
    const auto k = atoms.size();
    VectorX<Scalar> t(k);
    for (Eigen::Index j = 0; j < k; ++j) t[j] = Scalar(2 * j + 1) / Scalar(2 * k);
    return t;
  }
};
using QuantileAtoms = QuantileAtomsT<double>;

/// Mean, population variance, skewness, raw kurtosis (normal = 3) and the
/// lower-tail CVaR at level alpha (NaN until requested).
template <typename Scalar>
struct MomentStatsT {
  Scalar mean = 0;
  Scalar variance = 0;
  Scalar skewness = 0;
  Scalar kurtosis = 1;
  Scalar cvar = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar alpha = std::numeric_limits<Scalar>::quiet_NaN();
};
using MomentStats = MomentStatsT<double>;

/// Below this variance the standardized moments are reported as skew 0, kurt 1.
inline constexpr double kDegenerateVariance = 1e-12;

template <typename Scalar>
QuantileAtomsT<Scalar> predict_atoms(const MlpParams<Scalar>& critic, const VectorX<Scalar>& state) {
  QuantileAtomsT<Scalar> q{mlp_predict(critic, state)};
  if (!q.atoms.allFinite()) {
    std::string s;
    for (Eigen::Index i = 0; i < state.size(); ++i) s += (i ? " " : "") + std::to_string(state[i]);
    throw NumericError("predict_atoms: non-finite critic output at state [" + s + "]");
  }
  return q;
}

template <typename Derived>
MomentStatsT<typename Derived::Scalar> moments_from_atoms(const Eigen::MatrixBase<Derived>& atoms) {
  using Scalar = typename Derived::Scalar;
  if (atoms.size() == 0) throw UsageError("moments_from_atoms: no atoms");
  MomentStatsT<Scalar> s;
  s.mean = atoms.mean();
  const auto centered = (atoms.array() - s.mean).eval();
  const auto sq = centered.square().eval();
  s.variance = sq.mean();
  if (s.variance < Scalar(kDegenerateVariance)) {
    s.skewness = 0;
    s.kurtosis = 1;
    return s;
  }
  const Scalar sd = std::sqrt(s.variance);
  s.skewness = (sq * centered).mean() / (s.variance * sd);
  s.kurtosis = sq.square().mean() / (s.variance * s.variance);
  return s;
}

template <typename Scalar>
MomentStatsT<Scalar> moments_from_atoms(const QuantileAtomsT<Scalar>& q) {
  return moments_from_atoms(q.atoms);
}

/// Mean of the max(1, floor(alpha*K)) smallest atoms.
template <typename Derived>
typename Derived::Scalar cvar_from_atoms(const Eigen::MatrixBase<Derived>& atoms, double alpha) {
  using Scalar = typename Derived::Scalar;
  if (!(alpha > 0.0 && alpha <= 1.0)) throw UsageError("cvar_from_atoms: alpha must lie in (0, 1]");
  if (atoms.size() == 0) throw UsageError("cvar_from_atoms: no atoms");
  const VectorX<Scalar> copy = atoms;
  std::vector<Scalar> sorted(copy.data(), copy.data() + copy.size());
  const auto k = static_cast<long>(sorted.size());
  const long m = std::max(1L, static_cast<long>(std::floor(alpha * static_cast<double>(k))));
  std::partial_sort(sorted.begin(), sorted.begin() + m, sorted.end());
  Scalar acc = 0;
  for (long i = 0; i < m; ++i) acc += sorted[static_cast<std::size_t>(i)];
  return acc / Scalar(m);
}

template <typename Scalar>
Scalar cvar_from_atoms(const QuantileAtomsT<Scalar>& q, double alpha) {
  return cvar_from_atoms(q.atoms, alpha);
}

template <typename Derived>
MomentStatsT<typename Derived::Scalar> atom_stats(const Eigen::MatrixBase<Derived>& atoms, double alpha) {
  auto s = moments_from_atoms(atoms);
  s.cvar = cvar_from_atoms(atoms, alpha);
  s.alpha = alpha;
  return s;
}

template <typename Scalar>
struct QuantileLoss {
  Scalar loss = 0;
  VectorX<Scalar> grad;  // d loss / d atoms
};

/// Quantile-Huber loss (1/(K*M)) sum_{j,m} |tau_j - 1{u<0}| * Huber_kappa(u)/kappa,
/// u = target_m - atom_j, with its exact gradient with respect to the atoms.
template <typename DerivedA, typename DerivedT>
QuantileLoss<typename DerivedA::Scalar> quantile_huber_loss(const Eigen::MatrixBase<DerivedA>& atoms,
                                                            const Eigen::MatrixBase<DerivedT>& targets,
                                                            double kappa) {
  using Scalar = typename DerivedA::Scalar;
  if (!(kappa > 0)) throw UsageError("quantile_huber_loss: kappa must be positive");
  if (targets.size() == 0) throw UsageError("quantile_huber_loss: empty targets");
  if (atoms.size() == 0) throw UsageError("quantile_huber_loss: no atoms");
  const Eigen::Index k = atoms.size();
  const Eigen::Index m = targets.size();
  const Scalar norm = Scalar(1) / (Scalar(k) * Scalar(m));
  const Scalar kap = Scalar(kappa);

  QuantileLoss<Scalar> out;
  out.grad = VectorX<Scalar>::Zero(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Scalar tau = Scalar(2 * j + 1) / Scalar(2 * k);
    Scalar gj = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const Scalar u = targets[i] - atoms[j];
      const Scalar w = u < 0 ? Scalar(1) - tau : tau;
      const Scalar au = std::abs(u);
      if (au <= kap) {
        out.loss += w * Scalar(0.5) * u * u / kap;
        gj -= w * u / kap;
      } else {
        out.loss += w * (au - Scalar(0.5) * kap);
        gj -= w * (u > 0 ? Scalar(1) : Scalar(-1));
      }
    }
    out.grad[j] = gj * norm;
  }
  out.loss *= norm;
  return out;
}

}  // namespace qppo
