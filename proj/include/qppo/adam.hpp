#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "qppo/mlp.hpp"

namespace qppo {

template <typename Scalar>
struct AdamState {
  VectorX<Scalar> first_moment;
  VectorX<Scalar> second_moment;
  std::uint64_t step_count = 0;
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);

  static AdamState zeros(Eigen::Index n) {
    AdamState s;
    s.first_moment = VectorX<Scalar>::Zero(n);
    s.second_moment = VectorX<Scalar>::Zero(n);
    return s;
  }

  bool operator==(const AdamState&) const = default;
};

/// Bias-corrected Adam on a flat parameter vector. Inputs are not modified.
/// Throws NumericError (and applies nothing) on a non-finite gradient.
template <typename Scalar>
std::pair<VectorX<Scalar>, AdamState<Scalar>> adam_step(const AdamState<Scalar>& state,
                                                        const VectorX<Scalar>& params,
                                                        const VectorX<Scalar>& gradient, Scalar lr) {
  if (gradient.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw ConfigError("adam_step: gradient/moment length does not match parameters");
  for (Eigen::Index i = 0; i < gradient.size(); ++i)
    if (!std::isfinite(gradient[i]))
      throw NumericError("adam_step: non-finite gradient component at index " + std::to_string(i));

  AdamState<Scalar> next = state;
  next.step_count = state.step_count + 1;
  next.first_moment = state.beta1 * state.first_moment + (Scalar(1) - state.beta1) * gradient;
  next.second_moment =
      state.beta2 * state.second_moment + (Scalar(1) - state.beta2) * gradient.cwiseAbs2();
  const auto t = static_cast<Scalar>(next.step_count);
  const Scalar c1 = Scalar(1) - std::pow(state.beta1, t);
  const Scalar c2 = Scalar(1) - std::pow(state.beta2, t);

  VectorX<Scalar> updated = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const Scalar m_hat = next.first_moment[i] / c1;
    const Scalar v_hat = next.second_moment[i] / c2;
    updated[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
  return {std::move(updated), std::move(next)};
}

template <typename Scalar>
std::pair<MlpParams<Scalar>, AdamState<Scalar>> adam_step(const AdamState<Scalar>& state,
                                                          const MlpParams<Scalar>& params,
                                                          const VectorX<Scalar>& gradient, Scalar lr) {
  auto [flat, next] = adam_step(state, flatten(params), gradient, lr);
  MlpParams<Scalar> out = params;
  assign_flat(out, flat);
  return {std::move(out), std::move(next)};
}

}  // namespace qppo
