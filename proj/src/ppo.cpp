#include "qppo/ppo.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "qppo/errors.hpp"

namespace qppo {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

Eigen::VectorXd slice(const Eigen::VectorXd& v, std::span<const Eigen::Index> idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

Eigen::MatrixXd slice_cols(const Eigen::MatrixXd& m, std::span<const Eigen::Index> idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(idx[i]);
  return out;
}

void check_indices(const RolloutBatch& batch, std::span<const Eigen::Index> idx) {
  if (idx.empty()) throw UsageError("minibatch is empty");
  for (auto i : idx)
    if (i < 0 || i >= batch.size()) throw UsageError("minibatch index out of range");
}

}  // namespace

Algo parse_algo(std::string_view name) {
  if (name == "ppo") return Algo::Ppo;
  if (name == "dppo") return Algo::Dppo;
  if (name == "dppo-kurt") return Algo::DppoKurt;
  if (name == "dppo-skew") return Algo::DppoSkew;
  if (name == "landscape-ppo") return Algo::LandscapePpo;
  if (name == "crs") return Algo::Crs;
  throw ConfigError("unknown algo '" + std::string(name) +
                    "' (expected ppo, dppo, dppo-kurt, dppo-skew, landscape-ppo or crs)");
}

std::string_view algo_name(Algo algo) {
  switch (algo) {
    case Algo::Ppo: return "ppo";
    case Algo::Dppo: return "dppo";
    case Algo::DppoKurt: return "dppo-kurt";
    case Algo::DppoSkew: return "dppo-skew";
    case Algo::LandscapePpo: return "landscape-ppo";
    case Algo::Crs: return "crs";
  }
  return "?";
}

void validate(const PpoConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError("ppo." + field + ": " + why); };
  if (!(c.gamma > 0 && c.gamma <= 1)) fail("gamma", "must lie in (0, 1]");
  if (!(c.gae_lambda >= 0 && c.gae_lambda <= 1)) fail("gae_lambda", "must lie in [0, 1]");
  if (!(c.clip_eps > 0)) fail("clip_eps", "must be positive");
  if (!(c.lr >= 0)) fail("lr", "must be non-negative");
  if (c.epochs < 1) fail("epochs", "must be >= 1");
  if (c.rollout_len < 1) fail("rollout_len", "must be >= 1");
  if (c.minibatch_size < 1 || c.minibatch_size > c.rollout_len) fail("minibatch_size", "must lie in [1, rollout_len]");
  for (auto [name, v] : {std::pair{"w_skew", c.w_skew}, {"w_kurt", c.w_kurt}, {"lambda_cvar", c.lambda_cvar},
                         {"lambda_kurt", c.lambda_kurt}, {"lambda_skew", c.lambda_skew}, {"entropy_coef", c.entropy_coef},
                         {"critic_coef", c.critic_coef}})
    if (!(v >= 0)) fail(name, "must be non-negative");
  if (!(c.cvar_alpha > 0 && c.cvar_alpha <= 1)) fail("cvar_alpha", "must lie in (0, 1]");
  if (!(c.crs_alpha > 0 && c.crs_alpha <= 1)) fail("crs_alpha", "must lie in (0, 1]");
  if (!(c.max_grad_norm > 0)) fail("max_grad_norm", "must be positive");
  if (!(c.kappa > 0)) fail("kappa", "must be positive");
  if (c.n_quantiles < 1) fail("n_quantiles", "must be >= 1");
  for (int h : c.hidden_sizes)
    if (h < 1) fail("hidden_sizes", "entries must be positive");
  if (!(c.init_log_std >= kLogStdMin && c.init_log_std <= kLogStdMax)) fail("init_log_std", "must lie in [-5, 2]");
  if (c.crs_candidates < 1) fail("crs_candidates", "must be >= 1");
  if (c.crs_eval_episodes < 1) fail("crs_eval_episodes", "must be >= 1");
}

PpoConfig resolve_for_algo(PpoConfig c, Algo algo) {
  const bool landscape = algo == Algo::LandscapePpo;
  if (!landscape) c.lambda_cvar = c.lambda_kurt = c.lambda_skew = 0.0;
  switch (algo) {
    case Algo::Ppo:
    case Algo::Crs:
      c.n_quantiles = 1;
      c.w_skew = c.w_kurt = 0.0;
      break;
    case Algo::Dppo:
    case Algo::LandscapePpo:
      c.w_skew = c.w_kurt = 0.0;
      break;
    case Algo::DppoKurt:
      c.w_skew = 0.0;
      break;
    case Algo::DppoSkew:
      c.w_kurt = 0.0;
      break;
  }
  return c;
}

double gaussian_log_prob(const Eigen::VectorXd& action, const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std) {
  const Eigen::ArrayXd z = (action - mean).array() * (-log_std).array().exp();
  return -0.5 * z.square().sum() - log_std.sum() - 0.5 * static_cast<double>(action.size()) * kLog2Pi;
}

double gaussian_entropy(const Eigen::VectorXd& log_std) {
  return log_std.sum() + 0.5 * static_cast<double>(log_std.size()) * (kLog2Pi + 1.0);
}

PolicyFn make_policy_fn(const GaussianPolicy& policy) {
  return [&policy](const Eigen::VectorXd& obs, Rng& rng, bool deterministic) {
    PolicyOutput out;
    const Eigen::VectorXd mu = mlp_predict(policy.mean, obs);
    if (deterministic) {
      out.action = mu;
    } else {
      out.action.resize(mu.size());
      for (Eigen::Index d = 0; d < mu.size(); ++d) out.action[d] = mu[d] + std::exp(policy.log_std[d]) * rng.normal();
    }
    out.log_prob = gaussian_log_prob(out.action, mu, policy.log_std);
    return out;
  };
}

Eigen::Index policy_param_count(const GaussianPolicy& policy) {
  return policy.mean.param_count() + policy.log_std.size();
}

Eigen::VectorXd flatten(const AgentParams& p) {
  const Eigen::Index np = p.policy.mean.param_count();
  const Eigen::Index ns = p.policy.log_std.size();
  Eigen::VectorXd flat(np + ns + p.critic.param_count());
  flat.head(np) = flatten(p.policy.mean);
  flat.segment(np, ns) = p.policy.log_std;
  flat.tail(p.critic.param_count()) = flatten(p.critic);
  return flat;
}

void assign_flat(AgentParams& p, const Eigen::VectorXd& flat) {
  const Eigen::Index np = p.policy.mean.param_count();
  const Eigen::Index ns = p.policy.log_std.size();
  if (flat.size() != np + ns + p.critic.param_count()) throw ConfigError("assign_flat: agent vector length mismatch");
  assign_flat(p.policy.mean, flat.head(np));
  p.policy.log_std = flat.segment(np, ns);
  assign_flat(p.critic, flat.tail(p.critic.param_count()));
}

std::uint64_t checksum(const AgentParams& params) {
  const Eigen::VectorXd flat = flatten(params);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    h ^= std::bit_cast<std::uint64_t>(flat[i]);
    h = splitmix64(h);
  }
  return h;
}

AgentState init_agent(const EnvSpec& spec, const PpoConfig& config, Rng& rng) {
  std::vector<int> policy_sizes{spec.obs_dim};
  std::vector<int> critic_sizes{spec.obs_dim};
  for (int h : config.hidden_sizes) {
    policy_sizes.push_back(h);
    critic_sizes.push_back(h);
  }
  policy_sizes.push_back(spec.act_dim);
  critic_sizes.push_back(config.n_quantiles);

  AgentState s;
  s.params.policy.mean = init_mlp(policy_sizes, rng, 0.01);
  s.params.policy.log_std = Eigen::VectorXd::Constant(spec.act_dim, config.init_log_std);
  s.params.critic = init_mlp(critic_sizes, rng);
  s.adam = AdamState<double>::zeros(flatten(s.params).size());
  return s;
}

TensorDocument to_document(const AgentState& state) {
  TensorDocument doc;
  doc.put_mlp("policy", state.params.policy.mean);
  doc.put_tensor("log_std", state.params.policy.log_std);
  doc.put_mlp("critic", state.params.critic);
  doc.put_tensor("adam.m", state.adam.first_moment);
  doc.put_tensor("adam.v", state.adam.second_moment);
  doc.put_u64("adam.step", state.adam.step_count);
  return doc;
}

AgentState agent_from_document(const TensorDocument& doc) {
  AgentState s;
  s.params.policy.mean = doc.mlp("policy");
  s.params.policy.log_std = doc.vector("log_std");
  s.params.critic = doc.mlp("critic");
  s.adam = AdamState<double>::zeros(flatten(s.params).size());
  s.adam.first_moment = doc.vector("adam.m");
  s.adam.second_moment = doc.vector("adam.v");
  s.adam.step_count = doc.u64("adam.step");
  if (s.adam.first_moment.size() != flatten(s.params).size() || s.adam.second_moment.size() != s.adam.first_moment.size())
    throw ConfigError("checkpoint: optimizer moments do not match the parameter count");
  return s;
}

EnvCursor start_cursor(const EnvSpec& spec, Rng& rng) { return {reset(spec, rng), 0.0}; }

RolloutBatch collect_rollout(const EnvSpec& spec, const AgentParams& params, int rollout_len, EnvCursor& cursor,
                             Rng& rng) {
  const int k = params.critic.output_size();
  RolloutBatch b;
  b.states.resize(spec.obs_dim, rollout_len);
  b.actions.resize(spec.act_dim, rollout_len);
  b.rewards.resize(rollout_len);
  b.dones.assign(static_cast<std::size_t>(rollout_len), 0);
  b.old_log_probs.resize(rollout_len);
  b.atoms.resize(k, rollout_len);

  const PolicyFn policy = make_policy_fn(params.policy);
  for (int t = 0; t < rollout_len; ++t) {
    const Eigen::VectorXd obs = cursor.state.values;
    PolicyOutput po = policy(obs, rng, false);
    if (!po.action.allFinite()) throw NumericError("collect_rollout: non-finite action at step " + std::to_string(t));
    b.states.col(t) = obs;
    b.actions.col(t) = po.action;
    b.old_log_probs[t] = po.log_prob;
    b.atoms.col(t) = predict_atoms(params.critic, obs).atoms;

    StepOutcome so = step(spec, cursor.state, po.action, rng);
    b.rewards[t] = so.reward;
    cursor.running_return += so.reward;
    if (so.done) {
      b.dones[static_cast<std::size_t>(t)] = 1;
      b.episode_returns.push_back(cursor.running_return);
      cursor = start_cursor(spec, rng);
    } else {
      cursor.state = std::move(so.next_state);
    }
  }
  b.bootstrap_value = predict_atoms(params.critic, cursor.state.values).mean();
  return b;
}

GaeResult compute_gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values,
                      std::span<const std::uint8_t> dones, double bootstrap_value, double gamma, double lambda) {
  const Eigen::Index n = rewards.size();
  if (values.size() != n || static_cast<Eigen::Index>(dones.size()) != n)
    throw UsageError("compute_gae: rewards, values and dones must share one length");
  if (!rewards.allFinite() || !values.allFinite() || !std::isfinite(bootstrap_value))
    throw NumericError("compute_gae: non-finite reward or value");
  GaeResult out;
  out.advantages.resize(n);
  double next_adv = 0.0;
  double next_value = bootstrap_value;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double live = dones[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * live * next_value - values[t];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[t] = next_adv;
    next_value = values[t];
  }
  out.value_targets = out.advantages + values;
  return out;
}

Eigen::VectorXd discounted_returns(const Eigen::VectorXd& rewards, std::span<const std::uint8_t> dones,
                                   double bootstrap_value, double gamma) {
  const Eigen::Index n = rewards.size();
  if (static_cast<Eigen::Index>(dones.size()) != n) throw UsageError("discounted_returns: length mismatch");
  Eigen::VectorXd g(n);
  double next = bootstrap_value;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    if (dones[static_cast<std::size_t>(t)]) next = 0.0;
    next = rewards[t] + gamma * next;
    g[t] = next;
  }
  return g;
}

void standardize(Eigen::VectorXd& v) {
  if (v.size() == 0) return;
  const double mean = v.mean();
  v.array() -= mean;
  const double sd = std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
  if (sd > 1e-12) v /= sd;
}

RolloutBatch regularize_advantages(RolloutBatch batch, double w_skew, double w_kurt) {
  if (w_skew == 0.0 && w_kurt == 0.0) return batch;
  if (batch.atoms.cols() != batch.advantages.size())
    throw UsageError("regularize_advantages: atoms and advantages are not aligned");
  for (Eigen::Index t = 0; t < batch.advantages.size(); ++t) {
    const MomentStats m = moments_from_atoms(batch.atoms.col(t));
    batch.advantages[t] = batch.advantages[t] - w_skew * m.skewness - w_kurt * m.kurtosis;
  }
  return batch;
}

void finalize_batch(RolloutBatch& batch, const PpoConfig& config) {
  const Eigen::VectorXd values = batch.atoms.colwise().mean().transpose();
  GaeResult gae = compute_gae(batch.rewards, values, batch.dones, batch.bootstrap_value, config.gamma, config.gae_lambda);
  batch.advantages = std::move(gae.advantages);
  batch.value_targets = std::move(gae.value_targets);
  batch.returns = discounted_returns(batch.rewards, batch.dones, batch.bootstrap_value, config.gamma);
  if (config.advantage_standardization) standardize(batch.advantages);
  batch = regularize_advantages(std::move(batch), config.w_skew, config.w_kurt);
}

SurrogateResult clipped_surrogate(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                  const Eigen::VectorXd& old_log_probs, const Eigen::VectorXd& advantages,
                                  const GaussianPolicy& policy, double clip_eps, double entropy_coef) {
  const Eigen::Index n = states.cols();
  const Eigen::Index act_dim = policy.log_std.size();
  auto [mu, cache] = mlp_forward_batch(policy.mean, states);
  const Eigen::ArrayXd inv_var = (-2.0 * policy.log_std).array().exp();

  SurrogateResult out;
  Eigen::MatrixXd d_mu = Eigen::MatrixXd::Zero(act_dim, n);  // d objective-sum / d mu
  Eigen::VectorXd d_log_std = Eigen::VectorXd::Zero(act_dim);
  int valid = 0;
  int clipped = 0;
  double objective = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::VectorXd a = actions.col(t);
    const Eigen::VectorXd m = mu.col(t);
    const double ratio = std::exp(gaussian_log_prob(a, m, policy.log_std) - old_log_probs[t]);
    if (!std::isfinite(ratio) || !std::isfinite(advantages[t])) {
      ++out.excluded;
      continue;
    }
    ++valid;
    const double adv = advantages[t];
    const double unclipped = ratio * adv;
    const double clip = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv;
    if (unclipped <= clip) {
      objective += unclipped;
      // d ratio = ratio * d log pi
      const Eigen::ArrayXd diff = (a - m).array();
      d_mu.col(t) = (unclipped * diff * inv_var).matrix();
      d_log_std += (unclipped * (diff.square() * inv_var - 1.0)).matrix();
    } else {
      objective += clip;
      ++clipped;
    }
  }

  const Eigen::Index np = policy.mean.param_count();
  out.grad = Eigen::VectorXd::Zero(np + act_dim);
  out.entropy = gaussian_entropy(policy.log_std);
  if (valid == 0) {
    out.loss = -entropy_coef * out.entropy;
    out.grad.tail(act_dim).setConstant(-entropy_coef);
    return out;
  }
  const double inv_n = 1.0 / valid;
  out.objective = objective * inv_n;
  out.loss = -out.objective - entropy_coef * out.entropy;
  out.clip_fraction = clipped * inv_n;
  out.grad.head(np) = mlp_backward(policy.mean, cache, (-inv_n) * d_mu);
  out.grad.tail(act_dim) = -inv_n * d_log_std - Eigen::VectorXd::Constant(act_dim, entropy_coef);
  return out;
}

SurrogateResult ppo_surrogate(const RolloutBatch& batch, std::span<const Eigen::Index> indices,
                              const GaussianPolicy& policy, double clip_eps, double entropy_coef) {
  check_indices(batch, indices);
  return clipped_surrogate(slice_cols(batch.states, indices), slice_cols(batch.actions, indices),
                           slice(batch.old_log_probs, indices), slice(batch.advantages, indices), policy, clip_eps,
                           entropy_coef);
}

LandscapeResult landscape_ppo_loss(const RolloutBatch& batch, std::span<const Eigen::Index> indices,
                                   const GaussianPolicy& policy, const Mlp& critic, const PpoConfig& config) {
  check_indices(batch, indices);
  const auto n = static_cast<Eigen::Index>(indices.size());
  const Eigen::MatrixXd states = slice_cols(batch.states, indices);

  LandscapeResult out;
  out.advantage_shift.resize(n);
  double neg_cvar = 0.0, kurt = 0.0, abs_skew = 0.0;
  if (config.landscape_source == LandscapeSource::CriticAtoms) {
    auto [atoms, cache] = mlp_forward_batch(critic, states);
    for (Eigen::Index i = 0; i < n; ++i) {
      const MomentStats s = atom_stats(atoms.col(i), config.cvar_alpha);
      neg_cvar -= s.cvar;
      kurt += s.kurtosis;
      abs_skew += std::abs(s.skewness);
      out.advantage_shift[i] = config.lambda_cvar * (s.cvar - s.mean);
    }
    neg_cvar /= double(n);
    kurt /= double(n);
    abs_skew /= double(n);
  } else {
    const Eigen::VectorXd g = slice(batch.returns, indices);
    const MomentStats s = atom_stats(g, config.cvar_alpha);
    neg_cvar = -s.cvar;
    kurt = s.kurtosis;
    abs_skew = std::abs(s.skewness);
    out.advantage_shift.setConstant(config.lambda_cvar * (s.cvar - s.mean));
  }

  const Eigen::VectorXd adv = slice(batch.advantages, indices) + out.advantage_shift;
  out.surrogate = clipped_surrogate(states, slice_cols(batch.actions, indices), slice(batch.old_log_probs, indices), adv,
                                    policy, config.clip_eps, config.entropy_coef);
  out.penalty_cvar = config.lambda_cvar * neg_cvar;
  out.penalty_kurt = config.lambda_kurt * kurt;
  out.penalty_skew = config.lambda_skew * abs_skew;
  out.loss = out.surrogate.loss + out.penalty_cvar + out.penalty_kurt + out.penalty_skew;
  return out;
}

CriticLossResult critic_loss(const RolloutBatch& batch, std::span<const Eigen::Index> indices, const Mlp& critic,
                             double kappa) {
  check_indices(batch, indices);
  if (batch.returns.size() != batch.size()) throw UsageError("critic_loss: batch has no return targets");
  const auto n = static_cast<Eigen::Index>(indices.size());
  auto [atoms, cache] = mlp_forward_batch(critic, slice_cols(batch.states, indices));
  Eigen::MatrixXd out_grad(atoms.rows(), n);
  CriticLossResult out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Matrix<double, 1, 1> target(batch.returns[indices[static_cast<std::size_t>(i)]]);
    const auto q = quantile_huber_loss(atoms.col(i), target, kappa);
    out.loss += q.loss;
    out_grad.col(i) = q.grad;
  }
  out.loss /= double(n);
  out.grad = mlp_backward(critic, cache, out_grad / double(n));
  return out;
}

UpdateResult update_once(const AgentState& state, const RolloutBatch& batch, std::span<const Eigen::Index> indices,
                         const PpoConfig& config) {
  UpdateResult res;
  const auto& params = state.params;

  double policy_loss = 0.0;
  Eigen::VectorXd policy_grad;
  if (config.landscape_enabled()) {
    LandscapeResult l = landscape_ppo_loss(batch, indices, params.policy, params.critic, config);
    policy_loss = l.loss;
    policy_grad = std::move(l.surrogate.grad);
    res.stats.excluded = l.surrogate.excluded;
  } else {
    SurrogateResult s = ppo_surrogate(batch, indices, params.policy, config.clip_eps, config.entropy_coef);
    policy_loss = s.loss;
    policy_grad = std::move(s.grad);
    res.stats.excluded = s.excluded;
  }
  CriticLossResult c = critic_loss(batch, indices, params.critic, config.kappa);

  res.stats.loss_policy = policy_loss;
  res.stats.loss_critic = c.loss;
  res.stats.loss_total = policy_loss + config.critic_coef * c.loss;

  Eigen::VectorXd grad(policy_grad.size() + c.grad.size());
  grad.head(policy_grad.size()) = policy_grad;
  grad.tail(c.grad.size()) = config.critic_coef * c.grad;
  res.stats.grad_norm = grad.norm();

  if (!std::isfinite(res.stats.loss_total) || !std::isfinite(res.stats.grad_norm)) {
    res.next = state;
    res.rejected = true;
    res.diagnostic = "non-finite loss or gradient";
    return res;
  }
  if (res.stats.grad_norm > config.max_grad_norm) grad *= config.max_grad_norm / res.stats.grad_norm;

  try {
    auto [flat, adam] = adam_step(state.adam, flatten(params), grad, config.lr);
    res.next.params = params;
    assign_flat(res.next.params, flat);
    res.next.params.policy.log_std = res.next.params.policy.log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
    res.next.adam = std::move(adam);
  } catch (const NumericError& e) {
    res.next = state;
    res.rejected = true;
    res.diagnostic = e.what();
  }
  return res;
}

std::vector<std::vector<Eigen::Index>> draw_minibatches(Eigen::Index batch_size, int minibatch_size, int count,
                                                        Rng& rng) {
  if (minibatch_size < 1 || minibatch_size > batch_size) throw UsageError("draw_minibatches: invalid minibatch size");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(batch_size));
  std::size_t cursor = perm.size();
  std::vector<std::vector<Eigen::Index>> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    if (cursor + static_cast<std::size_t>(minibatch_size) > perm.size()) {
      for (std::size_t j = 0; j < perm.size(); ++j) perm[j] = static_cast<Eigen::Index>(j);
      shuffle(perm.begin(), perm.end(), rng);
      cursor = 0;
    }
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(cursor),
                     perm.begin() + static_cast<std::ptrdiff_t>(cursor + static_cast<std::size_t>(minibatch_size)));
    cursor += static_cast<std::size_t>(minibatch_size);
  }
  return out;
}

double episode_return(const EnvSpec& spec, const GaussianPolicy& policy, Rng& rng, bool deterministic) {
  EnvState state = reset(spec, rng);
  double total = 0.0;
  Eigen::VectorXd action(spec.act_dim);
  while (!state.done) {
    const Eigen::VectorXd mu = mlp_predict(policy.mean, state.values);
    if (deterministic) {
      action = mu;
    } else {
      for (Eigen::Index d = 0; d < mu.size(); ++d) action[d] = mu[d] + std::exp(policy.log_std[d]) * rng.normal();
    }
    if (!action.allFinite()) throw NumericError("evaluation: policy produced a non-finite action");
    StepOutcome so = step(spec, state, action, rng);
    total += so.reward;
    state = std::move(so.next_state);
  }
  return total;
}

std::vector<double> evaluate_policy(const EnvSpec& spec, const GaussianPolicy& policy, int episodes, Rng& rng) {
  std::vector<double> out(static_cast<std::size_t>(episodes));
  for (auto& r : out) r = episode_return(spec, policy, rng, true);
  return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << kMetricsHeader << '\n' << std::setprecision(17);
  for (const auto& r : rows)
    os << r.step << ',' << r.episode_return_mean << ',' << r.episode_return_std << ',' << r.loss_total << ','
       << r.loss_policy << ',' << r.loss_critic << ',' << r.mean_skew << ',' << r.mean_kurt << ',' << r.mean_cvar << ','
       << r.grad_norm << '\n';
  return os.str();
}

std::string_view status_name(RunStatus status) {
  switch (status) {
    case RunStatus::Completed: return "completed";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::Aborted: return "aborted";
  }
  return "?";
}

}  // namespace qppo
