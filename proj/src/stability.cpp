#include "qppo/stability.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>

#include "qppo/errors.hpp"

namespace qppo {

namespace {

/// Runs fn(i) for i in [0, n) on up to `threads` workers with a static
/// interleaved assignment. Callers write results into slot i only.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  const int workers = std::clamp(threads, 1, std::max(1, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double critic_mean_value(const Mlp& critic, const Eigen::MatrixXd& states) {
  auto [atoms, cache] = mlp_forward_batch(critic, states);
  return atoms.mean();
}

Eigen::MatrixXd gather_states(const RolloutBatch& rollout, std::span<const Eigen::Index> idx) {
  Eigen::MatrixXd out(rollout.states.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = rollout.states.col(idx[i]);
  return out;
}

}  // namespace

std::vector<double> PostUpdateDistributions::returns() const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.post_return);
  return out;
}

std::vector<double> PostUpdateDistributions::values() const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.post_value);
  return out;
}

PostUpdateDistributions sample_post_update(const EnvSpec& spec, const AgentState& checkpoint,
                                           const RolloutBatch& rollout, const PpoConfig& config,
                                           const PostUpdateOptions& options, const Rng& rng) {
  if (options.n_forks < 2) throw UsageError("sample_post_update: need at least two forks");
  if (options.eval_episodes < 1) throw UsageError("sample_post_update: need at least one evaluation episode");

  Rng minibatch_rng = rng.derive("minibatches");
  const auto minibatches = draw_minibatches(rollout.size(), config.minibatch_size, options.n_forks, minibatch_rng);

  Eigen::MatrixXd probe;
  if (options.value_states == PostValueStates::Probe) {
    const Eigen::Index n = std::min<Eigen::Index>(options.probe_states, rollout.size());
    probe = rollout.states.leftCols(n);
  }

  struct Slot {
    PostUpdateSample sample;
    bool valid = false;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(options.n_forks));
  parallel_for(options.n_forks, options.threads, [&](int i) {
    const auto& mb = minibatches[static_cast<std::size_t>(i)];
    const UpdateResult u = update_once(checkpoint, rollout, mb, config);
    if (u.rejected) return;
    Rng eval_rng = rng.derive("eval", static_cast<std::uint64_t>(i));
    std::vector<double> returns;
    try {
      returns = evaluate_policy(spec, u.next.params.policy, options.eval_episodes, eval_rng);
    } catch (const NumericError&) {
      return;
    }
    double total = 0.0;
    for (double r : returns) total += r;
    const double value = options.value_states == PostValueStates::Probe
                             ? critic_mean_value(u.next.params.critic, probe)
                             : critic_mean_value(u.next.params.critic, gather_states(rollout, mb));
    const double post_return = total / static_cast<double>(returns.size());
    if (!std::isfinite(post_return) || !std::isfinite(value)) return;
    slots[static_cast<std::size_t>(i)] = {{i, post_return, value}, true};
  });

  PostUpdateDistributions dist;
  dist.checkpoint_id = options.checkpoint_id;
  dist.eval_episodes = options.eval_episodes;
  for (const auto& s : slots) {
    if (s.valid)
      dist.samples.push_back(s.sample);
    else
      ++dist.invalid_count;
  }
  return dist;
}

PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("pearson: length mismatch");
  if (x.size() < 2) throw UsageError("pearson: need at least two pairs");
  // shifting by the first element keeps constant inputs exactly constant
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] - x[0];
    my += y[i] - y[0];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = (x[i] - x[0]) - mx;
    const double dy = (y[i] - y[0]) - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

double permutation_p_value(std::span<const double> x, std::span<const double> y, int permutations, Rng& rng) {
  if (permutations < 1000) throw UsageError("permutation_p_value: need at least 1000 permutations");
  const PearsonResult observed = pearson(x, y);
  if (observed.degenerate) return 1.0;
  const double threshold = std::abs(observed.r);
  std::vector<double> shuffled(y.begin(), y.end());
  long hits = 0;
  for (int m = 0; m < permutations; ++m) {
    shuffle(shuffled.begin(), shuffled.end(), rng);
    if (std::abs(pearson(x, shuffled).r) >= threshold) ++hits;
  }
  return static_cast<double>(1 + hits) / static_cast<double>(permutations + 1);
}

std::string_view mode_name(AlignmentMode mode) {
  return mode == AlignmentMode::ValueLevel ? "value-level" : "variance-level";
}

AlignmentReport alignment_report(const PostUpdateDistributions& dist, int permutations, Rng& rng) {
  if (dist.samples.size() < 2) throw UsageError("alignment_report: need at least two valid forks");
  const auto values = dist.values();
  const auto returns = dist.returns();
  AlignmentReport rep;
  rep.mode = AlignmentMode::ValueLevel;
  rep.n = static_cast<int>(values.size());
  const PearsonResult p = pearson(values, returns);
  rep.pearson_r = p.r;
  rep.degenerate = p.degenerate;
  rep.p_value = permutation_p_value(values, returns, permutations, rng);
  return rep;
}

AlignmentReport alignment_report(std::span<const PostUpdateDistributions> dists, int permutations, Rng& rng) {
  if (dists.size() < 3) throw UsageError("alignment_report: variance level needs at least three checkpoints");
  std::vector<double> var_returns, var_values;
  for (const auto& d : dists) {
    if (d.samples.size() < 2) throw UsageError("alignment_report: checkpoint " + d.checkpoint_id + " has < 2 forks");
    var_returns.push_back(sample_variance(d.returns()));
    var_values.push_back(sample_variance(d.values()));
  }
  AlignmentReport rep;
  rep.mode = AlignmentMode::VarianceLevel;
  rep.n = static_cast<int>(dists.size());
  const PearsonResult p = pearson(var_returns, var_values);
  rep.pearson_r = p.r;
  rep.degenerate = p.degenerate;
  rep.p_value = permutation_p_value(var_returns, var_values, permutations, rng);
  return rep;
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) throw UsageError("sample_variance: need at least two values");
  const double ref = values[0];
  double mean = 0;
  for (double v : values) mean += v - ref;
  mean /= static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - ref - mean) * (v - ref - mean);
  return ss / static_cast<double>(values.size() - 1);
}

double sample_std(std::span<const double> values) { return std::sqrt(sample_variance(values)); }

double stability_sigma(const PostUpdateDistributions& dist) { return sample_std(dist.returns()); }

double empirical_cvar(std::span<const double> samples, double alpha) {
  if (samples.empty()) throw UsageError("empirical_cvar: no samples");
  const Eigen::Map<const Eigen::VectorXd> v(samples.data(), static_cast<Eigen::Index>(samples.size()));
  return cvar_from_atoms(v, alpha);
}

std::optional<std::size_t> select_by_cvar(const std::vector<std::optional<std::vector<double>>>& candidate_returns,
                                          double alpha) {
  std::optional<std::size_t> best;
  double best_cvar = 0.0;
  for (std::size_t k = 0; k < candidate_returns.size(); ++k) {
    if (!candidate_returns[k] || candidate_returns[k]->empty()) continue;
    const double c = empirical_cvar(*candidate_returns[k], alpha);
    if (!best || c > best_cvar) {
      best = k;
      best_cvar = c;
    }
  }
  return best;
}

CrsResult crs_select_update(const EnvSpec& spec, const AgentState& checkpoint, const RolloutBatch& rollout,
                            const std::vector<std::vector<Eigen::Index>>& candidate_minibatches,
                            const PpoConfig& config, int eval_episodes, double alpha, const Rng& rng) {
  if (candidate_minibatches.empty()) throw UsageError("crs_select_update: need at least one candidate");
  if (eval_episodes < 1) throw UsageError("crs_select_update: need at least one evaluation episode");

  std::vector<UpdateResult> updates;
  std::vector<std::optional<std::vector<double>>> returns;
  for (std::size_t k = 0; k < candidate_minibatches.size(); ++k) {
    UpdateResult u = update_once(checkpoint, rollout, candidate_minibatches[k], config);
    std::optional<std::vector<double>> r;
    if (!u.rejected) {
      Rng eval_rng = rng.derive("candidate", k);
      try {
        r = evaluate_policy(spec, u.next.params.policy, eval_episodes, eval_rng);
      } catch (const NumericError&) {
        r.reset();
      }
    }
    returns.push_back(std::move(r));
    updates.push_back(std::move(u));
  }

  CrsResult out;
  for (const auto& r : returns)
    out.candidate_cvars.push_back(r ? std::optional<double>(empirical_cvar(*r, alpha)) : std::nullopt);
  out.chosen = select_by_cvar(returns, alpha);
  if (!out.chosen) {
    out.selected = checkpoint;
    out.fallback = true;
    out.stats = updates.front().stats;
    return out;
  }
  out.selected = std::move(updates[*out.chosen].next);
  out.stats = updates[*out.chosen].stats;
  return out;
}

CrsResult crs_select_update(const EnvSpec& spec, const AgentState& checkpoint, const RolloutBatch& rollout,
                            int k_candidates, const PpoConfig& config, int eval_episodes, double alpha, Rng& rng) {
  if (k_candidates < 1) throw UsageError("crs_select_update: k_candidates must be >= 1");
  Rng mb_rng = rng.derive("crs-minibatches");
  const auto minibatches = draw_minibatches(rollout.size(), config.minibatch_size, k_candidates, mb_rng);
  return crs_select_update(spec, checkpoint, rollout, minibatches, config, eval_episodes, alpha, rng.derive("crs-eval"));
}

}  // namespace qppo
