#include <cmath>
#include <limits>

#include "qppo/errors.hpp"
#include "qppo/ppo.hpp"
#include "qppo/stability.hpp"

namespace qppo {

namespace {

struct UpdateAccumulator {
  double loss_total = 0, loss_policy = 0, loss_critic = 0, grad_norm = 0;
  int count = 0;

  void add(const UpdateStats& s) {
    loss_total += s.loss_total;
    loss_policy += s.loss_policy;
    loss_critic += s.loss_critic;
    grad_norm += s.grad_norm;
    ++count;
  }
};

MetricsRow summarize(long step, const RolloutBatch& batch, const UpdateAccumulator& acc, double alpha) {
  MetricsRow row;
  row.step = step;
  const auto& er = batch.episode_returns;
  if (er.empty()) {
    row.episode_return_mean = row.episode_return_std = std::numeric_limits<double>::quiet_NaN();
  } else {
    const Eigen::Map<const Eigen::VectorXd> v(er.data(), static_cast<Eigen::Index>(er.size()));
    row.episode_return_mean = v.mean();
    row.episode_return_std = std::sqrt((v.array() - row.episode_return_mean).square().mean());
  }
  const double n = acc.count > 0 ? acc.count : std::numeric_limits<double>::quiet_NaN();
  row.loss_total = acc.loss_total / n;
  row.loss_policy = acc.loss_policy / n;
  row.loss_critic = acc.loss_critic / n;
  row.grad_norm = acc.grad_norm / n;
  for (Eigen::Index t = 0; t < batch.atoms.cols(); ++t) {
    const MomentStats s = atom_stats(batch.atoms.col(t), alpha);
    row.mean_skew += s.skewness;
    row.mean_kurt += s.kurtosis;
    row.mean_cvar += s.cvar;
  }
  const double cols = static_cast<double>(batch.atoms.cols());
  row.mean_skew /= cols;
  row.mean_kurt /= cols;
  row.mean_cvar /= cols;
  return row;
}

}  // namespace

TrainResult train(const EnvSpec& spec, Algo algo, const PpoConfig& config, std::uint64_t seed,
                  const TrainOptions& options) {
  validate(spec);
  validate(config);
  const PpoConfig cfg = resolve_for_algo(config, algo);

  const Rng root(seed);
  Rng init_rng = root.derive("init");
  Rng env_rng = root.derive("env");
  Rng minibatch_rng = root.derive("minibatch");
  const Rng crs_rng = root.derive("crs");

  TrainResult result;
  AgentState state = init_agent(spec, cfg, init_rng);
  result.checkpoints.push_back({0, state});

  const long iterations = options.total_steps / cfg.rollout_len;
  const int minibatches_per_epoch = std::max(1, cfg.rollout_len / cfg.minibatch_size);
  long next_checkpoint = options.checkpoint_interval;
  long step = 0;
  int consecutive_bad = 0;
  std::uint64_t crs_round = 0;

  EnvCursor cursor = start_cursor(spec, env_rng);
  try {
    for (long it = 0; it < iterations; ++it) {
      RolloutBatch batch = collect_rollout(spec, state.params, cfg.rollout_len, cursor, env_rng);
      finalize_batch(batch, cfg);

      UpdateAccumulator acc;
      auto record = [&](const UpdateStats& stats, bool rejected) {
        acc.add(stats);
        consecutive_bad = rejected ? consecutive_bad + 1 : 0;
        return consecutive_bad < 2;
      };
      bool healthy = true;
      for (int epoch = 0; epoch < cfg.epochs && healthy; ++epoch) {
        const auto minibatches = draw_minibatches(batch.size(), cfg.minibatch_size, minibatches_per_epoch, minibatch_rng);
        if (algo == Algo::Crs) {
          // each selection consumes crs_candidates minibatches of the epoch
          for (std::size_t g = 0; g < minibatches.size() && healthy; g += static_cast<std::size_t>(cfg.crs_candidates)) {
            const auto end = std::min(minibatches.size(), g + static_cast<std::size_t>(cfg.crs_candidates));
            const std::vector<std::vector<Eigen::Index>> group(minibatches.begin() + static_cast<std::ptrdiff_t>(g),
                                                               minibatches.begin() + static_cast<std::ptrdiff_t>(end));
            CrsResult crs = crs_select_update(spec, state, batch, group, cfg, cfg.crs_eval_episodes, cfg.crs_alpha,
                                              crs_rng.derive("round", crs_round++));
            healthy = record(crs.stats, crs.fallback);
            state = std::move(crs.selected);
          }
        } else {
          for (const auto& mb : minibatches) {
            UpdateResult u = update_once(state, batch, mb, cfg);
            healthy = record(u.stats, u.rejected);
            state = std::move(u.next);
            if (!healthy) break;
          }
        }
      }
      step += cfg.rollout_len;
      result.metrics.push_back(summarize(step, batch, acc, cfg.cvar_alpha));
      if (!healthy) {
        result.status = RunStatus::Diverged;
        result.message = "non-finite loss on two consecutive updates at step " + std::to_string(step);
        break;
      }
      if (options.checkpoint_interval > 0 && step >= next_checkpoint) {
        result.checkpoints.push_back({step, state});
        while (next_checkpoint <= step) next_checkpoint += options.checkpoint_interval;
      }
    }
  } catch (const NumericError& e) {
    result.status = RunStatus::Aborted;
    result.message = e.what();
  }

  if (result.checkpoints.back().step != step) result.checkpoints.push_back({step, state});
  result.final_state = std::move(state);
  result.steps = step;
  return result;
}

}  // namespace qppo
