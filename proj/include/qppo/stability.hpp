#pragma once

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qppo/ppo.hpp"

namespace qppo {

/// One forked update: theta'_i = U(theta, X_i), its mean deterministic
/// evaluation return and the mean critic value it assigns.
struct PostUpdateSample {
  int update_id = 0;
  double post_return = 0.0;
  double post_value = 0.0;
};

struct PostUpdateDistributions {
  std::string checkpoint_id;
  std::vector<PostUpdateSample> samples;  // valid forks only, ordered by update_id
  int eval_episodes = 0;
  bool exploration_off = true;
  int invalid_count = 0;

  std::vector<double> returns() const;
  std::vector<double> values() const;
};

enum class PostValueStates {
  Minibatch,  // the fork's own minibatch states
  Probe,      // a fixed probe set shared by every fork
};

struct PostUpdateOptions {
  int n_forks = 256;
  int eval_episodes = 8;
  PostValueStates value_states = PostValueStates::Minibatch;
  int probe_states = 256;
  int threads = 1;
  std::string checkpoint_id;
};

/// Forks n_forks single-minibatch updates from `checkpoint` and evaluates each.
/// Every fork draws from rng.derive("eval", id), so the result does not depend
/// on how forks are scheduled across threads.
PostUpdateDistributions sample_post_update(const EnvSpec& spec, const AgentState& checkpoint,
                                           const RolloutBatch& rollout, const PpoConfig& config,
                                           const PostUpdateOptions& options, const Rng& rng);

struct PearsonResult {
  double r = 0.0;
  bool degenerate = false;  // one input was constant
};

PearsonResult pearson(std::span<const double> x, std::span<const double> y);

/// Two-sided permutation test, p = (1 + #{|r_perm| >= |r_obs|}) / (M + 1).
/// Returns 1 when the correlation is degenerate.
double permutation_p_value(std::span<const double> x, std::span<const double> y, int permutations, Rng& rng);

enum class AlignmentMode { ValueLevel, VarianceLevel };
std::string_view mode_name(AlignmentMode mode);

struct AlignmentReport {
  double pearson_r = 0.0;
  double p_value = 1.0;
  int n = 0;
  AlignmentMode mode = AlignmentMode::ValueLevel;
  bool degenerate = false;
};

/// Value level: post_value against post_return across the forks of one checkpoint.
AlignmentReport alignment_report(const PostUpdateDistributions& dist, int permutations, Rng& rng);
/// Variance level: sigma^2 of returns against sigma^2 of values across at least three checkpoints.
AlignmentReport alignment_report(std::span<const PostUpdateDistributions> dists, int permutations, Rng& rng);

double sample_variance(std::span<const double> values);
double sample_std(std::span<const double> values);

/// Sample (N-1) standard deviation of the post-update returns.
double stability_sigma(const PostUpdateDistributions& dist);

/// Mean of the max(1, floor(alpha * n)) lowest samples.
double empirical_cvar(std::span<const double> samples, double alpha);

/// Index of the candidate whose returns have the highest empirical CVaR;
/// ties go to the lower index, missing candidates are skipped.
std::optional<std::size_t> select_by_cvar(const std::vector<std::optional<std::vector<double>>>& candidate_returns,
                                          double alpha);

struct CrsResult {
  AgentState selected;
  std::optional<std::size_t> chosen;   // empty when every candidate failed
  std::vector<std::optional<double>> candidate_cvars;
  UpdateStats stats;                   // of the chosen candidate
  bool fallback = false;
};

CrsResult crs_select_update(const EnvSpec& spec, const AgentState& checkpoint, const RolloutBatch& rollout,
                            const std::vector<std::vector<Eigen::Index>>& candidate_minibatches,
                            const PpoConfig& config, int eval_episodes, double alpha, const Rng& rng);

CrsResult crs_select_update(const EnvSpec& spec, const AgentState& checkpoint, const RolloutBatch& rollout,
                            int k_candidates, const PpoConfig& config, int eval_episodes, double alpha, Rng& rng);

}  // namespace qppo
