#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qppo/adam.hpp"
#include "qppo/checkpoint.hpp"
#include "qppo/envs.hpp"
#include "qppo/mlp.hpp"
#include "qppo/quantile.hpp"
#include "qppo/rng.hpp"

namespace qppo {

enum class Algo { Ppo, Dppo, DppoKurt, DppoSkew, LandscapePpo, Crs };

Algo parse_algo(std::string_view name);
std::string_view algo_name(Algo algo);

/// Where the Landscape-PPO penalties read their distribution from.
enum class LandscapeSource {
  CriticAtoms,     // per-state critic atoms (default)
  SampledReturns,  // the slice's Monte-Carlo returns as one sample set
};

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double lr = 3e-4;
  int epochs = 4;
  int rollout_len = 2048;
  int minibatch_size = 64;

  // advantage regularization by the critic's standardized moments
  double w_skew = 0.1;
  double w_kurt = 0.1;

  // Landscape-PPO penalties
  double lambda_cvar = 0.1;
  double lambda_kurt = 0.01;
  double lambda_skew = 0.01;
  double cvar_alpha = 0.1;
  LandscapeSource landscape_source = LandscapeSource::CriticAtoms;

  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  double critic_coef = 0.5;
  double kappa = 1.0;
  bool advantage_standardization = true;

  int n_quantiles = 51;
  std::vector<int> hidden_sizes{64, 64};
  double init_log_std = -0.5;

  // CVaR rejection sampling during training (algo crs)
  int crs_candidates = 8;
  int crs_eval_episodes = 8;
  double crs_alpha = 0.1;

  bool landscape_enabled() const { return lambda_cvar > 0 || lambda_kurt > 0 || lambda_skew > 0; }
};

void validate(const PpoConfig& config);

/// Applies the algorithm's fixed choices: ppo/crs use one atom and no
/// penalties, dppo uses quantiles and no penalties, dppo-kurt/dppo-skew keep
/// only their weight, landscape-ppo keeps only the lambdas.
PpoConfig resolve_for_algo(PpoConfig config, Algo algo);

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Diagonal Gaussian with a state-independent, trainable log-std.
struct GaussianPolicy {
  Mlp mean;
  Eigen::VectorXd log_std;

  bool operator==(const GaussianPolicy&) const = default;
};

double gaussian_log_prob(const Eigen::VectorXd& action, const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std);
double gaussian_entropy(const Eigen::VectorXd& log_std);
PolicyFn make_policy_fn(const GaussianPolicy& policy);

struct AgentParams {
  GaussianPolicy policy;
  Mlp critic;

  bool operator==(const AgentParams&) const = default;
};

/// Parameters plus optimizer state: everything a forked update needs.
struct AgentState {
  AgentParams params;
  AdamState<double> adam;

  bool operator==(const AgentState&) const = default;
};

/// Layout: [policy mean net | log_std | critic net].
Eigen::VectorXd flatten(const AgentParams& params);
void assign_flat(AgentParams& params, const Eigen::VectorXd& flat);
Eigen::Index policy_param_count(const GaussianPolicy& policy);

/// Hash of the raw parameter bytes; used to assert purity of updates.
std::uint64_t checksum(const AgentParams& params);

AgentState init_agent(const EnvSpec& spec, const PpoConfig& config, Rng& rng);

TensorDocument to_document(const AgentState& state);
AgentState agent_from_document(const TensorDocument& doc);

struct RolloutBatch {
  Eigen::MatrixXd states;   // obs_dim x T
  Eigen::MatrixXd actions;  // act_dim x T, unclamped samples
  Eigen::VectorXd rewards;
  std::vector<std::uint8_t> dones;
  Eigen::VectorXd old_log_probs;
  Eigen::MatrixXd atoms;  // K x T, critic at collection time
  double bootstrap_value = 0.0;

  Eigen::VectorXd advantages;
  Eigen::VectorXd value_targets;  // GAE targets A_t + V_t
  Eigen::VectorXd returns;        // discounted return-to-go, the critic's targets
  std::vector<double> episode_returns;

  Eigen::Index size() const { return rewards.size(); }
};

/// Environment position carried between successive rollouts.
struct EnvCursor {
  EnvState state;
  double running_return = 0.0;
};

EnvCursor start_cursor(const EnvSpec& spec, Rng& rng);

/// Collects rollout_len transitions with the stochastic policy; episodes that
/// end are reset in place. Advantages are not computed here.
RolloutBatch collect_rollout(const EnvSpec& spec, const AgentParams& params, int rollout_len, EnvCursor& cursor,
                             Rng& rng);

struct GaeResult {
  Eigen::VectorXd advantages;
  Eigen::VectorXd value_targets;
};

/// delta_t = r_t + gamma (1 - done_t) V_{t+1} - V_t,
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}; V_T is bootstrap_value.
GaeResult compute_gae(const Eigen::VectorXd& rewards, const Eigen::VectorXd& values,
                      std::span<const std::uint8_t> dones, double bootstrap_value, double gamma, double lambda);

Eigen::VectorXd discounted_returns(const Eigen::VectorXd& rewards, std::span<const std::uint8_t> dones,
                                   double bootstrap_value, double gamma);

/// Shifts and scales to mean 0, population std 1 (no-op on constant input).
void standardize(Eigen::VectorXd& values);

/// A_t <- A_t - w_skew * Skew(Z(s_t)) - w_kurt * Kurt(Z(s_t)), in one pass.
RolloutBatch regularize_advantages(RolloutBatch batch, double w_skew, double w_kurt);

/// GAE, critic targets, optional standardization, then moment regularization.
void finalize_batch(RolloutBatch& batch, const PpoConfig& config);

struct SurrogateResult {
  double loss = 0.0;
  double objective = 0.0;  // mean clipped objective
  double entropy = 0.0;
  Eigen::VectorXd grad;  // over [policy mean net | log_std]
  int excluded = 0;      // samples dropped for a non-finite ratio
  double clip_fraction = 0.0;
};

/// Clipped surrogate over explicit slice data.
SurrogateResult clipped_surrogate(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                  const Eigen::VectorXd& old_log_probs, const Eigen::VectorXd& advantages,
                                  const GaussianPolicy& policy, double clip_eps, double entropy_coef);

SurrogateResult ppo_surrogate(const RolloutBatch& batch, std::span<const Eigen::Index> indices,
                              const GaussianPolicy& policy, double clip_eps, double entropy_coef);

struct LandscapeResult {
  SurrogateResult surrogate;
  double loss = 0.0;
  double penalty_cvar = 0.0;  // lambda_cvar * mean(-CVaR)
  double penalty_kurt = 0.0;
  double penalty_skew = 0.0;
  Eigen::VectorXd advantage_shift;  // lambda_cvar * (CVaR - mean), per slice sample
};

LandscapeResult landscape_ppo_loss(const RolloutBatch& batch, std::span<const Eigen::Index> indices,
                                   const GaussianPolicy& policy, const Mlp& critic, const PpoConfig& config);

struct CriticLossResult {
  double loss = 0.0;
  Eigen::VectorXd grad;  // over the critic's flat parameters
};

CriticLossResult critic_loss(const RolloutBatch& batch, std::span<const Eigen::Index> indices, const Mlp& critic,
                             double kappa);

struct UpdateStats {
  double loss_total = 0.0;
  double loss_policy = 0.0;
  double loss_critic = 0.0;
  double grad_norm = 0.0;  // before clipping
  int excluded = 0;
};

struct UpdateResult {
  AgentState next;
  UpdateStats stats;
  bool rejected = false;
  std::string diagnostic;
};

/// One joint actor-critic Adam step on one minibatch. Never mutates inputs.
UpdateResult update_once(const AgentState& state, const RolloutBatch& batch, std::span<const Eigen::Index> indices,
                         const PpoConfig& config);

/// Minibatches from consecutive shuffles of [0, batch_size); each shuffle is
/// consumed without replacement before the next one starts.
std::vector<std::vector<Eigen::Index>> draw_minibatches(Eigen::Index batch_size, int minibatch_size, int count,
                                                        Rng& rng);

/// Undiscounted returns of deterministic (mean-action) episodes.
std::vector<double> evaluate_policy(const EnvSpec& spec, const GaussianPolicy& policy, int episodes, Rng& rng);
double episode_return(const EnvSpec& spec, const GaussianPolicy& policy, Rng& rng, bool deterministic);

struct MetricsRow {
  long step = 0;
  double episode_return_mean = 0.0;
  double episode_return_std = 0.0;
  double loss_total = 0.0;
  double loss_policy = 0.0;
  double loss_critic = 0.0;
  double mean_skew = 0.0;
  double mean_kurt = 0.0;
  double mean_cvar = 0.0;
  double grad_norm = 0.0;
};

inline constexpr std::string_view kMetricsHeader =
    "step,episode_return_mean,episode_return_std,loss_total,loss_policy,loss_critic,mean_skew,mean_kurt,mean_cvar,"
    "grad_norm";

std::string metrics_csv(const std::vector<MetricsRow>& rows);

struct Checkpoint {
  long step = 0;
  AgentState state;
};

enum class RunStatus { Completed, Diverged, Aborted };
std::string_view status_name(RunStatus status);

struct TrainOptions {
  long total_steps = 0;
  long checkpoint_interval = 0;  // 0: initial and final only
};

struct TrainResult {
  RunStatus status = RunStatus::Completed;
  std::string message;
  std::vector<Checkpoint> checkpoints;
  std::vector<MetricsRow> metrics;
  AgentState final_state;
  long steps = 0;
};

/// Standard PPO outer loop for the given algorithm. Deterministic in seed.
TrainResult train(const EnvSpec& spec, Algo algo, const PpoConfig& config, std::uint64_t seed,
                  const TrainOptions& options);

}  // namespace qppo
