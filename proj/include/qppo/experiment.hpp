#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qppo/envs.hpp"
#include "qppo/ppo.hpp"
#include "qppo/stability.hpp"

namespace qppo {

inline constexpr const char* kToolVersion = "qppo 0.1.0";
inline constexpr const char* kOutputDirEnv = "QPPO_OUTPUT_DIR";

struct StabilityConfig {
  int n_forks = 256;
  int eval_episodes = 8;
  int crs_candidates = 8;
  double crs_alpha = 0.1;
  int permutations = 10000;
  PostValueStates value_states = PostValueStates::Minibatch;
  int probe_states = 256;
  int final_eval_episodes = 10;
  int threads = 0;  // 0: one per hardware thread
};

struct ExperimentConfig {
  EnvSpec env = make_env_spec("pointmass");
  std::vector<Algo> algos{Algo::Dppo};
  std::vector<std::uint64_t> seeds{1};
  long total_steps = 200000;
  long checkpoint_interval = 50000;
  PpoConfig ppo;
  StabilityConfig stability;
  std::string output_dir = "runs";
};

/// Strict parse: unknown keys and type errors are collected and reported
/// together in one ConfigError, one line per offending field.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved form; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

struct SeedRun {
  std::string algo;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::Completed;
  std::string message;
  std::string dir;  // relative to the manifest
  std::vector<std::string> artifacts;
};

struct RunManifest {
  std::string config_hash;
  std::string tool_version = kToolVersion;
  nlohmann::json config;
  std::vector<SeedRun> runs;

  bool all_completed() const;
  nlohmann::json to_json() const;
};

/// Trains every (algo, seed), measures the final checkpoint and writes
/// output_dir/<algo>/<seed>/{metrics.csv, checkpoints/, post_update.csv,
/// alignment.json, stability.json, evaluation.json} plus output_dir/manifest.json.
RunManifest run_experiment(const ExperimentConfig& config);

/// The artifacts of one (algo, seed) given an already trained result.
SeedRun measure_and_write(const ExperimentConfig& config, Algo algo, std::uint64_t seed, const TrainResult& trained,
                          const std::filesystem::path& root);

std::string post_update_csv(const PostUpdateDistributions& dist);
nlohmann::json alignment_json(const AlignmentReport& report);
nlohmann::json stability_json(const PostUpdateDistributions& dist);

struct ComparisonRow {
  std::string env;
  std::string algo;
  int seeds = 0;
  int seeds_with_artifacts = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double sigma_mean = 0.0;
  std::optional<double> reduction_vs_ppo_pct;
  bool min_sigma = false;
  bool complete = true;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;

  std::string to_csv() const;
  std::string to_text() const;
};

/// Per (env, algo): mean and std of final evaluation return across seeds and
/// mean sigma; the lowest-sigma algorithm per env is flagged. Reads only the
/// given manifests and the artifacts they reference.
ComparisonTable compare(const std::vector<std::filesystem::path>& manifests);

/// Value-level alignment per checkpoint plus one variance-level report when at
/// least three checkpoints exist; writes alignment_sweep.json per (algo, seed).
nlohmann::json sweep_alignment(const ExperimentConfig& config);

}  // namespace qppo
