#include "qppo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "qppo/errors.hpp"

namespace qppo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Reads typed fields from one JSON object, collecting diagnostics instead of
/// throwing so every bad field is reported at once.
class FieldReader {
 public:
  FieldReader(const json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) errors_.push_back(path_ + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return;
    const json& v = obj_.at(key);
    const std::string where = path_.empty() ? key : path_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return fail(where, "expected true or false");
      out = v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) return fail(where, "expected a string");
      out = v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return fail(where, "expected a number");
      out = v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return fail(where, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned() || v.get<long long>() >= 0) out = v.get<T>();
        else fail(where, "expected a non-negative integer");
      } else {
        out = v.get<T>();
      }
    } else {
      using E = typename T::value_type;
      if (!v.is_array()) return fail(where, "expected an array");
      T tmp;
      for (const auto& e : v) {
        if (!e.is_number_integer() || (std::is_unsigned_v<E> && e.get<long long>() < 0))
          return fail(where, "expected an array of non-negative integers");
        tmp.push_back(e.get<E>());
      }
      out = std::move(tmp);
    }
  }

  void known(const std::string& key) { seen_.insert(key); }

  void finish() {
    if (!obj_.is_object()) return;
    for (const auto& [k, v] : obj_.items())
      if (!seen_.contains(k)) fail(path_.empty() ? k : path_ + "." + k, "unknown key");
  }

  void fail(const std::string& where, const std::string& why) { errors_.push_back(where + ": " + why); }

 private:
  const json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

void parse_env(const json& j, EnvSpec& env, std::vector<std::string>& errors) {
  std::string name = env.name;
  if (j.is_object() && j.contains("name")) {
    if (!j.at("name").is_string()) {
      errors.push_back("env.name: expected a string");
      return;
    }
    name = j.at("name").get<std::string>();
  }
  try {
    env = make_env_spec(name);
  } catch (const ConfigError& e) {
    errors.push_back(std::string("env.name: ") + e.what());
    return;
  }
  FieldReader r(j, "env", errors);
  r.known("name");
  r.get("horizon", env.horizon);
  switch (env.kind) {
    case EnvKind::Bandit: {
      auto& b = env.bandit;
      r.get("weight", b.weight);
      r.get("mu1", b.mu1);
      r.get("sd1", b.sd1);
      r.get("mu2", b.mu2);
      r.get("sd2", b.sd2);
      break;
    }
    case EnvKind::PointMass: {
      auto& p = env.pointmass;
      r.get("dt", p.dt);
      r.get("force", p.force);
      r.get("sigma_n", p.sigma_n);
      r.get("action_cost", p.action_cost);
      r.get("init_range", p.init_range);
      r.get("heavy_tail_reward", p.heavy_tail_reward);
      r.get("tail_p", p.tail_p);
      r.get("core_sd", p.core_sd);
      r.get("tail_sd", p.tail_sd);
      break;
    }
    case EnvKind::Pendulum: {
      auto& p = env.pendulum;
      r.get("g", p.g);
      r.get("length", p.length);
      r.get("mass", p.mass);
      r.get("dt", p.dt);
      r.get("torque_scale", p.torque_scale);
      r.get("torque_noise", p.torque_noise);
      r.get("max_speed", p.max_speed);
      break;
    }
  }
  r.finish();
  try {
    validate(env);
  } catch (const ConfigError& e) {
    errors.push_back(std::string("env: ") + e.what());
  }
}

json env_json(const EnvSpec& env) {
  json j{{"name", env.name}, {"horizon", env.horizon}};
  switch (env.kind) {
    case EnvKind::Bandit: {
      const auto& b = env.bandit;
      j.update({{"weight", b.weight}, {"mu1", b.mu1}, {"sd1", b.sd1}, {"mu2", b.mu2}, {"sd2", b.sd2}});
      break;
    }
    case EnvKind::PointMass: {
      const auto& p = env.pointmass;
      j.update({{"dt", p.dt},
                {"force", p.force},
                {"sigma_n", p.sigma_n},
                {"action_cost", p.action_cost},
                {"init_range", p.init_range},
                {"heavy_tail_reward", p.heavy_tail_reward},
                {"tail_p", p.tail_p},
                {"core_sd", p.core_sd},
                {"tail_sd", p.tail_sd}});
      break;
    }
    case EnvKind::Pendulum: {
      const auto& p = env.pendulum;
      j.update({{"g", p.g},
                {"length", p.length},
                {"mass", p.mass},
                {"dt", p.dt},
                {"torque_scale", p.torque_scale},
                {"torque_noise", p.torque_noise},
                {"max_speed", p.max_speed}});
      break;
    }
  }
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string checkpoint_name(long step) {
  std::ostringstream os;
  os << "step_" << std::setw(10) << std::setfill('0') << step << ".ckpt";
  return os.str();
}

int resolve_threads(int threads) {
  if (threads > 0) return threads;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

PostUpdateOptions fork_options(const StabilityConfig& s, std::string checkpoint_id) {
  PostUpdateOptions o;
  o.n_forks = s.n_forks;
  o.eval_episodes = s.eval_episodes;
  o.value_states = s.value_states;
  o.probe_states = s.probe_states;
  o.threads = resolve_threads(s.threads);
  o.checkpoint_id = std::move(checkpoint_id);
  return o;
}

/// Fresh rollout under the checkpoint's stochastic policy, finalized the way
/// the algorithm finalizes its training batches.
RolloutBatch measurement_rollout(const EnvSpec& env, const AgentState& state, const PpoConfig& cfg, Rng rng) {
  EnvCursor cursor = start_cursor(env, rng);
  RolloutBatch batch = collect_rollout(env, state.params, cfg.rollout_len, cursor, rng);
  finalize_batch(batch, cfg);
  return batch;
}

std::string fmt_double(double v, int precision = 17) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string fmt_fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  std::vector<std::string> errors;
  FieldReader top(doc, "", errors);

  top.known("env");
  if (doc.is_object() && doc.contains("env")) parse_env(doc.at("env"), c.env, errors);

  top.known("algos");
  if (doc.is_object() && doc.contains("algos")) {
    const json& a = doc.at("algos");
    if (!a.is_array() || a.empty()) {
      errors.push_back("algos: expected a non-empty array of algorithm names");
    } else {
      c.algos.clear();
      for (const auto& e : a) {
        try {
          if (!e.is_string()) throw ConfigError("expected a string");
          const Algo algo = parse_algo(e.get<std::string>());
          if (std::find(c.algos.begin(), c.algos.end(), algo) != c.algos.end())
            throw ConfigError("duplicate algo " + e.get<std::string>());
          c.algos.push_back(algo);
        } catch (const ConfigError& err) {
          errors.push_back(std::string("algos: ") + err.what());
        }
      }
    }
  }
  top.known("algo");
  if (doc.is_object() && doc.contains("algo")) {
    if (doc.contains("algos")) {
      errors.push_back("algo: give either algo or algos, not both");
    } else {
      try {
        if (!doc.at("algo").is_string()) throw ConfigError("expected a string");
        c.algos = {parse_algo(doc.at("algo").get<std::string>())};
      } catch (const ConfigError& err) {
        errors.push_back(std::string("algo: ") + err.what());
      }
    }
  }
  top.get("seeds", c.seeds);
  top.get("total_steps", c.total_steps);
  top.get("checkpoint_interval", c.checkpoint_interval);
  top.get("output_dir", c.output_dir);

  top.known("ppo");
  if (doc.is_object() && doc.contains("ppo")) {
    FieldReader r(doc.at("ppo"), "ppo", errors);
    auto& p = c.ppo;
    r.get("gamma", p.gamma);
    r.get("gae_lambda", p.gae_lambda);
    r.get("clip_eps", p.clip_eps);
    r.get("lr", p.lr);
    r.get("epochs", p.epochs);
    r.get("rollout_len", p.rollout_len);
    r.get("minibatch_size", p.minibatch_size);
    r.get("w_skew", p.w_skew);
    r.get("w_kurt", p.w_kurt);
    r.get("lambda_cvar", p.lambda_cvar);
    r.get("lambda_kurt", p.lambda_kurt);
    r.get("lambda_skew", p.lambda_skew);
    r.get("cvar_alpha", p.cvar_alpha);
    std::string source = p.landscape_source == LandscapeSource::CriticAtoms ? "critic-atoms" : "sampled-returns";
    r.get("landscape_source", source);
    if (source == "critic-atoms") p.landscape_source = LandscapeSource::CriticAtoms;
    else if (source == "sampled-returns") p.landscape_source = LandscapeSource::SampledReturns;
    else r.fail("ppo.landscape_source", "expected critic-atoms or sampled-returns");
    r.get("entropy_coef", p.entropy_coef);
    r.get("max_grad_norm", p.max_grad_norm);
    r.get("critic_coef", p.critic_coef);
    r.get("kappa", p.kappa);
    r.get("advantage_standardization", p.advantage_standardization);
    r.get("n_quantiles", p.n_quantiles);
    r.get("hidden_sizes", p.hidden_sizes);
    r.get("init_log_std", p.init_log_std);
    r.finish();
  }

  top.known("stability");
  if (doc.is_object() && doc.contains("stability")) {
    FieldReader r(doc.at("stability"), "stability", errors);
    auto& s = c.stability;
    r.get("n_forks", s.n_forks);
    r.get("eval_episodes", s.eval_episodes);
    r.get("crs_candidates", s.crs_candidates);
    r.get("crs_alpha", s.crs_alpha);
    r.get("permutations", s.permutations);
    std::string states = s.value_states == PostValueStates::Minibatch ? "minibatch" : "probe";
    r.get("post_value_states", states);
    if (states == "minibatch") s.value_states = PostValueStates::Minibatch;
    else if (states == "probe") s.value_states = PostValueStates::Probe;
    else r.fail("stability.post_value_states", "expected minibatch or probe");
    r.get("probe_states", s.probe_states);
    r.get("final_eval_episodes", s.final_eval_episodes);
    r.get("threads", s.threads);
    r.finish();
  }
  top.finish();

  c.ppo.crs_candidates = c.stability.crs_candidates;
  c.ppo.crs_alpha = c.stability.crs_alpha;
  c.ppo.crs_eval_episodes = c.stability.eval_episodes;

  if (c.seeds.empty()) errors.push_back("seeds: must not be empty");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
    errors.push_back("seeds: must be distinct");
  if (c.total_steps < 0) errors.push_back("total_steps: must be non-negative");
  if (c.checkpoint_interval < 0) errors.push_back("checkpoint_interval: must be non-negative");
  if (c.output_dir.empty()) errors.push_back("output_dir: must not be empty");
  const auto& s = c.stability;
  if (s.n_forks < 2) errors.push_back("stability.n_forks: must be >= 2");
  if (s.eval_episodes < 1) errors.push_back("stability.eval_episodes: must be >= 1");
  if (s.permutations < 1000) errors.push_back("stability.permutations: must be >= 1000");
  if (s.probe_states < 1) errors.push_back("stability.probe_states: must be >= 1");
  if (s.final_eval_episodes < 1) errors.push_back("stability.final_eval_episodes: must be >= 1");
  if (s.threads < 0) errors.push_back("stability.threads: must be >= 0");
  try {
    validate(c.ppo);
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }

  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) { return parse_config(read_json(path)); }

json to_json(const ExperimentConfig& c) {
  json algos = json::array();
  for (Algo a : c.algos) algos.push_back(std::string(algo_name(a)));
  const auto& p = c.ppo;
  const auto& s = c.stability;
  return json{
      {"env", env_json(c.env)},
      {"algos", algos},
      {"seeds", c.seeds},
      {"total_steps", c.total_steps},
      {"checkpoint_interval", c.checkpoint_interval},
      {"output_dir", c.output_dir},
      {"ppo",
       {{"gamma", p.gamma},
        {"gae_lambda", p.gae_lambda},
        {"clip_eps", p.clip_eps},
        {"lr", p.lr},
        {"epochs", p.epochs},
        {"rollout_len", p.rollout_len},
        {"minibatch_size", p.minibatch_size},
        {"w_skew", p.w_skew},
        {"w_kurt", p.w_kurt},
        {"lambda_cvar", p.lambda_cvar},
        {"lambda_kurt", p.lambda_kurt},
        {"lambda_skew", p.lambda_skew},
        {"cvar_alpha", p.cvar_alpha},
        {"landscape_source",
         p.landscape_source == LandscapeSource::CriticAtoms ? "critic-atoms" : "sampled-returns"},
        {"entropy_coef", p.entropy_coef},
        {"max_grad_norm", p.max_grad_norm},
        {"critic_coef", p.critic_coef},
        {"kappa", p.kappa},
        {"advantage_standardization", p.advantage_standardization},
        {"n_quantiles", p.n_quantiles},
        {"hidden_sizes", p.hidden_sizes},
        {"init_log_std", p.init_log_std}}},
      {"stability",
       {{"n_forks", s.n_forks},
        {"eval_episodes", s.eval_episodes},
        {"crs_candidates", s.crs_candidates},
        {"crs_alpha", s.crs_alpha},
        {"permutations", s.permutations},
        {"post_value_states", s.value_states == PostValueStates::Minibatch ? "minibatch" : "probe"},
        {"probe_states", s.probe_states},
        {"final_eval_episodes", s.final_eval_episodes},
        {"threads", s.threads}}},
  };
}

std::string config_hash(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("output_dir");
  j["stability"].erase("threads");  // scheduling does not change results
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(j.dump());
  return os.str();
}

bool RunManifest::all_completed() const {
  return std::all_of(runs.begin(), runs.end(), [](const SeedRun& r) { return r.status == RunStatus::Completed; });
}

json RunManifest::to_json() const {
  json runs_json = json::array();
  for (const auto& r : runs)
    runs_json.push_back({{"algo", r.algo},
                         {"seed", r.seed},
                         {"status", std::string(status_name(r.status))},
                         {"message", r.message},
                         {"dir", r.dir},
                         {"artifacts", r.artifacts}});
  return {{"tool_version", tool_version}, {"config_hash", config_hash}, {"config", config}, {"runs", runs_json}};
}

std::string post_update_csv(const PostUpdateDistributions& dist) {
  std::ostringstream os;
  os << "update_id,post_return,post_value\n" << std::setprecision(17);
  for (const auto& s : dist.samples) os << s.update_id << ',' << s.post_return << ',' << s.post_value << '\n';
  return os.str();
}

json alignment_json(const AlignmentReport& rep) {
  return {{"r", rep.pearson_r},
          {"p", rep.p_value},
          {"n", rep.n},
          {"mode", std::string(mode_name(rep.mode))},
          {"degenerate", rep.degenerate}};
}

json stability_json(const PostUpdateDistributions& dist) {
  return {{"sigma", stability_sigma(dist)},
          {"N", static_cast<int>(dist.samples.size())},
          {"E", dist.eval_episodes},
          {"checkpoint_id", dist.checkpoint_id},
          {"invalid", dist.invalid_count}};
}

SeedRun measure_and_write(const ExperimentConfig& config, Algo algo, std::uint64_t seed, const TrainResult& trained,
                          const fs::path& root) {
  SeedRun run;
  run.algo = std::string(algo_name(algo));
  run.seed = seed;
  run.status = trained.status;
  run.message = trained.message;
  run.dir = (fs::path(run.algo) / std::to_string(seed)).generic_string();
  const fs::path dir = root / run.dir;
  fs::create_directories(dir / "checkpoints");

  write_text(dir / "metrics.csv", metrics_csv(trained.metrics));
  run.artifacts.push_back("metrics.csv");
  for (const auto& ck : trained.checkpoints) {
    const std::string name = "checkpoints/" + checkpoint_name(ck.step);
    to_document(ck.state).save((dir / name).string());
    run.artifacts.push_back(name);
  }
  if (trained.status != RunStatus::Completed) return run;

  try {
    const PpoConfig cfg = resolve_for_algo(config.ppo, algo);
    const Rng root_rng(seed);
    const AgentState& final_state = trained.final_state;
    const RolloutBatch batch = measurement_rollout(config.env, final_state, cfg, root_rng.derive("stability-rollout"));
    const std::string checkpoint_id = checkpoint_name(trained.steps);
    const PostUpdateDistributions dist = sample_post_update(config.env, final_state, batch, cfg,
                                                            fork_options(config.stability, checkpoint_id),
                                                            root_rng.derive("stability-forks"));
    write_text(dir / "post_update.csv", post_update_csv(dist));
    run.artifacts.push_back("post_update.csv");

    Rng perm_rng = root_rng.derive("permutation");
    const AlignmentReport rep = alignment_report(dist, config.stability.permutations, perm_rng);
    write_text(dir / "alignment.json", alignment_json(rep).dump(2) + "\n");
    run.artifacts.push_back("alignment.json");

    write_text(dir / "stability.json", stability_json(dist).dump(2) + "\n");
    run.artifacts.push_back("stability.json");

    Rng eval_rng = root_rng.derive("final-eval");
    const auto returns = evaluate_policy(config.env, final_state.params.policy,
                                         config.stability.final_eval_episodes, eval_rng);
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(returns.size());
    json eval{{"final_eval_return_mean", mean}, {"episodes", returns.size()}, {"returns", returns}};
    write_text(dir / "evaluation.json", eval.dump(2) + "\n");
    run.artifacts.push_back("evaluation.json");
  } catch (const std::exception& e) {
    run.status = RunStatus::Aborted;
    run.message = std::string("measurement failed: ") + e.what();
  }
  return run;
}

RunManifest run_experiment(const ExperimentConfig& config) {
  const fs::path root(config.output_dir);
  fs::create_directories(root);
  RunManifest manifest;
  manifest.config = to_json(config);
  manifest.config_hash = config_hash(config);

  for (Algo algo : config.algos) {
    for (std::uint64_t seed : config.seeds) {
      TrainResult trained = train(config.env, algo, config.ppo, seed, {config.total_steps, config.checkpoint_interval});
      manifest.runs.push_back(measure_and_write(config, algo, seed, trained, root));
    }
  }
  write_text(root / "manifest.json", manifest.to_json().dump(2) + "\n");
  return manifest;
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream os;
  os << "env,algo,seeds,eval_return_mean,eval_return_std,sigma_mean,sigma_reduction_vs_ppo_pct,min_sigma,complete\n";
  for (const auto& r : rows)
    os << r.env << ',' << r.algo << ',' << r.seeds << ',' << fmt_double(r.eval_return_mean) << ','
       << fmt_double(r.eval_return_std) << ',' << fmt_double(r.sigma_mean) << ','
       << (r.reduction_vs_ppo_pct ? fmt_double(*r.reduction_vs_ppo_pct) : "") << ',' << (r.min_sigma ? 1 : 0) << ','
       << (r.complete ? 1 : 0) << '\n';
  return os.str();
}

std::string ComparisonTable::to_text() const {
  std::vector<std::vector<std::string>> cells{
      {"env", "algo", "seeds", "eval return", "sigma(R)", "vs ppo", ""}};
  for (const auto& r : rows) {
    std::string flags;
    if (r.min_sigma) flags += "* lowest sigma";
    if (!r.complete) flags += flags.empty() ? "incomplete" : ", incomplete";
    cells.push_back({r.env, r.algo, std::to_string(r.seeds_with_artifacts) + "/" + std::to_string(r.seeds),
                     fmt_fixed(r.eval_return_mean, 2) + " +- " + fmt_fixed(r.eval_return_std, 2),
                     fmt_fixed(r.sigma_mean, 2),
                     r.reduction_vs_ppo_pct ? fmt_fixed(*r.reduction_vs_ppo_pct, 1) + "%" : "-", flags});
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      line += row[c];
      if (c + 1 < row.size()) line += std::string(width[c] - row[c].size() + 2, ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << '\n';
  }
  return os.str();
}

ComparisonTable compare(const std::vector<fs::path>& manifests) {
  if (manifests.empty()) throw UsageError("compare: need at least one manifest");
  struct Acc {
    std::string env, algo;
    int seeds = 0;
    std::vector<double> sigmas, evals;
    bool complete = true;
  };
  std::vector<Acc> groups;
  auto group = [&](const std::string& env, const std::string& algo) -> Acc& {
    for (auto& g : groups)
      if (g.env == env && g.algo == algo) return g;
    groups.push_back({env, algo});
    return groups.back();
  };

  for (const auto& mpath : manifests) {
    const json m = read_json(mpath);
    const fs::path base = mpath.parent_path();
    const std::string env = m.at("config").at("env").at("name").get<std::string>();
    for (const auto& r : m.at("runs")) {
      Acc& g = group(env, r.at("algo").get<std::string>());
      ++g.seeds;
      const fs::path dir = base / r.at("dir").get<std::string>();
      try {
        const double sigma = read_json(dir / "stability.json").at("sigma").get<double>();
        const double ev = read_json(dir / "evaluation.json").at("final_eval_return_mean").get<double>();
        g.sigmas.push_back(sigma);
        g.evals.push_back(ev);
      } catch (const std::exception&) {
        g.complete = false;
      }
    }
  }

  ComparisonTable table;
  for (const auto& g : groups) {
    ComparisonRow row;
    row.env = g.env;
    row.algo = g.algo;
    row.seeds = g.seeds;
    row.seeds_with_artifacts = static_cast<int>(g.sigmas.size());
    row.complete = g.complete;
    if (!g.sigmas.empty()) {
      for (double s : g.sigmas) row.sigma_mean += s;
      row.sigma_mean /= static_cast<double>(g.sigmas.size());
      for (double e : g.evals) row.eval_return_mean += e;
      row.eval_return_mean /= static_cast<double>(g.evals.size());
      row.eval_return_std = g.evals.size() >= 2 ? sample_std(g.evals) : 0.0;
    } else {
      row.sigma_mean = row.eval_return_mean = row.eval_return_std = std::nan("");
      row.complete = false;
    }
    table.rows.push_back(row);
  }

  std::map<std::string, std::size_t> best;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    if (r.seeds_with_artifacts == 0) continue;
    auto it = best.find(r.env);
    if (it == best.end() || r.sigma_mean < table.rows[it->second].sigma_mean) best[r.env] = i;
  }
  for (const auto& [env, i] : best) table.rows[i].min_sigma = true;

  for (auto& r : table.rows) {
    for (const auto& base : table.rows)
      if (base.env == r.env && base.algo == "ppo" && base.seeds_with_artifacts > 0 && base.sigma_mean > 0 &&
          r.seeds_with_artifacts > 0)
        r.reduction_vs_ppo_pct = 100.0 * (base.sigma_mean - r.sigma_mean) / base.sigma_mean;
  }
  return table;
}

json sweep_alignment(const ExperimentConfig& config) {
  const fs::path root(config.output_dir);
  json summary = json::array();
  for (Algo algo : config.algos) {
    const PpoConfig cfg = resolve_for_algo(config.ppo, algo);
    for (std::uint64_t seed : config.seeds) {
      const fs::path dir = root / std::string(algo_name(algo)) / std::to_string(seed);
      const fs::path ckdir = dir / "checkpoints";

      std::vector<Checkpoint> checkpoints;
      if (fs::is_directory(ckdir)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(ckdir))
          if (e.path().extension() == ".ckpt") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
          const std::string stem = f.stem().string();
          const long step = std::stol(stem.substr(stem.find('_') + 1));
          checkpoints.push_back({step, agent_from_document(TensorDocument::load(f.string()))});
        }
      }
      if (checkpoints.empty()) {
        TrainResult trained =
            train(config.env, algo, config.ppo, seed, {config.total_steps, config.checkpoint_interval});
        fs::create_directories(ckdir);
        for (const auto& ck : trained.checkpoints)
          to_document(ck.state).save((ckdir / checkpoint_name(ck.step)).string());
        checkpoints = std::move(trained.checkpoints);
      }

      const Rng sweep_rng = Rng(seed).derive("sweep");
      std::vector<PostUpdateDistributions> dists;
      json per_checkpoint = json::array();
      for (const auto& ck : checkpoints) {
        const auto step = static_cast<std::uint64_t>(ck.step);
        const RolloutBatch batch = measurement_rollout(config.env, ck.state, cfg, sweep_rng.derive("rollout", step));
        PostUpdateDistributions dist =
            sample_post_update(config.env, ck.state, batch, cfg, fork_options(config.stability, checkpoint_name(ck.step)),
                               sweep_rng.derive("forks", step));
        Rng perm_rng = sweep_rng.derive("permutation", step);
        const AlignmentReport rep = alignment_report(dist, config.stability.permutations, perm_rng);
        const auto rets = dist.returns();
        const auto vals = dist.values();
        per_checkpoint.push_back({{"checkpoint_id", dist.checkpoint_id},
                                  {"step", ck.step},
                                  {"sigma2_return", sample_variance(rets)},
                                  {"sigma2_value", sample_variance(vals)},
                                  {"value_level", alignment_json(rep)}});
        dists.push_back(std::move(dist));
      }

      json out{{"algo", std::string(algo_name(algo))}, {"seed", seed}, {"checkpoints", per_checkpoint}};
      if (dists.size() >= 3) {
        Rng perm_rng = sweep_rng.derive("variance-permutation");
        out["variance_level"] = alignment_json(alignment_report(std::span<const PostUpdateDistributions>(dists),
                                                                config.stability.permutations, perm_rng));
      } else {
        out["variance_level"] = nullptr;
        out["notice"] = "variance-level alignment needs at least 3 checkpoints, found " + std::to_string(dists.size());
      }
      fs::create_directories(dir);
      write_text(dir / "alignment_sweep.json", out.dump(2) + "\n");
      summary.push_back(out);
    }
  }
  return summary;
}

}  // namespace qppo
