#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "qppo/errors.hpp"
#include "qppo/experiment.hpp"

using namespace qppo;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qppo_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

ExperimentConfig tiny(const fs::path& out) {
  ExperimentConfig c;
  c.env = make_env_spec("pointmass");
  c.algos = {Algo::Dppo};
  c.seeds = {1};
  c.total_steps = 512;
  c.checkpoint_interval = 256;
  c.ppo.rollout_len = 256;
  c.ppo.minibatch_size = 32;
  c.ppo.epochs = 1;
  c.ppo.hidden_sizes = {8};
  c.ppo.n_quantiles = 5;
  c.stability.n_forks = 6;
  c.stability.eval_episodes = 1;
  c.stability.permutations = 1000;
  c.stability.final_eval_episodes = 2;
  c.stability.threads = 1;
  c.output_dir = out.string();
  return c;
}

// A manifest over hand-written artifacts: one run per (algo, sigma, eval).
fs::path synthetic_manifest(const fs::path& root, const std::string& env,
                            const std::vector<std::tuple<std::string, int, double, double>>& runs) {
  json m{{"tool_version", kToolVersion}, {"config_hash", "0"}, {"config", {{"env", {{"name", env}}}}}};
  json list = json::array();
  for (const auto& [algo, seed, sigma, eval] : runs) {
    const std::string dir = algo + "/" + std::to_string(seed);
    if (sigma >= 0) {
      spit(root / dir / "stability.json", json{{"sigma", sigma}, {"N", 256}, {"E", 8}}.dump());
      spit(root / dir / "evaluation.json", json{{"final_eval_return_mean", eval}}.dump());
    }
    list.push_back({{"algo", algo}, {"seed", seed}, {"status", "completed"}, {"dir", dir}});
  }
  m["runs"] = list;
  spit(root / "manifest.json", m.dump(2));
  return root / "manifest.json";
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(QPPO_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config parsing is strict and reports every bad field") {
  const json doc = json::parse(R"({
    "env": {"name": "pointmass", "sigma_n": "big", "gravity": 3},
    "seeds": [1, 1],
    "ppo": {"lr": 0.001, "learning_rate": 0.1},
    "stability": {"n_forks": 1},
    "extra": true
  })");
  try {
    parse_config(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("env.sigma_n") != std::string::npos);
    CHECK(msg.find("env.gravity: unknown key") != std::string::npos);
    CHECK(msg.find("seeds: must be distinct") != std::string::npos);
    CHECK(msg.find("ppo.learning_rate: unknown key") != std::string::npos);
    CHECK(msg.find("stability.n_forks") != std::string::npos);
    CHECK(msg.find("extra: unknown key") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(json::parse(R"({"env": {"name": "bandit", "dt": 0.1}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"algos": ["ppo", "sac"]})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"seeds": []})")), ConfigError);
}

TEST_CASE("config defaults and round-trip") {
  const ExperimentConfig c = parse_config(json::object());
  CHECK(c.ppo.n_quantiles == 51);
  CHECK(c.stability.n_forks == 256);
  const ExperimentConfig custom = parse_config(json::parse(
      R"({"env": {"name": "pendulum", "g": 9.81}, "algo": "dppo-kurt", "seeds": [3, 4], "ppo": {"w_kurt": 0.25}})"));
  CHECK(custom.env.pendulum.g == 9.81);
  CHECK(custom.algos == std::vector<Algo>{Algo::DppoKurt});
  CHECK(to_json(parse_config(to_json(custom))) == to_json(custom));
  CHECK(config_hash(custom) == config_hash(parse_config(to_json(custom))));
  CHECK(config_hash(custom) != config_hash(c));
}

TEST_CASE("run with zero steps writes an initial checkpoint and no metrics rows") {
  const fs::path out = scratch("zero");
  ExperimentConfig c = tiny(out);
  c.total_steps = 0;
  const RunManifest m = run_experiment(c);
  REQUIRE(m.runs.size() == 1);
  CHECK(m.all_completed());
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(slurp(out / "dppo/1/metrics.csv") == std::string(kMetricsHeader) + "\n");
  CHECK(fs::exists(out / "dppo/1/checkpoints/step_0000000000.ckpt"));
  for (const auto& a : m.runs[0].artifacts) CHECK(fs::exists(out / m.runs[0].dir / a));
}

TEST_CASE("run matrix writes every artifact and is byte-reproducible") {
  const fs::path a = scratch("matrix_a"), b = scratch("matrix_b");
  ExperimentConfig ca = tiny(a);
  ca.algos = {Algo::Ppo, Algo::DppoKurt};
  ca.seeds = {1, 2, 3};
  ExperimentConfig cb = ca;
  cb.output_dir = b.string();
  const RunManifest ma = run_experiment(ca);
  run_experiment(cb);
  CHECK(ma.runs.size() == 6);
  CHECK(ma.all_completed());
  for (const auto& r : ma.runs) {
    for (const char* f : {"metrics.csv", "post_update.csv", "alignment.json", "stability.json", "evaluation.json"}) {
      REQUIRE(fs::exists(a / r.dir / f));
      CHECK(slurp(a / r.dir / f) == slurp(b / r.dir / f));
    }
    for (const auto& art : r.artifacts) CHECK(fs::exists(a / r.dir / art));
  }
  CHECK(slurp(a / "ppo/1/post_update.csv").rfind("update_id,post_return,post_value\n", 0) == 0);
  const json st = json::parse(slurp(a / "ppo/1/stability.json"));
  CHECK(st.at("N") == 6);
  CHECK(st.at("E") == 1);
  const json al = json::parse(slurp(a / "ppo/1/alignment.json"));
  CHECK(al.at("mode") == "value-level");
  CHECK(al.at("n") == 6);

  // re-running from the embedded config reproduces the artifacts
  const json embedded = json::parse(slurp(a / "manifest.json")).at("config");
  ExperimentConfig again = parse_config(embedded);
  const fs::path c = scratch("matrix_c");
  again.output_dir = c.string();
  run_experiment(again);
  CHECK(slurp(c / "dppo-kurt/2/post_update.csv") == slurp(a / "dppo-kurt/2/post_update.csv"));
}

TEST_CASE("compare examples") {
  const fs::path root = scratch("compare");
  const auto single = synthetic_manifest(root / "single", "pointmass", {{"ppo", 1, 1.5, -3.0}});
  const ComparisonTable t1 = compare({single});
  REQUIRE(t1.rows.size() == 1);
  CHECK(t1.rows[0].min_sigma);
  CHECK(t1.rows[0].complete);

  const auto two = synthetic_manifest(root / "two", "pointmass", {{"dppo", 1, 1.0, -3.0}, {"dppo-kurt", 1, 2.0, -2.0}});
  const ComparisonTable t2 = compare({two});
  REQUIRE(t2.rows.size() == 2);
  CHECK(t2.rows[0].min_sigma);
  CHECK_FALSE(t2.rows[1].min_sigma);

  const auto walker =
      synthetic_manifest(root / "walker", "walker", {{"ppo", 1, 799.44, 100.0}, {"dppo-kurt", 1, 196.06, 95.0}});
  const ComparisonTable t3 = compare({walker});
  REQUIRE(t3.rows[1].reduction_vs_ppo_pct);
  CHECK(*t3.rows[1].reduction_vs_ppo_pct == doctest::Approx(75.48).epsilon(1e-3));
  CHECK(t3.to_text().find("75.5%") != std::string::npos);
  CHECK(t3.to_csv().rfind("env,algo,seeds,eval_return_mean", 0) == 0);

  const auto missing = synthetic_manifest(root / "missing", "pointmass", {{"ppo", 1, 1.0, 0.0}, {"ppo", 2, -1, 0}});
  const ComparisonTable t4 = compare({missing});
  REQUIRE(t4.rows.size() == 1);
  CHECK_FALSE(t4.rows[0].complete);
  CHECK(t4.rows[0].seeds == 2);
  CHECK(t4.rows[0].seeds_with_artifacts == 1);
  CHECK(t4.to_text().find("incomplete") != std::string::npos);

  // pure function of its inputs
  CHECK(compare({two, walker}).to_csv() == compare({two, walker}).to_csv());
  CHECK_THROWS_AS(compare({}), UsageError);
}

TEST_CASE("sweep-alignment over saved checkpoints") {
  const fs::path out = scratch("sweep");
  ExperimentConfig c = tiny(out);
  c.total_steps = 768;
  c.checkpoint_interval = 256;
  run_experiment(c);
  const json s = sweep_alignment(c);
  REQUIRE(s.size() == 1);
  CHECK(s[0].at("checkpoints").size() == 4);
  CHECK(s[0].at("variance_level").at("mode") == "variance-level");
  CHECK(fs::exists(out / "dppo/1/alignment_sweep.json"));
  CHECK(json::parse(slurp(out / "dppo/1/alignment_sweep.json")) == s[0]);

  const fs::path few = scratch("sweep_few");
  ExperimentConfig cf = tiny(few);
  cf.total_steps = 256;
  cf.checkpoint_interval = 0;
  const json sf = sweep_alignment(cf);  // trains because nothing is on disk
  CHECK(sf[0].at("checkpoints").size() == 2);
  CHECK(sf[0].at("variance_level").is_null());
  CHECK(sf[0].contains("notice"));
}

TEST_CASE("sweep-alignment with a null update on a deterministic env is degenerate") {
  const fs::path out = scratch("sweep_null");
  ExperimentConfig c = tiny(out);
  c.env.pointmass.sigma_n = 0;
  c.env.pointmass.init_range = 0;
  c.ppo.lr = 0.0;
  c.total_steps = 768;
  // each fork's own minibatch has different states, so only a shared probe
  // set makes the value spread vanish under a null update
  c.stability.value_states = PostValueStates::Probe;
  const json s = sweep_alignment(c);
  for (const auto& cp : s[0].at("checkpoints")) {
    CHECK(cp.at("sigma2_return") == 0.0);
    CHECK(cp.at("sigma2_value") == 0.0);
    CHECK(cp.at("value_level").at("degenerate") == true);
  }
  CHECK(s[0].at("variance_level").at("degenerate") == true);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch("cli");
  CHECK(run_cli("print-config") == 0);
  CHECK(run_cli("") != 0);
  spit(dir / "bad.json", R"({"ppo": {"lr": "fast"}})");
  CHECK(run_cli("run " + (dir / "bad.json").string()) == 2);

  json cfg = to_json(tiny(dir / "out"));
  cfg["total_steps"] = 0;
  spit(dir / "ok.json", cfg.dump());
  CHECK(run_cli("run " + (dir / "ok.json").string()) == 0);
  CHECK(fs::exists(dir / "out/manifest.json"));

  const std::string env = "QPPO_OUTPUT_DIR=" + (dir / "elsewhere").string() + " ";
  const std::string cmd = env + QPPO_CLI + " run " + (dir / "ok.json").string() + " > /dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "elsewhere/manifest.json"));

  CHECK(run_cli("compare " + (dir / "out/manifest.json").string() + " --csv " + (dir / "table.csv").string()) == 0);
  CHECK(fs::exists(dir / "table.csv"));
}
