#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "qppo/errors.hpp"
#include "qppo/experiment.hpp"

namespace {

qppo::ExperimentConfig load_with_env_override(const std::string& path) {
  qppo::ExperimentConfig config = qppo::load_config(path);
  if (const char* dir = std::getenv(qppo::kOutputDirEnv); dir && *dir) config.output_dir = dir;
  return config;
}

int cmd_run(const std::string& path) {
  const auto config = load_with_env_override(path);
  const auto manifest = qppo::run_experiment(config);
  for (const auto& r : manifest.runs) {
    std::cout << r.algo << " seed " << r.seed << ": " << qppo::status_name(r.status);
    if (!r.message.empty()) std::cout << " (" << r.message << ")";
    std::cout << '\n';
  }
  std::cout << "manifest: " << (std::filesystem::path(config.output_dir) / "manifest.json").string() << '\n';
  return manifest.all_completed() ? 0 : 1;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& out) {
  std::vector<std::filesystem::path> manifests(paths.begin(), paths.end());
  const auto table = qppo::compare(manifests);
  std::cout << table.to_text();
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw qppo::ConfigError("cannot write " + out);
    f << table.to_csv();
  }
  return 0;
}

int cmd_sweep(const std::string& path) {
  const auto config = load_with_env_override(path);
  const auto summary = qppo::sweep_alignment(config);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributional PPO experiments and post-update stability measurement"};
  app.set_version_flag("--version", std::string(qppo::kToolVersion));
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "train every (algo, seed) in a config and write artifacts");
  run->add_option("config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);

  std::vector<std::string> manifests;
  std::string csv_out;
  auto* cmp = app.add_subcommand("compare", "tabulate evaluation return and sigma across manifests");
  cmp->add_option("manifests", manifests, "manifest.json files")->required()->check(CLI::ExistingFile);
  cmp->add_option("--csv", csv_out, "also write the table as CSV");

  auto* sweep = app.add_subcommand("sweep-alignment", "alignment reports across a run's checkpoints");
  sweep->add_option("config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);

  auto* print = app.add_subcommand("print-config", "print the fully defaulted config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path);
    if (*cmp) return cmd_compare(manifests, csv_out);
    if (*sweep) return cmd_sweep(config_path);
    if (*print) {
      std::cout << qppo::to_json(qppo::ExperimentConfig{}).dump(2) << '\n';
      return 0;
    }
  } catch (const qppo::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
