// Command-line front end: run experiments, query the state-evolution
// oracle, dump denoiser profiles, compare reports, and replay manifests.
//
// Exit codes: 0 success, 2 config error, 3 divergence in a non-learning
// method, 4 training failure.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uamp/checkpoint.hpp"
#include "uamp/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDivergence = 3;
constexpr int kTrainingFailure = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw uamp::ConfigError("cannot read file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_learning(uamp::Method m) {
  return m == uamp::Method::LdNet || m == uamp::Method::LdNetGuided ||
         m == uamp::Method::LdNetLearnB || m == uamp::Method::LdNetMultiDim;
}

int cmd_run(const std::string& config_path) {
  uamp::ExperimentConfig cfg = uamp::config_from_json(read_file(config_path));
  uamp::ExperimentReport rep = uamp::run_experiment(cfg);
  std::cout << "wrote " << rep.trace_path << "\n"
            << "wrote " << rep.report_path << "\n"
            << "wrote " << rep.manifest_path << "\n";
  if (!rep.checkpoint_path.empty())
    std::cout << "wrote " << rep.checkpoint_path << "\n";
  if (!rep.profile_path.empty()) std::cout << "wrote " << rep.profile_path << "\n";
  std::cout << "final nmse " << rep.final_nmse << " (" << rep.final_db
            << " dB), diverged trials " << rep.diverged_trials << "/"
            << cfg.trials << "\n";
  if (rep.diverged_trials > 0 && !is_learning(cfg.method)) return kDivergence;
  return kOk;
}

int cmd_se(const std::string& config_path, const std::string& out) {
  uamp::ExperimentConfig cfg = uamp::config_from_json(read_file(config_path));
  const std::string csv = uamp::se_csv_for_config(cfg);
  if (out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream f(out);
    f << csv;
    std::cout << "wrote " << out << "\n";
  }
  return kOk;
}

int cmd_profile(const std::string& checkpoint_path, const std::string& out) {
  uamp::Checkpoint ck = uamp::load_checkpoint(checkpoint_path);
  if (ck.config_json.empty())
    throw uamp::ConfigError("checkpoint carries no config; cannot rebuild prior");
  uamp::ExperimentConfig cfg = uamp::config_from_json(ck.config_json);
  uamp::Rng root(cfg.seed);
  uamp::Prior prior = uamp::make_prior(cfg, root.split("prior"));
  const std::string csv =
      uamp::profile_to_csv(uamp::denoiser_profile(ck.net, prior));
  if (out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream f(out);
    f << csv;
    std::cout << "wrote " << out << "\n";
  }
  return kOk;
}

int cmd_compare(const std::vector<std::string>& report_paths) {
  std::vector<std::string> texts;
  for (const auto& p : report_paths) texts.push_back(read_file(p));
  std::cout << uamp::compare_reports(texts);
  return kOk;
}

int cmd_replay(const std::string& manifest_path) {
  std::string message;
  const bool same = uamp::replay_manifest(manifest_path, &message);
  std::cout << message << "\n";
  return same ? kOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unrolled approximate message passing experiments"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, manifest_path, out_path;
  std::vector<std::string> report_paths;

  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  run->add_option("config", config_path, "config file")->required();

  auto* se = app.add_subcommand("se", "state-evolution oracle for a config");
  se->add_option("config", config_path, "config file")->required();
  se->add_option("-o,--out", out_path, "output CSV path (default stdout)");

  auto* profile =
      app.add_subcommand("profile", "learned vs optimal denoiser profiles");
  profile->add_option("checkpoint", checkpoint_path, "checkpoint file")->required();
  profile->add_option("-o,--out", out_path, "output CSV path (default stdout)");

  auto* compare = app.add_subcommand("compare", "layer-aligned report comparison");
  compare->add_option("reports", report_paths, "report JSON files")
      ->required()
      ->expected(-2);

  auto* replay = app.add_subcommand("replay", "re-run a manifest and verify");
  replay->add_option("manifest", manifest_path, "manifest file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path);
    if (se->parsed()) return cmd_se(config_path, out_path);
    if (profile->parsed()) return cmd_profile(checkpoint_path, out_path);
    if (compare->parsed()) return cmd_compare(report_paths);
    if (replay->parsed()) return cmd_replay(manifest_path);
  } catch (const uamp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const uamp::TrainingError& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return kTrainingFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}
