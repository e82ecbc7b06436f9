#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "uamp/ldnet.hpp"
#include "uamp/prior.hpp"

namespace uamp {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Setting { Cs, R1 };
enum class Method {
  BayesAmp,
  LdNet,
  LdNetGuided,
  LdNetLearnB,
  LdNetMultiDim,
  Ista,
  SoftThresholdAmp,
};
enum class MatrixKind { Gaussian, TruncatedOrthogonal, TruncatedGram, FromFile };

struct ExperimentConfig {
  std::string name = "experiment";
  Setting setting = Setting::Cs;
  Method method = Method::BayesAmp;

  // prior: bernoulli_gaussian | z2 | gaussian | mixture | random_mixture
  std::string prior_kind = "bernoulli_gaussian";
  double eps = 0.1;            // Bernoulli-Gaussian sparsity
  MixtureSpec mixture;         // explicit mixture components
  int mixture_dim = 10;        // dimension of the random two-component mixture

  int m = 250;
  int d = 500;
  double sigma2 = 2e-5;        // CS noise variance
  double lambda = 1.5;         // rank-one signal strength
  int layers = 15;
  int n_train = 1 << 13;
  int trials = 20;
  std::uint64_t seed = 1;
  MatrixKind matrix_kind = MatrixKind::Gaussian;
  std::string matrix_file;

  std::vector<int> hidden = {70, 70, 70};
  TrainConfig train;

  std::string out_dir = ".";
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);

/// Builds the prior named by the config. The random mixture draws its
/// components from rng (seeded from the experiment seed so runs replay).
Prior make_prior(const ExperimentConfig& cfg, Rng rng);

/// The sensing matrix named by the config.
Matrix make_sensing_matrix(const ExperimentConfig& cfg, Rng rng);

struct LayerAggregate {
  int layer = 0;
  double mean_nmse = 0.0;
  double stderr_nmse = 0.0;
  double mean_db = 0.0;
  int diverged = 0;  // trials flagged at or before this layer
};

struct ExperimentReport {
  ExperimentConfig cfg;
  std::vector<LayerAggregate> layers;
  double final_nmse = 0.0;
  double final_db = 0.0;
  int diverged_trials = 0;
  std::string trace_path, report_path, manifest_path, checkpoint_path,
      profile_path;
};

/// Trains (when the method learns), evaluates over held-out trials, and
/// writes trace CSV, report JSON, manifest, checkpoint and denoiser-profile
/// CSV under cfg.out_dir. Throws ConfigError / TrainingError.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// State-evolution oracle for the config's prior with the Bayes denoiser:
/// CSV (layer, tau2, mu, predicted_nmse). Product priors only.
std::string se_csv_for_config(const ExperimentConfig& cfg);

/// Layer-aligned comparison of report JSON files; the first report is the
/// baseline and improvements are |base - other| / |base| * 100 on the raw
/// NMSE and on its dB rendering. Throws ConfigError on mismatched settings.
std::string compare_reports(const std::vector<std::string>& report_json_texts);

/// Re-runs the experiment recorded in a manifest and byte-compares the
/// regenerated trace CSV against the original. Returns true when identical.
bool replay_manifest(const std::string& manifest_path, std::string* message);

}  // namespace uamp
