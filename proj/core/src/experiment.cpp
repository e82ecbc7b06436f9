#include "uamp/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "uamp/baselines.hpp"
#include "uamp/checkpoint.hpp"
#include "uamp/dataset.hpp"
#include "uamp/denoisers.hpp"
#include "uamp/state_evolution.hpp"

namespace uamp {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

const char* setting_name(Setting s) { return s == Setting::Cs ? "cs" : "r1"; }

Setting setting_from_name(const std::string& s) {
  if (s == "cs") return Setting::Cs;
  if (s == "r1") return Setting::R1;
  throw ConfigError("unknown setting '" + s + "'");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::BayesAmp: return "bayes_amp";
    case Method::LdNet: return "ldnet";
    case Method::LdNetGuided: return "ldnet_guided";
    case Method::LdNetLearnB: return "ldnet_learn_b";
    case Method::LdNetMultiDim: return "ldnet_multidim";
    case Method::Ista: return "ista";
    case Method::SoftThresholdAmp: return "soft_threshold_amp";
  }
  return "bayes_amp";
}

Method method_from_name(const std::string& s) {
  if (s == "bayes_amp") return Method::BayesAmp;
  if (s == "ldnet") return Method::LdNet;
  if (s == "ldnet_guided") return Method::LdNetGuided;
  if (s == "ldnet_learn_b") return Method::LdNetLearnB;
  if (s == "ldnet_multidim") return Method::LdNetMultiDim;
  if (s == "ista") return Method::Ista;
  if (s == "soft_threshold_amp") return Method::SoftThresholdAmp;
  throw ConfigError("unknown method '" + s + "'");
}

const char* matrix_kind_name(MatrixKind k) {
  switch (k) {
    case MatrixKind::Gaussian: return "gaussian";
    case MatrixKind::TruncatedOrthogonal: return "truncated_orthogonal";
    case MatrixKind::TruncatedGram: return "truncated_gram";
    case MatrixKind::FromFile: return "from_file";
  }
  return "gaussian";
}

MatrixKind matrix_kind_from_name(const std::string& s) {
  if (s == "gaussian") return MatrixKind::Gaussian;
  if (s == "truncated_orthogonal") return MatrixKind::TruncatedOrthogonal;
  if (s == "truncated_gram") return MatrixKind::TruncatedGram;
  if (s == "from_file") return MatrixKind::FromFile;
  throw ConfigError("unknown matrix kind '" + s + "'");
}

json mixture_to_json(const MixtureSpec& m) {
  json j;
  j["weights"] = m.weights;
  json means = json::array(), covs = json::array();
  for (const Vector& mu : m.means) {
    json v = json::array();
    for (Eigen::Index i = 0; i < mu.size(); ++i) v.push_back(mu[i]);
    means.push_back(std::move(v));
  }
  for (const Matrix& c : m.covariances) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index k = 0; k < c.cols(); ++k) row.push_back(c(i, k));
      rows.push_back(std::move(row));
    }
    covs.push_back(std::move(rows));
  }
  j["means"] = std::move(means);
  j["covariances"] = std::move(covs);
  return j;
}

MixtureSpec mixture_from_json(const json& j) {
  MixtureSpec m;
  m.weights = j.at("weights").get<std::vector<double>>();
  for (const json& v : j.at("means")) {
    Vector mu(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      mu[static_cast<Eigen::Index>(i)] = v.at(i).get<double>();
    m.means.push_back(std::move(mu));
  }
  for (const json& c : j.at("covariances")) {
    const auto r = c.size();
    Matrix cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r));
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t k = 0; k < r; ++k)
        cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
            c.at(i).at(k).get<double>();
    m.covariances.push_back(std::move(cov));
  }
  return m;
}

json config_to_json_obj(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["setting"] = setting_name(c.setting);
  j["method"] = method_name(c.method);
  j["prior"] = c.prior_kind;
  j["eps"] = c.eps;
  if (c.prior_kind == "mixture") j["mixture"] = mixture_to_json(c.mixture);
  j["mixture_dim"] = c.mixture_dim;
  j["m"] = c.m;
  j["d"] = c.d;
  j["sigma2"] = c.sigma2;
  j["lambda"] = c.lambda;
  j["layers"] = c.layers;
  j["n_train"] = c.n_train;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["matrix_kind"] = matrix_kind_name(c.matrix_kind);
  j["matrix_file"] = c.matrix_file;
  j["hidden"] = c.hidden;
  j["out_dir"] = c.out_dir;
  json t;
  t["lr"] = c.train.lr;
  t["batch"] = c.train.batch;
  t["epochs"] = c.train.epochs;
  t["patience"] = c.train.patience;
  t["val_fraction"] = c.train.val_fraction;
  t["finetune"] = c.train.finetune;
  t["finetune_epochs"] = c.train.finetune_epochs;
  t["finetune_lr"] = c.train.finetune_lr;
  t["b_epochs"] = c.train.b_epochs;
  t["b_lr"] = c.train.b_lr;
  t["rounds"] = c.train.rounds;
  t["seed"] = c.train.seed;
  t["pool_cols"] = c.train.pool_cols;
  t["val_cols"] = c.train.val_cols;
  t["epoch_cols"] = c.train.epoch_cols;
  t["step_cols"] = c.train.step_cols;
  t["finetune_samples"] = c.train.finetune_samples;
  j["train"] = std::move(t);
  return j;
}

ExperimentConfig config_from_json_obj(const json& j) {
  ExperimentConfig c;
  try {
    c.name = j.value("name", c.name);
    if (j.contains("setting"))
      c.setting = setting_from_name(j.at("setting").get<std::string>());
    if (j.contains("method"))
      c.method = method_from_name(j.at("method").get<std::string>());
    c.prior_kind = j.value("prior", c.prior_kind);
    c.eps = j.value("eps", c.eps);
    if (j.contains("mixture")) c.mixture = mixture_from_json(j.at("mixture"));
    c.mixture_dim = j.value("mixture_dim", c.mixture_dim);
    c.m = j.value("m", c.m);
    c.d = j.value("d", c.d);
    c.sigma2 = j.value("sigma2", c.sigma2);
    c.lambda = j.value("lambda", c.lambda);
    c.layers = j.value("layers", c.layers);
    c.n_train = j.value("n_train", c.n_train);
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    if (j.contains("matrix_kind"))
      c.matrix_kind = matrix_kind_from_name(j.at("matrix_kind").get<std::string>());
    c.matrix_file = j.value("matrix_file", c.matrix_file);
    c.hidden = j.value("hidden", c.hidden);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("train")) {
      const json& t = j.at("train");
      c.train.lr = t.value("lr", c.train.lr);
      c.train.batch = t.value("batch", c.train.batch);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.patience = t.value("patience", c.train.patience);
      c.train.val_fraction = t.value("val_fraction", c.train.val_fraction);
      c.train.finetune = t.value("finetune", c.train.finetune);
      c.train.finetune_epochs = t.value("finetune_epochs", c.train.finetune_epochs);
      c.train.finetune_lr = t.value("finetune_lr", c.train.finetune_lr);
      c.train.b_epochs = t.value("b_epochs", c.train.b_epochs);
      c.train.b_lr = t.value("b_lr", c.train.b_lr);
      c.train.rounds = t.value("rounds", c.train.rounds);
      c.train.seed = t.value("seed", c.train.seed);
      c.train.pool_cols = t.value("pool_cols", c.train.pool_cols);
      c.train.val_cols = t.value("val_cols", c.train.val_cols);
      c.train.epoch_cols = t.value("epoch_cols", c.train.epoch_cols);
      c.train.step_cols = t.value("step_cols", c.train.step_cols);
      c.train.finetune_samples = t.value("finetune_samples", c.train.finetune_samples);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (c.m < 1 || c.d < 1 || c.layers < 1 || c.n_train < 1 || c.trials < 1)
    throw ConfigError("all counts must be >= 1");
  if (c.sigma2 < 0.0) throw ConfigError("sigma2 must be >= 0");
  if (!(c.lambda > 0.0)) throw ConfigError("lambda must be > 0");
  return c;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.prior_kind != "bernoulli_gaussian" && cfg.prior_kind != "z2" &&
      cfg.prior_kind != "gaussian" && cfg.prior_kind != "mixture" &&
      cfg.prior_kind != "random_mixture")
    throw ConfigError("unknown prior '" + cfg.prior_kind + "'");
  if (cfg.method == Method::LdNetMultiDim && cfg.setting != Setting::R1)
    throw ConfigError("ldnet_multidim requires the rank-one setting");
  if ((cfg.method == Method::LdNetLearnB || cfg.method == Method::Ista ||
       cfg.method == Method::SoftThresholdAmp || cfg.method == Method::LdNetGuided) &&
      cfg.setting != Setting::Cs)
    throw ConfigError(std::string(method_name(cfg.method)) +
                      " requires the compressed-sensing setting");
  if (cfg.matrix_kind == MatrixKind::FromFile && cfg.matrix_file.empty())
    throw ConfigError("matrix_kind=from_file needs matrix_file");
}

Matrix read_matrix_file(const std::string& path, int m, int d) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read matrix file: " + path);
  Matrix A(m, d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j)
      if (!(in >> A(i, j)))
        throw ConfigError("matrix file too short: " + path);
  return A;
}

std::string join(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

// --- guided denoiser training (closed form with trainable parameters) ------

std::vector<double> guided_init(const Prior& prior) {
  // Coincidence point: the guided family equals the Bayes denoiser here.
  if (prior.kind() == Prior::Kind::BernoulliGaussian)
    return {1.0, std::log((1.0 - prior.eps()) / prior.eps())};
  return {1.0};
}

// Central-difference Adam on the handful of guided parameters; the layer
// loss is evaluated on a fixed subsample of (effective observation, signal)
// pairs from the cached states.
void train_guided_layer(const Prior& prior, std::vector<double>& params,
                        const std::vector<double>& r, const std::vector<double>& x,
                        double tau, int iters, double lr) {
  const SeInputs se{tau, 0.0};
  auto loss = [&](const std::vector<double>& p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double e = guided_denoiser_cs(prior, r[i], se, p).value - x[i];
      acc += e * e;
    }
    return acc / static_cast<double>(r.size());
  };
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
  std::vector<double> best = params;
  double best_loss = loss(params);
  for (int t = 1; t <= iters; ++t) {
    std::vector<double> g(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double h = 1e-4 * std::max(1.0, std::abs(params[k]));
      std::vector<double> up = params, dn = params;
      up[k] += h;
      dn[k] -= h;
      g[k] = (loss(up) - loss(dn)) / (2.0 * h);
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      m[k] = 0.9 * m[k] + 0.1 * g[k];
      v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
      const double mh = m[k] / (1.0 - std::pow(0.9, t));
      const double vh = v[k] / (1.0 - std::pow(0.999, t));
      params[k] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
    const double cur = loss(params);
    if (cur < best_loss) {
      best_loss = cur;
      best = params;
    }
  }
  params = best;
}

// Layerwise training of the guided family for CS; returns per-layer params
// and the tau path.
std::vector<std::vector<double>> train_guided_cs(const Prior& prior,
                                                 const CsDataset& ds, int layers,
                                                 Rng rng,
                                                 std::vector<double>& tau_path) {
  const int d = static_cast<int>(ds.A.cols());
  const int n = static_cast<int>(ds.X.cols());
  std::vector<std::vector<double>> all_params;
  Matrix Xhat = Matrix::Zero(d, n);
  Matrix V = ds.Y;
  Vector tau = ds.Y.colwise().norm().transpose() /
               std::sqrt(static_cast<double>(ds.A.rows()));
  const double delta = ds.delta();
  for (int l = 0; l < layers; ++l) {
    Matrix R = ds.A.transpose() * V + Xhat;
    const double tau_bar = tau.mean();
    tau_path.push_back(tau_bar);
    // subsample entries for the finite-difference loss
    std::vector<double> rs, xs;
    const int want = 20000;
    for (int i = 0; i < want; ++i) {
      const int b = static_cast<int>(rng.next_u64() % n);
      const int j = static_cast<int>(rng.next_u64() % d);
      rs.push_back(R(j, b));
      xs.push_back(ds.X(j, b));
    }
    std::vector<double> params =
        all_params.empty() ? guided_init(prior) : all_params.back();
    train_guided_layer(prior, params, rs, xs, tau_bar, 40, 0.02);
    all_params.push_back(params);
    // advance states
    GuidedCsDenoiser den(prior, params);
    Matrix Xn(d, n);
    Vector ons(n);
    for (int b = 0; b < n; ++b) {
      double acc = 0.0;
      const SeInputs se{tau[b], 0.0};
      for (int j = 0; j < d; ++j) {
        DenoiserEval e = den.eval(R(j, b), se);
        Xn(j, b) = e.value;
        acc += e.deriv;
      }
      ons[b] = acc / (d * delta);
    }
    Matrix Vn = ds.Y - ds.A * Xn;
    for (int b = 0; b < n; ++b) Vn.col(b) += ons[b] * V.col(b);
    V = std::move(Vn);
    Xhat = Xn;
    tau = V.colwise().norm().transpose() / std::sqrt(static_cast<double>(ds.A.rows()));
  }
  return all_params;
}

// --- evaluation --------------------------------------------------------------

struct TrialRuns {
  std::vector<std::vector<TraceRow>> traces;
};

std::vector<LayerAggregate> aggregate(const TrialRuns& runs, int layers) {
  std::vector<LayerAggregate> agg;
  for (int l = 1; l <= layers; ++l) {
    LayerAggregate a;
    a.layer = l;
    std::vector<double> vals;
    for (const auto& tr : runs.traces) {
      bool dead = false;
      const TraceRow* row = nullptr;
      for (const auto& r : tr) {
        if (r.layer == l) row = &r;
        if (r.diverged && r.layer <= l) dead = true;
      }
      if (tr.empty() || (row == nullptr) || dead ||
          (row && row->diverged)) {
        ++a.diverged;
        continue;
      }
      vals.push_back(row->nmse);
    }
    if (!vals.empty()) {
      double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      var = vals.size() > 1 ? var / (vals.size() - 1) : 0.0;
      a.mean_nmse = mean;
      a.stderr_nmse = std::sqrt(var / vals.size());
      a.mean_db = 10.0 * std::log10(std::max(mean, 1e-300));
    } else {
      a.mean_nmse = std::numeric_limits<double>::quiet_NaN();
      a.stderr_nmse = std::numeric_limits<double>::quiet_NaN();
      a.mean_db = std::numeric_limits<double>::quiet_NaN();
    }
    agg.push_back(a);
  }
  return agg;
}

json report_to_json(const ExperimentConfig& cfg,
                    const std::vector<LayerAggregate>& agg, int diverged_trials) {
  json j;
  j["name"] = cfg.name;
  j["setting"] = setting_name(cfg.setting);
  j["method"] = method_name(cfg.method);
  j["diverged_trials"] = diverged_trials;
  json layers = json::array();
  for (const auto& a : agg) {
    json row;
    row["layer"] = a.layer;
    if (std::isfinite(a.mean_nmse)) {
      row["mean_nmse"] = a.mean_nmse;
      row["stderr_nmse"] = a.stderr_nmse;
      row["mean_db"] = a.mean_db;
    } else {
      row["mean_nmse"] = nullptr;
      row["stderr_nmse"] = nullptr;
      row["mean_db"] = nullptr;
    }
    row["diverged"] = a.diverged;
    layers.push_back(std::move(row));
  }
  j["layers"] = std::move(layers);
  if (!agg.empty() && std::isfinite(agg.back().mean_nmse)) {
    j["final_nmse"] = agg.back().mean_nmse;
    j["final_db"] = agg.back().mean_db;
  } else {
    j["final_nmse"] = nullptr;
    j["final_db"] = nullptr;
  }
  j["config"] = config_to_json_obj(cfg);
  return j;
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg = config_from_json_obj(j);
  validate(cfg);
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  return config_to_json_obj(cfg).dump(1);
}

Prior make_prior(const ExperimentConfig& cfg, Rng rng) {
  if (cfg.prior_kind == "bernoulli_gaussian") return Prior::bernoulli_gaussian(cfg.eps);
  if (cfg.prior_kind == "z2") return Prior::z2();
  if (cfg.prior_kind == "gaussian") return Prior::gaussian();
  if (cfg.prior_kind == "mixture") return Prior::mixture(cfg.mixture);
  if (cfg.prior_kind == "random_mixture")
    return Prior::random_mixture(rng, cfg.mixture_dim);
  throw ConfigError("unknown prior '" + cfg.prior_kind + "'");
}

Matrix make_sensing_matrix(const ExperimentConfig& cfg, Rng rng) {
  switch (cfg.matrix_kind) {
    case MatrixKind::Gaussian:
      return gaussian_matrix(rng, cfg.m, cfg.d, 1.0 / cfg.m);
    case MatrixKind::TruncatedOrthogonal:
      return truncated_orthogonal(rng, cfg.m, cfg.d);
    case MatrixKind::TruncatedGram:
      return truncated_gram(rng, cfg.m, cfg.d);
    case MatrixKind::FromFile:
      return read_matrix_file(cfg.matrix_file, cfg.m, cfg.d);
  }
  throw ConfigError("unknown matrix kind");
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  fs::create_directories(cfg.out_dir);
  Rng root(cfg.seed);
  Prior prior = make_prior(cfg, root.split("prior"));
  const double m2 = prior.second_moment();

  ExperimentReport rep;
  rep.cfg = cfg;

  LdNet net;
  bool have_net = false;
  std::vector<std::vector<double>> guided_params;
  std::vector<double> guided_tau_path;
  Matrix A;

  // ---- training phase -------------------------------------------------------
  if (cfg.setting == Setting::Cs) {
    A = make_sensing_matrix(cfg, root.split("matrix"));
    if (cfg.method == Method::LdNet || cfg.method == Method::LdNetLearnB) {
      Rng drng = root.split("dataset");
      CsDataset ds = generate_cs_dataset(prior, A, cfg.n_train, cfg.sigma2, drng);
      Rng irng = root.split("init");
      net = LdNet::make(LdSetting::Cs, cfg.layers, cfg.hidden, irng);
      TrainConfig tc = cfg.train;
      tc.seed = cfg.seed;
      TrainReport tr = cfg.method == Method::LdNetLearnB
                           ? train_cs_learn_b(net, ds, tc)
                           : train_cs(net, ds, tc);
      if (!tr.ok) throw TrainingError(tr.error);
      have_net = true;
    } else if (cfg.method == Method::LdNetGuided) {
      Rng drng = root.split("dataset");
      CsDataset ds = generate_cs_dataset(prior, A, cfg.n_train, cfg.sigma2, drng);
      guided_params = train_guided_cs(prior, ds, cfg.layers,
                                      root.split("guided"), guided_tau_path);
    }
  } else {
    if (cfg.method == Method::LdNet || cfg.method == Method::LdNetMultiDim) {
      Rng drng = root.split("dataset");
      const int dim = prior.is_product() ? cfg.d : prior.dim();
      R1Dataset ds = generate_r1_dataset(prior, dim, cfg.n_train, cfg.lambda, drng);
      Rng irng = root.split("init");
      TrainConfig tc = cfg.train;
      tc.seed = cfg.seed;
      TrainReport tr;
      if (cfg.method == Method::LdNetMultiDim) {
        net = LdNet::make(LdSetting::R1Multi, cfg.layers, cfg.hidden, irng,
                          prior.is_product() ? cfg.d : prior.dim());
        tr = train_r1_multi(net, ds, tc);
      } else {
        if (!prior.is_product())
          throw ConfigError("scalar ldnet needs a product prior in rank-one");
        net = LdNet::make(LdSetting::R1, cfg.layers, cfg.hidden, irng);
        tr = train_r1(net, ds, tc);
      }
      if (!tr.ok) throw TrainingError(tr.error);
      have_net = true;
    }
  }

  // ---- evaluation trials ----------------------------------------------------
  TrialRuns runs;
  Rng eval_root = root.split("eval");
  double ista_lambda = 0.0, st_lambda = 0.0;
  if (cfg.method == Method::Ista || cfg.method == Method::SoftThresholdAmp) {
    Rng sel = eval_root.split("lambda-select");
    Vector x = prior.sample(sel, cfg.d);
    Vector w = gaussian_vector(sel, cfg.m, std::max(cfg.sigma2, 0.0));
    CsProblem p{A, A * x + w, cfg.sigma2};
    if (cfg.method == Method::Ista)
      ista_lambda = ista_select_lambda(p, x, cfg.layers);
    else
      st_lambda = soft_threshold_select_lambda(p, x, cfg.layers);
  }

  for (int t = 0; t < cfg.trials; ++t) {
    Rng trng = eval_root.split(static_cast<std::uint64_t>(t));
    std::vector<TraceRow> rows;
    if (cfg.setting == Setting::Cs) {
      Vector x = prior.sample(trng, cfg.d);
      Vector w = gaussian_vector(trng, cfg.m, std::max(cfg.sigma2, 0.0));
      CsProblem p{A, A * x + w, cfg.sigma2};
      switch (cfg.method) {
        case Method::BayesAmp: {
          BayesCsDenoiser den(prior);
          rows = run_amp_cs(p, {&den}, cfg.layers, x);
          break;
        }
        case Method::LdNet:
        case Method::LdNetLearnB:
          rows = ldnet_run_cs(net, p, x);
          break;
        case Method::LdNetGuided: {
          std::vector<GuidedCsDenoiser> dens;
          dens.reserve(guided_params.size());
          for (const auto& pr : guided_params) dens.emplace_back(prior, pr);
          DenoiserSchedule sched;
          for (const auto& dref : dens) sched.push_back(&dref);
          rows = run_amp_cs(p, sched, cfg.layers, x);
          break;
        }
        case Method::Ista:
          rows = ista(p, ista_lambda, cfg.layers, x);
          break;
        case Method::SoftThresholdAmp:
          rows = soft_threshold_amp(p, st_lambda, cfg.layers, x);
          break;
        default:
          throw ConfigError("method not valid for the CS setting");
      }
    } else {
      const int dim = prior.is_product() ? cfg.d : prior.dim();
      Vector x = prior.sample(trng, dim);
      Matrix G = symmetric_noise(dim, trng.next_u64(), 0);
      R1Problem p{(cfg.lambda / dim) * x * x.transpose() + G, cfg.lambda};
      switch (cfg.method) {
        case Method::BayesAmp: {
          if (prior.is_product()) {
            BayesR1Denoiser den(prior);
            rows = run_amp_r1(p, {&den}, cfg.layers, x, m2);
          } else {
            MixtureR1Denoiser den(prior);
            rows = run_amp_r1_multidim(p, den, cfg.layers, x, m2);
          }
          break;
        }
        case Method::LdNet:
        case Method::LdNetMultiDim:
          rows = ldnet_run_r1(net, p, x, m2);
          break;
        default:
          throw ConfigError("method not valid for the rank-one setting");
      }
    }
    for (auto& r : rows) r.trial = t;
    if (!rows.empty() && rows.back().diverged) ++rep.diverged_trials;
    runs.traces.push_back(std::move(rows));
  }

  // ---- outputs ---------------------------------------------------------------
  rep.layers = aggregate(runs, cfg.layers);
  if (!rep.layers.empty()) {
    rep.final_nmse = rep.layers.back().mean_nmse;
    rep.final_db = rep.layers.back().mean_db;
  }

  std::vector<TraceRow> all_rows;
  for (const auto& tr : runs.traces)
    all_rows.insert(all_rows.end(), tr.begin(), tr.end());
  rep.trace_path = join(cfg.out_dir, cfg.name + "_trace.csv");
  write_file(rep.trace_path, trace_to_csv(all_rows));

  rep.report_path = join(cfg.out_dir, cfg.name + "_report.json");
  write_file(rep.report_path,
             report_to_json(cfg, rep.layers, rep.diverged_trials).dump(1) + "\n");

  if (have_net) {
    rep.checkpoint_path = join(cfg.out_dir, cfg.name + "_checkpoint.json");
    save_checkpoint(rep.checkpoint_path, net, config_to_json(cfg));
    if (net.setting != LdSetting::R1Multi) {
      rep.profile_path = join(cfg.out_dir, cfg.name + "_profile.csv");
      write_file(rep.profile_path, profile_to_csv(denoiser_profile(net, prior)));
    }
  }

  json manifest;
  manifest["config"] = config_to_json_obj(cfg);
  manifest["outputs"]["trace"] = rep.trace_path;
  manifest["outputs"]["report"] = rep.report_path;
  if (!rep.checkpoint_path.empty())
    manifest["outputs"]["checkpoint"] = rep.checkpoint_path;
  if (!rep.profile_path.empty()) manifest["outputs"]["profile"] = rep.profile_path;
  rep.manifest_path = join(cfg.out_dir, cfg.name + "_manifest.json");
  write_file(rep.manifest_path, manifest.dump(1) + "\n");
  return rep;
}

std::string se_csv_for_config(const ExperimentConfig& cfg) {
  validate(cfg);
  Rng root(cfg.seed);
  Prior prior = make_prior(cfg, root.split("prior"));
  if (!prior.is_product())
    throw ConfigError("the scalar state-evolution oracle needs a product prior");
  SeTrace tr;
  if (cfg.setting == Setting::Cs) {
    BayesCsDenoiser den(prior);
    tr = se_cs(prior, den, cfg.sigma2, static_cast<double>(cfg.m) / cfg.d,
               cfg.layers);
  } else {
    BayesR1Denoiser den(prior);
    tr = se_r1(prior, den, cfg.lambda, cfg.layers);
  }
  std::vector<double> pred = se_predicted_nmse(tr, prior);
  std::string out = "layer,tau2,mu,predicted_nmse\n";
  char buf[160];
  for (std::size_t l = 0; l < pred.size(); ++l) {
    const double tau2 = tr.tau2[l + 1];
    const double mu = tr.mu.empty() ? 0.0 : tr.mu[l + 1];
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", l + 1, tau2, mu,
                  pred[l]);
    out += buf;
  }
  return out;
}

std::string compare_reports(const std::vector<std::string>& report_json_texts) {
  if (report_json_texts.size() < 2)
    throw ConfigError("compare needs at least two reports");
  std::vector<json> reports;
  for (const auto& text : report_json_texts) {
    try {
      reports.push_back(json::parse(text));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad report: ") + e.what());
    }
  }
  const std::string setting = reports[0].value("setting", "");
  for (const auto& r : reports)
    if (r.value("setting", "") != setting)
      throw ConfigError("reports come from different settings");

  std::size_t nlayers = std::numeric_limits<std::size_t>::max();
  for (const auto& r : reports)
    nlayers = std::min(nlayers, r.at("layers").size());

  std::ostringstream out;
  out << "layer";
  for (const auto& r : reports) out << "," << r.value("name", "report") << "_nmse";
  for (std::size_t k = 1; k < reports.size(); ++k)
    out << ",improvement_pct_" << reports[k].value("name", "report")
        << ",improvement_db_pct_" << reports[k].value("name", "report");
  out << "\n";
  char buf[64];
  for (std::size_t l = 0; l < nlayers; ++l) {
    out << (l + 1);
    std::vector<double> nm, db;
    for (const auto& r : reports) {
      const json& row = r.at("layers").at(l);
      const double v = row.at("mean_nmse").is_null()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : row.at("mean_nmse").get<double>();
      const double vdb = row.at("mean_db").is_null()
                             ? std::numeric_limits<double>::quiet_NaN()
                             : row.at("mean_db").get<double>();
      nm.push_back(v);
      db.push_back(vdb);
      std::snprintf(buf, sizeof(buf), ",%.10g", v);
      out << buf;
    }
    for (std::size_t k = 1; k < reports.size(); ++k) {
      const double imp = 100.0 * std::abs(nm[0] - nm[k]) / std::abs(nm[0]);
      const double imp_db = 100.0 * std::abs(db[0] - db[k]) / std::abs(db[0]);
      std::snprintf(buf, sizeof(buf), ",%.10g,%.10g", imp, imp_db);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

bool replay_manifest(const std::string& manifest_path, std::string* message) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("cannot read manifest: " + manifest_path);
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad manifest: ") + e.what());
  }
  ExperimentConfig cfg = config_from_json_obj(manifest.at("config"));
  validate(cfg);
  const std::string orig_trace = manifest.at("outputs").at("trace").get<std::string>();
  std::ifstream orig(orig_trace, std::ios::binary);
  if (!orig) throw ConfigError("original trace missing: " + orig_trace);
  std::stringstream orig_text;
  orig_text << orig.rdbuf();

  cfg.out_dir = (fs::path(cfg.out_dir) / "replay").string();
  ExperimentReport rep = run_experiment(cfg);
  std::ifstream fresh(rep.trace_path, std::ios::binary);
  std::stringstream fresh_text;
  fresh_text << fresh.rdbuf();

  const bool same = orig_text.str() == fresh_text.str();
  if (message)
    *message = same ? "replay identical"
                    : "replay differs from recorded trace " + orig_trace;
  return same;
}

}  // namespace uamp
