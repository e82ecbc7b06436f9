#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uamp/amp.hpp"
#include "uamp/dataset.hpp"
#include "uamp/mlp.hpp"
#include "uamp/prior.hpp"

namespace uamp {

enum class LdSetting { Cs, R1, R1Multi };

/// Unrolled AMP with one trainable MLP denoiser per layer and an optional
/// learned matched-filter matrix B (defaults to A^T when absent).
struct LdNet {
  LdSetting setting = LdSetting::Cs;
  std::vector<Mlp> denoisers;
  Matrix B;           // d x m, only used when has_b
  bool has_b = false;
  int signal_dim = 1;  // per-coordinate dimension (>1 only for R1Multi)

  // Empirical state-evolution inputs recorded over the training set at the
  // moment each layer was trained; these feed denoiser profiles.
  std::vector<double> tau_path;
  std::vector<double> mu_path;

  int layers() const { return static_cast<int>(denoisers.size()); }

  static LdNet make(LdSetting setting, int layers,
                    const std::vector<int>& hidden, Rng& rng,
                    int signal_dim = 1,
                    Activation act = Activation::Gelu);
};

struct TrainConfig {
  double lr = 1e-3;
  int batch = 128;        // samples per gradient step in end-to-end phases
  int epochs = 40;
  int patience = 5;       // epochs without val improvement before lr decay/stop
  double val_fraction = 0.1;
  bool finetune = true;
  int finetune_epochs = 2;
  double finetune_lr = 1e-4;
  int b_epochs = 2;       // per-layer joint epochs in learned-B training
  double b_lr = 1e-4;
  // Layerwise passes over the network (CS). Rounds after the first replay
  // the per-layer regressions with the tau path the previous round produced,
  // then finetune again; warm starts keep the extra passes short.
  int rounds = 1;
  std::uint64_t seed = 1;

  // Column budgets (signal entries) that keep training tractable on one
  // core; 0 disables a cap. The pool is the fixed random subset of the
  // training split whose cached states are carried through the phases.
  long pool_cols = 1L << 20;      // active training samples ~ pool_cols / d
  long val_cols = 1L << 16;       // early-stopping validation set cap
  long epoch_cols = 1L << 17;     // entries visited per regression epoch
  long step_cols = 1L << 12;      // entries per regression gradient step
  int finetune_samples = 512;     // samples per end-to-end epoch
};

struct LayerStats {
  int layer = 0;
  double val_mse = 0.0;
  int epochs = 0;
};

struct TrainReport {
  std::vector<LayerStats> layers;
  double final_val_mse = 0.0;
  bool ok = true;
  std::string error;
};

/// Layerwise training: for each layer, warm-start from the previous
/// denoiser, regress the denoiser output on the signal with all earlier
/// layers frozen (their cached states advance once per phase), then
/// optionally finetune every layer end-to-end. tau_hat / mu_hat are
/// gradient-stopped throughout.
TrainReport train_cs(LdNet& net, const CsDataset& data, const TrainConfig& cfg);

/// Learned-B training: B starts at A^T; each layer gets a frozen-B
/// regression phase followed by a joint phase that unfreezes B and all
/// denoisers up to the current layer.
TrainReport train_cs_learn_b(LdNet& net, const CsDataset& data,
                             const TrainConfig& cfg);

/// Rank-one layerwise training with the sign-invariant Frobenius loss (the
/// alignment sign of the iterates is random per sample, so plain regression
/// on x would cancel).
TrainReport train_r1(LdNet& net, const R1Dataset& data, const TrainConfig& cfg);

/// Non-product rank-one training (vector denoiser, divergence Onsager term
/// gradient-stopped, no finetuning).
TrainReport train_r1_multi(LdNet& net, const R1Dataset& data,
                           const TrainConfig& cfg);

/// Per-layer, per-sample effective-noise inputs recorded during an unroll.
/// Training gradient-stops these, so a finite-difference check of the loss
/// must pin them: capture via `path_out`, then re-evaluate with `path`.
struct LdPath {
  std::vector<Vector> tau;
  std::vector<Vector> mu;  // rank-one only
};

/// Mean training loss of the full unroll over the listed dataset columns,
/// with optional per-layer parameter gradients and (CS) matched-filter
/// gradient. CS loss: per-sample mean of (1/d)|x_hat - x|^2. Rank-one loss:
/// per-sample mean of the sign-invariant Frobenius loss normalized by d^2.
/// These are the exact objectives the training phases differentiate, exposed
/// so gradients can be checked against finite differences.
double ldnet_cs_loss(const LdNet& net, const CsDataset& data,
                     const std::vector<int>& idx,
                     std::vector<MlpGrad>* grads = nullptr,
                     Matrix* grad_b = nullptr, const LdPath* path = nullptr,
                     LdPath* path_out = nullptr);
double ldnet_r1_loss(const LdNet& net, const R1Dataset& data, double m2,
                     const std::vector<int>& idx,
                     std::vector<MlpGrad>* grads = nullptr,
                     const LdPath* path = nullptr, LdPath* path_out = nullptr);

/// Inference: runs the unrolled network on one problem instance.
std::vector<TraceRow> ldnet_run_cs(const LdNet& net, const CsProblem& p,
                                   const Vector& x_true);
std::vector<TraceRow> ldnet_run_r1(const LdNet& net, const R1Problem& p,
                                   const Vector& x_true,
                                   double prior_second_moment);

struct ProfileRow {
  int layer = 0;
  double r = 0.0;
  double learned = 0.0;
  double optimal = 0.0;
};

/// Learned vs Bayes-optimal denoiser values on a grid, with the recorded
/// empirical tau/mu for each layer. `delta` is only used in the CS setting.
std::vector<ProfileRow> denoiser_profile(const LdNet& net, const Prior& prior,
                                         int points = 101, double lo = -2.0,
                                         double hi = 2.0);

std::string profile_to_csv(const std::vector<ProfileRow>& rows);

}  // namespace uamp
