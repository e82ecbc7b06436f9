#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uamp/denoisers.hpp"
#include "uamp/linalg.hpp"

namespace uamp {

struct CsProblem {
  Matrix A;       // m x d
  Vector y;       // m
  double sigma2 = 0.0;
  double delta() const { return static_cast<double>(A.rows()) / A.cols(); }
};

struct R1Problem {
  Matrix Y;       // d x d, symmetric
  double lambda = 0.0;
};

/// Per-iteration AMP state. `v` has length m in the CS setting and d in the
/// rank-one setting. `diverged` latches once any entry is non-finite or
/// tau_hat exceeds 1000x its initial value; further steps are no-ops.
struct AmpState {
  Vector x_hat;
  Vector v;
  double tau_hat = 0.0;
  double mu_hat = 0.0;
  int layer = 0;
  bool diverged = false;
  double initial_tau = 0.0;
};

AmpState cs_amp_init(const CsProblem& p);

/// One CS AMP step: r = B v + x_hat (B defaults to A^T), x+ = f(r; tau_hat),
/// v+ = y - A x+ + (1/delta) v <f'(r)>, tau+ = |v+| / sqrt(m).
AmpState cs_amp_step(const CsProblem& p, const AmpState& s,
                     const ScalarDenoiser& denoiser, const Matrix* B = nullptr);

/// Rank-one initialization: x0 = all-ones, v0 = Y x0.
AmpState r1_amp_init(const R1Problem& p, double prior_second_moment = 1.0);

/// One rank-one AMP step: x+ = f(v; mu_hat, tau_hat), v+ = Y x+ - x <f'(v)>,
/// tau+ = |x+|^2/d, mu+ = sqrt(| |v+|^2/d - |x+|^2/d |) / sqrt(E[X^2]).
AmpState r1_amp_step(const R1Problem& p, const AmpState& s,
                     const ScalarDenoiser& denoiser,
                     double prior_second_moment = 1.0);

/// Rank-one step with a d-dimensional denoiser; the Onsager average is the
/// normalized divergence (1/d) div f.
AmpState r1_amp_step_multidim(const R1Problem& p, const AmpState& s,
                              const VectorDenoiser& denoiser,
                              double prior_second_moment = 1.0);

struct TraceRow {
  int trial = 0;
  int layer = 0;
  double tau_hat = 0.0;
  double mu_hat = 0.0;
  double nmse = 0.0;
  double nmse_db = 0.0;
  bool diverged = false;
};

/// Per-layer schedule; size 1 reuses the same denoiser at every layer.
using DenoiserSchedule = std::vector<const ScalarDenoiser*>;

/// Runs L layers against a known signal, recording per-layer vector NMSE.
/// The trace is truncated once the divergence flag sets.
std::vector<TraceRow> run_amp_cs(const CsProblem& p, const DenoiserSchedule& sched,
                                 int layers, const Vector& x_true,
                                 const Matrix* B = nullptr,
                                 bool onsager = true);

/// Rank-one counterpart; NMSE is the sign-invariant Frobenius metric.
std::vector<TraceRow> run_amp_r1(const R1Problem& p, const DenoiserSchedule& sched,
                                 int layers, const Vector& x_true,
                                 double prior_second_moment = 1.0);

std::vector<TraceRow> run_amp_r1_multidim(const R1Problem& p,
                                          const VectorDenoiser& denoiser,
                                          int layers, const Vector& x_true,
                                          double prior_second_moment = 1.0);

/// CSV with header trial,layer,tau_hat,mu_hat,nmse,nmse_db,diverged.
std::string trace_to_csv(const std::vector<TraceRow>& rows);

}  // namespace uamp
