#include "uamp/amp.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace uamp {

namespace {

constexpr double kDivergenceFactor = 1e3;

bool finite(const Vector& v) { return v.allFinite(); }

void check_divergence(AmpState& s) {
  if (!finite(s.x_hat) || !finite(s.v) || !std::isfinite(s.tau_hat) ||
      !std::isfinite(s.mu_hat) || s.tau_hat > kDivergenceFactor * s.initial_tau)
    s.diverged = true;
}

}  // namespace

AmpState cs_amp_init(const CsProblem& p) {
  const int m = static_cast<int>(p.A.rows());
  const int d = static_cast<int>(p.A.cols());
  if (p.y.size() != m) throw std::invalid_argument("cs_amp_init: y length mismatch");
  AmpState s;
  s.x_hat = Vector::Zero(d);
  s.v = p.y;
  s.tau_hat = p.y.norm() / std::sqrt(static_cast<double>(m));
  s.initial_tau = s.tau_hat;
  return s;
}

AmpState cs_amp_step(const CsProblem& p, const AmpState& s,
                     const ScalarDenoiser& denoiser, const Matrix* B) {
  if (s.diverged) return s;
  const int m = static_cast<int>(p.A.rows());
  const int d = static_cast<int>(p.A.cols());
  const double delta = p.delta();

  Vector r;
  if (B) {
    if (B->rows() != d || B->cols() != m)
      throw std::invalid_argument("cs_amp_step: B must be d x m");
    r = *B * s.v + s.x_hat;
  } else {
    r = p.A.transpose() * s.v + s.x_hat;
  }

  AmpState next = s;
  next.layer = s.layer + 1;
  next.x_hat.resize(d);
  Vector deriv(d);
  denoiser.eval_batch({r.data(), static_cast<std::size_t>(d)}, {s.tau_hat, s.mu_hat},
                      {next.x_hat.data(), static_cast<std::size_t>(d)},
                      {deriv.data(), static_cast<std::size_t>(d)});
  const double onsager = deriv.mean() / delta;
  next.v = p.y - p.A * next.x_hat + onsager * s.v;
  next.tau_hat = next.v.norm() / std::sqrt(static_cast<double>(m));
  check_divergence(next);
  return next;
}

AmpState r1_amp_init(const R1Problem& p, double prior_second_moment) {
  const int d = static_cast<int>(p.Y.rows());
  if (p.Y.cols() != d) throw std::invalid_argument("r1_amp_init: Y must be square");
  AmpState s;
  s.x_hat = Vector::Ones(d);
  s.v = p.Y * s.x_hat;
  s.tau_hat = s.x_hat.squaredNorm() / d;
  s.mu_hat = std::sqrt(std::abs(s.v.squaredNorm() / d - s.tau_hat)) /
             std::sqrt(prior_second_moment);
  s.initial_tau = std::max(s.tau_hat, 1.0);
  return s;
}

namespace {

// Shared tail of the rank-one step once x+ and the Onsager average are known.
AmpState r1_finish(const R1Problem& p, const AmpState& s, Vector x_next,
                   double onsager_avg, double prior_second_moment) {
  const int d = static_cast<int>(p.Y.rows());
  AmpState next = s;
  next.layer = s.layer + 1;
  next.x_hat = std::move(x_next);
  next.v = p.Y * next.x_hat - onsager_avg * s.x_hat;
  next.tau_hat = next.x_hat.squaredNorm() / d;
  next.mu_hat = std::sqrt(std::abs(next.v.squaredNorm() / d - next.tau_hat)) /
                std::sqrt(prior_second_moment);
  check_divergence(next);
  return next;
}

}  // namespace

AmpState r1_amp_step(const R1Problem& p, const AmpState& s,
                     const ScalarDenoiser& denoiser, double prior_second_moment) {
  if (s.diverged) return s;
  const int d = static_cast<int>(p.Y.rows());
  Vector x_next(d), deriv(d);
  denoiser.eval_batch({s.v.data(), static_cast<std::size_t>(d)},
                      {s.tau_hat, s.mu_hat},
                      {x_next.data(), static_cast<std::size_t>(d)},
                      {deriv.data(), static_cast<std::size_t>(d)});
  return r1_finish(p, s, std::move(x_next), deriv.mean(), prior_second_moment);
}

AmpState r1_amp_step_multidim(const R1Problem& p, const AmpState& s,
                              const VectorDenoiser& denoiser,
                              double prior_second_moment) {
  if (s.diverged) return s;
  const int d = static_cast<int>(p.Y.rows());
  VectorDenoiserEval e = denoiser.eval(s.v, {s.tau_hat, s.mu_hat});
  return r1_finish(p, s, std::move(e.value), e.divergence / d, prior_second_moment);
}

namespace {

const ScalarDenoiser& at_layer(const DenoiserSchedule& sched, int layer) {
  if (sched.empty()) throw std::invalid_argument("empty denoiser schedule");
  return sched.size() == 1 ? *sched[0]
                           : *sched[static_cast<std::size_t>(layer) % sched.size()];
}

}  // namespace

std::vector<TraceRow> run_amp_cs(const CsProblem& p, const DenoiserSchedule& sched,
                                 int layers, const Vector& x_true, const Matrix* B,
                                 bool onsager) {
  if (layers < 1) throw std::invalid_argument("run_amp_cs: layers >= 1");
  std::vector<TraceRow> rows;
  AmpState s = cs_amp_init(p);
  for (int l = 0; l < layers; ++l) {
    if (onsager) {
      s = cs_amp_step(p, s, at_layer(sched, l), B);
    } else {
      // Ablation path: forces the Onsager coefficient to zero.
      AmpState kept = s;
      const int d = static_cast<int>(p.A.cols());
      Vector r = B ? Vector(*B * s.v + s.x_hat)
                   : Vector(p.A.transpose() * s.v + s.x_hat);
      Vector val(d), der(d);
      at_layer(sched, l).eval_batch({r.data(), static_cast<std::size_t>(d)},
                                    {s.tau_hat, s.mu_hat},
                                    {val.data(), static_cast<std::size_t>(d)},
                                    {der.data(), static_cast<std::size_t>(d)});
      kept.layer = s.layer + 1;
      kept.x_hat = val;
      kept.v = p.y - p.A * val;
      kept.tau_hat = kept.v.norm() / std::sqrt(static_cast<double>(p.A.rows()));
      check_divergence(kept);
      s = kept;
    }
    Metric m{1.0, 0.0};
    if (s.x_hat.allFinite()) m = nmse(s.x_hat, x_true);
    rows.push_back({0, s.layer, s.tau_hat, s.mu_hat, m.value, m.db, s.diverged});
    if (s.diverged) break;
  }
  return rows;
}

std::vector<TraceRow> run_amp_r1(const R1Problem& p, const DenoiserSchedule& sched,
                                 int layers, const Vector& x_true,
                                 double prior_second_moment) {
  if (layers < 1) throw std::invalid_argument("run_amp_r1: layers >= 1");
  std::vector<TraceRow> rows;
  AmpState s = r1_amp_init(p, prior_second_moment);
  for (int l = 0; l < layers; ++l) {
    s = r1_amp_step(p, s, at_layer(sched, l), prior_second_moment);
    Metric m{1.0, 0.0};
    if (s.x_hat.allFinite()) m = frobenius_nmse(s.x_hat, x_true);
    rows.push_back({0, s.layer, s.tau_hat, s.mu_hat, m.value, m.db, s.diverged});
    if (s.diverged) break;
  }
  return rows;
}

std::vector<TraceRow> run_amp_r1_multidim(const R1Problem& p,
                                          const VectorDenoiser& denoiser,
                                          int layers, const Vector& x_true,
                                          double prior_second_moment) {
  if (layers < 1) throw std::invalid_argument("run_amp_r1_multidim: layers >= 1");
  std::vector<TraceRow> rows;
  AmpState s = r1_amp_init(p, prior_second_moment);
  for (int l = 0; l < layers; ++l) {
    s = r1_amp_step_multidim(p, s, denoiser, prior_second_moment);
    Metric m{1.0, 0.0};
    if (s.x_hat.allFinite()) m = frobenius_nmse(s.x_hat, x_true);
    rows.push_back({0, s.layer, s.tau_hat, s.mu_hat, m.value, m.db, s.diverged});
    if (s.diverged) break;
  }
  return rows;
}

std::string trace_to_csv(const std::vector<TraceRow>& rows) {
  std::string out = "trial,layer,tau_hat,mu_hat,nmse,nmse_db,diverged\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g,%d\n", r.trial,
                  r.layer, r.tau_hat, r.mu_hat, r.nmse, r.nmse_db,
                  r.diverged ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace uamp
