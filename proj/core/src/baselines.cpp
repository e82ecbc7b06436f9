#include "uamp/baselines.hpp"

#include <cmath>
#include <limits>

namespace uamp {

namespace {

double soft(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace

std::vector<TraceRow> ista(const CsProblem& p, double lambda_s, int steps,
                           const Vector& x_true, double step) {
  if (step <= 0.0) {
    Eigen::BDCSVD<Matrix> svd(p.A);
    const double s = svd.singularValues()(0);
    step = 1.0 / (s * s);
  }
  const double thresh = lambda_s * step;
  const double blowup = 1e9 * std::max(1.0, x_true.squaredNorm());
  Vector x = Vector::Zero(p.A.cols());
  std::vector<TraceRow> rows;
  bool diverged = false;
  for (int t = 0; t < steps; ++t) {
    Vector grad_step = x + step * (p.A.transpose() * (p.y - p.A * x));
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = soft(grad_step[j], thresh);
    if (!x.allFinite() || x.squaredNorm() > blowup) diverged = true;
    Metric m{1.0, 0.0};
    if (!diverged) m = nmse(x, x_true);
    rows.push_back({0, t + 1, 0.0, 0.0, m.value, m.db, diverged});
    if (diverged) break;
  }
  return rows;
}

double ista_select_lambda(const CsProblem& p, const Vector& x_true, int steps) {
  // 10-point logarithmic grid around |A^T y|_inf, the scale above which the
  // lasso solution is identically zero.
  const double lmax = (p.A.transpose() * p.y).cwiseAbs().maxCoeff();
  double best_l = lmax;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10; ++i) {
    const double l = lmax * std::pow(10.0, -3.0 + 3.0 * i / 9.0);
    auto rows = ista(p, l, steps, x_true);
    if (!rows.empty() && !rows.back().diverged && rows.back().nmse < best) {
      best = rows.back().nmse;
      best_l = l;
    }
  }
  return best_l;
}

std::vector<TraceRow> soft_threshold_amp(const CsProblem& p, double lambda,
                                         int steps, const Vector& x_true) {
  SoftThresholdDenoiser den(lambda);
  DenoiserSchedule sched{&den};
  return run_amp_cs(p, sched, steps, x_true);
}

double soft_threshold_select_lambda(const CsProblem& p, const Vector& x_true,
                                    int steps) {
  double best_l = 1.0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10; ++i) {
    const double l = 0.2 + 0.4 * i;  // grid over [0.2, 3.8]
    auto rows = soft_threshold_amp(p, l, steps, x_true);
    if (!rows.empty() && !rows.back().diverged && rows.back().nmse < best) {
      best = rows.back().nmse;
      best_l = l;
    }
  }
  return best_l;
}

}  // namespace uamp
