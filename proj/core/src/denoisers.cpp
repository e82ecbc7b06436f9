#include "uamp/denoisers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uamp {

namespace {

double logistic(double t) {
  if (t >= 0.0) {
    const double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void require_tau(const SeInputs& se) {
  if (!(se.tau > 0.0)) throw std::invalid_argument("denoiser: tau must be > 0");
}

// Bernoulli-Gaussian posterior mean for the channel y = X + tau Z, written
// as y * sigmoid(-h(y)) / (1 + tau^2) with h the log density ratio; the
// ratio of normal densities is kept in log space throughout.
DenoiserEval bg_cs(double eps, double y, double tau2) {
  const double c = std::log((1.0 - eps) / eps);
  const double a = tau2 * (tau2 + 1.0);
  const double h = c + 0.5 * std::log((tau2 + 1.0) / tau2) - y * y / (2.0 * a);
  const double s = logistic(-h);
  const double scale = 1.0 / (1.0 + tau2);
  const double value = y * s * scale;
  const double deriv = s * scale * (1.0 + y * y * (1.0 - s) / a);
  return {value, deriv};
}

}  // namespace

void ScalarDenoiser::eval_batch(std::span<const double> y, const SeInputs& se,
                                std::span<double> value,
                                std::span<double> deriv) const {
  for (std::size_t i = 0; i < y.size(); ++i) {
    const DenoiserEval e = eval(y[i], se);
    value[i] = e.value;
    deriv[i] = e.deriv;
  }
}

DenoiserEval optimal_denoiser_cs(const Prior& prior, double y, const SeInputs& se) {
  require_tau(se);
  const double tau2 = se.tau * se.tau;
  switch (prior.kind()) {
    case Prior::Kind::Z2: {
      const double f = std::tanh(y / tau2);
      return {f, (1.0 - f * f) / tau2};
    }
    case Prior::Kind::Gaussian: {
      const double g = 1.0 / (1.0 + tau2);
      return {y * g, g};
    }
    case Prior::Kind::BernoulliGaussian:
      return bg_cs(prior.eps(), y, tau2);
    case Prior::Kind::GaussianMixture:
      throw std::invalid_argument("optimal_denoiser_cs: no scalar form for mixtures");
  }
  throw std::logic_error("unreachable");
}

DenoiserEval optimal_denoiser_r1(const Prior& prior, double y, const SeInputs& se) {
  require_tau(se);
  const double mu = se.mu;
  const double tau = se.tau;
  switch (prior.kind()) {
    case Prior::Kind::Z2: {
      const double f = std::tanh(y * mu / tau);
      return {f, (mu / tau) * (1.0 - f * f)};
    }
    case Prior::Kind::Gaussian: {
      const double g = mu / (mu * mu + tau);
      return {y * g, g};
    }
    case Prior::Kind::BernoulliGaussian: {
      // Two-component posterior: spike at 0 vs N(0, mu^2 + tau) marginal.
      const double eps = prior.eps();
      const double q = mu * mu + tau;
      const double h = std::log(eps / (1.0 - eps)) + 0.5 * std::log(tau / q) +
                       y * y * 0.5 * (1.0 / tau - 1.0 / q);
      const double w = logistic(h);
      const double hp = y * (1.0 / tau - 1.0 / q);
      const double g = mu / q;
      return {w * y * g, g * (w + y * w * (1.0 - w) * hp)};
    }
    case Prior::Kind::GaussianMixture:
      throw std::invalid_argument("optimal_denoiser_r1: use mixture_denoiser_r1");
  }
  throw std::logic_error("unreachable");
}

VectorDenoiserEval mixture_denoiser_r1(const Prior& prior, const Vector& y,
                                       const SeInputs& se) {
  if (prior.kind() != Prior::Kind::GaussianMixture)
    throw std::invalid_argument("mixture_denoiser_r1: prior is not a mixture");
  require_tau(se);
  const auto& mix = prior.mix();
  const int d = prior.dim();
  if (y.size() != d) throw std::invalid_argument("mixture_denoiser_r1: dimension mismatch");
  const double mu = se.mu;
  const double tau = se.tau;
  if (std::abs(mu) < 1e-12) {
    // Singular Tweedie rescaling: fall back to the prior mean.
    Vector m = Vector::Zero(d);
    for (std::size_t i = 0; i < mix.weights.size(); ++i)
      m += mix.weights[i] * mix.means[i];
    return {m, 0.0};
  }

  const std::size_t k = mix.weights.size();
  std::vector<Vector> resid(k);      // Q_i^{-1} (y - mu mu_i)
  std::vector<double> logw(k), tr(k);
  for (std::size_t i = 0; i < k; ++i) {
    Matrix q = mu * mu * mix.covariances[i] + tau * Matrix::Identity(d, d);
    Eigen::LLT<Matrix> llt(q);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("mixture_denoiser_r1: channel covariance not SPD");
    const Vector diff = y - mu * mix.means[i];
    resid[i] = llt.solve(diff);
    Matrix qinv = llt.solve(Matrix::Identity(d, d));
    tr[i] = qinv.trace();
    double logdet = 0.0;
    const Matrix l = llt.matrixL();
    for (int j = 0; j < d; ++j) logdet += 2.0 * std::log(l(j, j));
    logw[i] = std::log(mix.weights[i]) - 0.5 * logdet - 0.5 * diff.dot(resid[i]);
  }
  const double lmax = *std::max_element(logw.begin(), logw.end());
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) z += std::exp(logw[i] - lmax);
  std::vector<double> w(k);
  for (std::size_t i = 0; i < k; ++i) w[i] = std::exp(logw[i] - lmax) / z;

  Vector correction = Vector::Zero(d);
  Vector rbar = Vector::Zero(d);
  for (std::size_t i = 0; i < k; ++i) {
    correction += w[i] * resid[i];
    rbar += w[i] * resid[i];
  }
  VectorDenoiserEval out;
  out.value = (y - tau * correction) / mu;

  // div f = (1/mu) (d - tau * sum_i [w_i tr(Q_i^{-1}) + grad(w_i) . r_i])
  // with grad(w_i) = w_i (rbar - r_i) from the softmax gradient.
  double div_corr = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    div_corr += w[i] * tr[i] + w[i] * (rbar - resid[i]).dot(resid[i]);
  out.divergence = (d - tau * div_corr) / mu;
  return out;
}

DenoiserEval guided_denoiser_cs(const Prior& prior, double y, const SeInputs& se,
                                std::span<const double> params) {
  require_tau(se);
  const double tau2 = se.tau * se.tau;
  switch (prior.kind()) {
    case Prior::Kind::Z2: {
      if (params.size() != 1) throw std::invalid_argument("guided Z2: expects one beta");
      const double b = params[0] / tau2;
      const double f = std::tanh(y * b);
      return {f, b * (1.0 - f * f)};
    }
    case Prior::Kind::Gaussian: {
      if (params.size() != 1) throw std::invalid_argument("guided Gaussian: expects one beta");
      const double g = params[0] / (1.0 + tau2);
      return {y * g, g};
    }
    case Prior::Kind::BernoulliGaussian: {
      if (params.size() != 2)
        throw std::invalid_argument("guided Bernoulli-Gaussian: expects (theta1, theta2)");
      const double t1 = params[0], t2 = params[1];
      const double a = tau2 + tau2 * tau2 / t1;
      const double h = t2 + 0.5 * std::log(1.0 + t1 / tau2) - y * y / (2.0 * a);
      const double s = logistic(-h);
      const double scale = 1.0 / (1.0 + tau2 / t1);
      return {y * s * scale, s * scale * (1.0 + y * y * (1.0 - s) / a)};
    }
    case Prior::Kind::GaussianMixture:
      throw std::invalid_argument("guided_denoiser_cs: no mixture form");
  }
  throw std::logic_error("unreachable");
}

DenoiserEval guided_denoiser_r1(const Prior& prior, double y, const SeInputs& se,
                                std::span<const double> params) {
  require_tau(se);
  if (params.size() != 1) throw std::invalid_argument("guided r1: expects one beta");
  const double beta = params[0];
  switch (prior.kind()) {
    case Prior::Kind::Z2: {
      const double b = beta * se.mu / se.tau;
      const double f = std::tanh(y * b);
      return {f, b * (1.0 - f * f)};
    }
    case Prior::Kind::Gaussian: {
      const double g = beta * se.mu / (se.mu * se.mu + se.tau);
      return {y * g, g};
    }
    default:
      throw std::invalid_argument("guided_denoiser_r1: unsupported prior");
  }
}

double tweedie_denoiser(const std::function<double(double)>& score, double y,
                        double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("tweedie_denoiser: tau must be > 0");
  return y + tau * tau * score(y);
}

DenoiserEval SoftThresholdDenoiser::eval(double y, const SeInputs& se) const {
  const double thr = lambda_ * se.tau;
  if (y > thr) return {y - thr, 1.0};
  if (y < -thr) return {y + thr, 1.0};
  return {0.0, 0.0};
}

VectorDenoiserEval SeparableVectorDenoiser::eval(const Vector& y,
                                                 const SeInputs& se) const {
  VectorDenoiserEval out;
  out.value.resize(y.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const DenoiserEval e = scalar_.eval(y(i), se);
    out.value(i) = e.value;
    acc += e.deriv;
  }
  out.divergence = acc;  // divergence of a separable map = sum of derivatives
  return out;
}

}  // namespace uamp
