#include "uamp/state_evolution.hpp"

#include <cmath>
#include <stdexcept>

namespace uamp {

GaussHermite GaussHermite::make(int n) {
  if (n < 1) throw std::invalid_argument("GaussHermite: n >= 1");
  Matrix jacobi = Matrix::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = std::sqrt(i / 2.0);
    jacobi(i, i - 1) = b;
    jacobi(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  GaussHermite gh;
  // Physicists' nodes x_i scale to z_i = sqrt(2) x_i for a standard normal;
  // probabilities are the squared first eigenvector components.
  gh.nodes = std::sqrt(2.0) * es.eigenvalues();
  gh.probs.resize(n);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    gh.probs(i) = v0 * v0;
  }
  gh.probs /= gh.probs.sum();
  return gh;
}

PriorNodes prior_nodes(const Prior& prior, int quad_nodes) {
  PriorNodes pn;
  switch (prior.kind()) {
    case Prior::Kind::Z2:
      pn.x = {-1.0, 1.0};
      pn.w = {0.5, 0.5};
      break;
    case Prior::Kind::Gaussian: {
      const GaussHermite gh = GaussHermite::make(quad_nodes);
      for (int i = 0; i < gh.nodes.size(); ++i) {
        pn.x.push_back(gh.nodes(i));
        pn.w.push_back(gh.probs(i));
      }
      break;
    }
    case Prior::Kind::BernoulliGaussian: {
      pn.x.push_back(0.0);
      pn.w.push_back(1.0 - prior.eps());
      const GaussHermite gh = GaussHermite::make(quad_nodes);
      for (int i = 0; i < gh.nodes.size(); ++i) {
        pn.x.push_back(gh.nodes(i));
        pn.w.push_back(prior.eps() * gh.probs(i));
      }
      break;
    }
    case Prior::Kind::GaussianMixture:
      throw std::invalid_argument("prior_nodes: scalar recursion needs a product prior");
  }
  return pn;
}

double denoising_mse_cs(const Prior& prior, const ScalarDenoiser& denoiser,
                        double tau, int quad_nodes) {
  const PriorNodes pn = prior_nodes(prior, quad_nodes);
  const GaussHermite gh = GaussHermite::make(quad_nodes);
  const SeInputs se{tau, 0.0};
  double acc = 0.0;
  for (std::size_t i = 0; i < pn.x.size(); ++i) {
    for (int j = 0; j < gh.nodes.size(); ++j) {
      const double y = pn.x[i] + tau * gh.nodes(j);
      const double f = denoiser.eval(y, se).value;
      const double e = f - pn.x[i];
      acc += pn.w[i] * gh.probs(j) * e * e;
    }
  }
  return acc;
}

SeTrace se_cs(const Prior& prior, const ScalarDenoiser& denoiser, double sigma2,
              double delta, int layers, int quad_nodes) {
  if (!(delta > 0.0)) throw std::invalid_argument("se_cs: delta > 0");
  if (layers < 1) throw std::invalid_argument("se_cs: layers >= 1");
  SeTrace tr;
  tr.setting = SeSetting::Cs;
  double tau2 = sigma2 + prior.second_moment() / delta;
  tr.tau2.push_back(tau2);
  double prev_delta = 0.0;
  for (int l = 0; l < layers; ++l) {
    const double mse = denoising_mse_cs(prior, denoiser, std::sqrt(tau2), quad_nodes);
    tr.mse.push_back(mse);
    double next = sigma2 + mse / delta;
    const double step = next - tau2;
    if (l > 0 && step * prev_delta < 0.0) next = 0.5 * (next + tau2);  // damp oscillation
    prev_delta = next - tau2;
    tau2 = next;
    tr.tau2.push_back(tau2);
  }
  return tr;
}

SeTrace se_r1(const Prior& prior, const ScalarDenoiser& denoiser, double lambda,
              int layers, double mu0, double tau0, int quad_nodes) {
  if (!(lambda > 0.0)) throw std::invalid_argument("se_r1: lambda > 0");
  if (layers < 1) throw std::invalid_argument("se_r1: layers >= 1");
  SeTrace tr;
  tr.setting = SeSetting::R1;
  tr.lambda = lambda;
  double mu = mu0;
  if (mu < 0.0) {
    mu = lambda * prior.mean_scalar();
    if (mu == 0.0) mu = 1e-3;  // modeling choice: finite-d escape from mu = 0
  }
  double tau = tau0;
  tr.mu.push_back(mu);
  tr.tau2.push_back(tau);
  const PriorNodes pn = prior_nodes(prior, quad_nodes);
  const GaussHermite gh = GaussHermite::make(quad_nodes);
  for (int l = 0; l < layers; ++l) {
    if (!(tau > 0.0)) {  // estimator collapse is representable
      tr.overlap.push_back(0.0);
      tr.mse.push_back(0.0);
      tr.mu.push_back(0.0);
      tr.tau2.push_back(0.0);
      mu = 0.0;
      tau = 0.0;
      continue;
    }
    const SeInputs se{tau, mu};
    const double sq = std::sqrt(tau);
    double xf = 0.0, f2 = 0.0;
    for (std::size_t i = 0; i < pn.x.size(); ++i) {
      for (int j = 0; j < gh.nodes.size(); ++j) {
        const double y = mu * pn.x[i] + sq * gh.nodes(j);
        const double f = denoiser.eval(y, se).value;
        const double w = pn.w[i] * gh.probs(j);
        xf += w * pn.x[i] * f;
        f2 += w * f * f;
      }
    }
    tr.overlap.push_back(xf);
    tr.mse.push_back(f2);
    mu = lambda * xf;
    tau = f2;
    tr.mu.push_back(mu);
    tr.tau2.push_back(tau);
  }
  return tr;
}

std::vector<double> se_predicted_nmse(const SeTrace& trace, const Prior& prior) {
  const double m2 = prior.second_moment();
  std::vector<double> out;
  if (trace.setting == SeSetting::Cs) {
    for (double mse : trace.mse) out.push_back(mse / m2);
    return out;
  }
  for (std::size_t l = 0; l < trace.overlap.size(); ++l) {
    const double q = trace.overlap[l];     // (xh . x)/d limit
    const double t = trace.mse[l];         // ||xh||^2/d limit
    out.push_back((t * t - 2.0 * q * q + m2 * m2) / (m2 * m2));
  }
  return out;
}

}  // namespace uamp
