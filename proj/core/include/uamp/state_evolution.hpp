#pragma once

#include <vector>

#include "uamp/denoisers.hpp"
#include "uamp/prior.hpp"

namespace uamp {

/// Nodes z_i and probabilities p_i (summing to 1) such that
/// E_{Z~N(0,1)}[g(Z)] ~ sum_i p_i g(z_i). Golub-Welsch on the Hermite
/// Jacobi matrix.
struct GaussHermite {
  Vector nodes;
  Vector probs;
  static GaussHermite make(int n);
};

enum class SeSetting { Cs, R1 };

struct SeTrace {
  SeSetting setting = SeSetting::Cs;
  std::vector<double> tau2;  // CS: tau_l^2, l = 0..L; R1: tau_l
  std::vector<double> mu;    // R1 only: mu_l, l = 0..L
  std::vector<double> mse;   // per layer denoising MSE (CS) or E[f^2] overlap data
  std::vector<double> overlap;  // R1 only: E[X f] per layer
  double lambda = 0.0;
};

/// Compressed-sensing recursion: tau_0^2 = sigma^2 + E[X^2]/delta,
/// tau_{l+1}^2 = sigma^2 + E[(f(X + tau_l Z; tau_l) - X)^2]/delta.
/// Oscillation triggers 0.5 damping of the tau^2 update.
SeTrace se_cs(const Prior& prior, const ScalarDenoiser& denoiser, double sigma2,
              double delta, int layers, int quad_nodes = 200);

/// Rank-one recursion: mu_{l+1} = lambda E[X f(mu_l X + sqrt(tau_l) Z)],
/// tau_{l+1} = E[f(...)^2]. Defaults: mu_0 = lambda E[X] with a 1e-3 kick
/// when that is zero (the all-ones start escapes mu = 0 only through
/// finite-d fluctuations; the kick models that escape), tau_0 = 1.
SeTrace se_r1(const Prior& prior, const ScalarDenoiser& denoiser, double lambda,
              int layers, double mu0 = -1.0, double tau0 = 1.0,
              int quad_nodes = 200);

/// Per-layer NMSE predictions. CS: mse_l / E[X^2]. R1: the Frobenius NMSE
/// (tau_{l+1}^2 - 2 q_l^2 + m2^2) / m2^2 with q_l = mu_{l+1}/lambda, i.e.
/// the expansion of ||xh xh^T - x x^T||_F^2 / ||x x^T||_F^2 under
/// ||xh||^2/d -> tau, (xh.x)/d -> q, ||x||^2/d -> m2.
std::vector<double> se_predicted_nmse(const SeTrace& trace, const Prior& prior);

/// E[(f(X + tau Z; tau) - X)^2] by quadrature (CS channel).
double denoising_mse_cs(const Prior& prior, const ScalarDenoiser& denoiser,
                        double tau, int quad_nodes = 200);

/// E over the prior: sum of atoms and/or Gauss-Hermite nodes.
struct PriorNodes {
  std::vector<double> x;
  std::vector<double> w;
};
PriorNodes prior_nodes(const Prior& prior, int quad_nodes = 200);

}  // namespace uamp
