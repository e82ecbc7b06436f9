#include <cmath>

#include "doctest.h"
#include "uamp/state_evolution.hpp"

using namespace uamp;

TEST_CASE("gauss-hermite nodes reproduce standard normal moments") {
  GaussHermite gh = GaussHermite::make(40);
  CHECK(gh.probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
  auto moment = [&](int k) {
    double s = 0.0;
    for (int i = 0; i < gh.nodes.size(); ++i)
      s += gh.probs[i] * std::pow(gh.nodes[i], k);
    return s;
  };
  CHECK(moment(1) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(moment(2) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(moment(3) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(moment(4) == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(moment(6) == doctest::Approx(15.0).epsilon(1e-10));
  // and a non-polynomial expectation: E[exp(Z)] = exp(1/2)
  double s = 0.0;
  for (int i = 0; i < gh.nodes.size(); ++i) s += gh.probs[i] * std::exp(gh.nodes[i]);
  CHECK(s == doctest::Approx(std::exp(0.5)).epsilon(1e-10));
}

TEST_CASE("prior nodes integrate exactly over discrete and mixed priors") {
  PriorNodes z2 = prior_nodes(Prior::z2());
  double m2 = 0.0, m1 = 0.0, w = 0.0;
  for (std::size_t i = 0; i < z2.x.size(); ++i) {
    w += z2.w[i];
    m1 += z2.w[i] * z2.x[i];
    m2 += z2.w[i] * z2.x[i] * z2.x[i];
  }
  CHECK(w == doctest::Approx(1.0));
  CHECK(m1 == doctest::Approx(0.0));
  CHECK(m2 == doctest::Approx(1.0));

  PriorNodes bg = prior_nodes(Prior::bernoulli_gaussian(0.1));
  m2 = 0.0;
  w = 0.0;
  for (std::size_t i = 0; i < bg.x.size(); ++i) {
    w += bg.w[i];
    m2 += bg.w[i] * bg.x[i] * bg.x[i];
  }
  CHECK(w == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(m2 == doctest::Approx(0.1).epsilon(1e-10));
}

TEST_CASE("quadrature denoising mse matches monte carlo within three SE") {
  // E[(f(X + tau Z) - X)^2] for the Bayes denoiser, Bernoulli-Gaussian prior.
  Prior prior = Prior::bernoulli_gaussian(0.1);
  BayesCsDenoiser f(prior);
  const double tau = 0.3;
  const double quad = denoising_mse_cs(prior, f, tau);

  Rng rng(21);
  const long n = 1000000;
  double sum = 0.0, sum2 = 0.0;
  SeInputs se{tau, 0.0};
  for (long i = 0; i < n; ++i) {
    const double x = prior.sample(rng, 1)[0];
    const double y = x + tau * rng.normal();
    const double e = f.eval(y, se).value - x;
    sum += e * e;
    sum2 += e * e * e * e;
  }
  const double mc = sum / n;
  const double se_mc = std::sqrt((sum2 / n - mc * mc) / n);
  CHECK(std::abs(quad - mc) < 3.0 * se_mc);
}

TEST_CASE("cs recursion starts at sigma2 + m2/delta and contracts") {
  Prior prior = Prior::bernoulli_gaussian(0.1);
  BayesCsDenoiser f(prior);
  const double sigma2 = 2e-5, delta = 0.5;
  SeTrace t = se_cs(prior, f, sigma2, delta, 15);
  REQUIRE(t.tau2.size() == 16);
  CHECK(t.tau2[0] == doctest::Approx(sigma2 + prior.second_moment() / delta));
  for (std::size_t l = 1; l < t.tau2.size(); ++l) CHECK(t.tau2[l] <= t.tau2[l - 1] + 1e-15);
  // fixed point must dominate the noise floor
  CHECK(t.tau2.back() >= sigma2);
  // predicted NMSE at the last layer should be deep (paper regime ~ -45 dB)
  std::vector<double> nmse = se_predicted_nmse(t, prior);
  CHECK(10.0 * std::log10(nmse.back()) < -40.0);
}

TEST_CASE("rank-one gaussian recursion hits the analytic fixed point") {
  // For the Gaussian prior the Bayes denoiser is linear and the recursion
  // has the closed-form informative fixed point q* = 1 - 1/lambda^2,
  // giving Frobenius NMSE 1 - q*^2.
  Prior prior = Prior::gaussian();
  BayesR1Denoiser f(prior);
  const double lambda = 1.5;
  SeTrace t = se_r1(prior, f, lambda, 200);
  std::vector<double> nmse = se_predicted_nmse(t, prior);
  const double q = 1.0 - 1.0 / (lambda * lambda);
  CHECK(nmse.back() == doctest::Approx(1.0 - q * q).epsilon(1e-6));
  const double mu_star = t.mu.back();
  CHECK(mu_star / lambda == doctest::Approx(q).epsilon(1e-6));
}

TEST_CASE("rank-one z2 recursion matches a monte carlo fixed-point oracle") {
  // Oracle: iterate q_{t+1} = E_Z[tanh(lambda^2 q_t + lambda sqrt(q_t) Z)]
  // by brute-force Monte Carlo (the overlap recursion for the two-point
  // prior, where E[X f] = E[f^2] lets q track both state variables).
  const double lambda = 1.5;
  Rng rng(22);
  const int n = 400000;
  Vector z(n);
  for (int i = 0; i < n; ++i) z[i] = rng.normal();
  double q = 0.5;
  for (int it = 0; it < 300; ++it) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      s += std::tanh(lambda * lambda * q + lambda * std::sqrt(q) * z[i]);
    q = s / n;
  }
  const double oracle_nmse = 1.0 - q * q;

  Prior prior = Prior::z2();
  BayesR1Denoiser f(prior);
  SeTrace t = se_r1(prior, f, lambda, 300);
  std::vector<double> nmse = se_predicted_nmse(t, prior);
  CHECK(nmse.back() == doctest::Approx(oracle_nmse).epsilon(5e-3));
}
