#include <cmath>

#include "doctest.h"
#include "uamp/denoisers.hpp"
#include "uamp/prior.hpp"

using namespace uamp;

namespace {

double normal_pdf(double x, double var) {
  return std::exp(-0.5 * x * x / var) / std::sqrt(2.0 * M_PI * var);
}

// Independent quadrature oracle for E[X | X + tau Z = y] under the
// Bernoulli-Gaussian prior: trapezoid over the continuous component plus
// the atom at zero.
double bg_cs_oracle(double eps, double y, double tau) {
  const double tau2 = tau * tau;
  const int n = 8001;
  const double lo = -10.0, hi = 10.0;
  const double dx = (hi - lo) / (n - 1);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = lo + i * dx;
    const double wq = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    const double f = eps * normal_pdf(x, 1.0) * normal_pdf(y - x, tau2) * wq * dx;
    num += x * f;
    den += f;
  }
  den += (1.0 - eps) * normal_pdf(y, tau2);
  return num / den;
}

// Same integral for the rank-one channel y = mu X + sqrt(tau) Z.
double bg_r1_oracle(double eps, double y, double mu, double tau) {
  const int n = 8001;
  const double lo = -10.0, hi = 10.0;
  const double dx = (hi - lo) / (n - 1);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = lo + i * dx;
    const double wq = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    const double f = eps * normal_pdf(x, 1.0) * normal_pdf(y - mu * x, tau) * wq * dx;
    num += x * f;
    den += f;
  }
  den += (1.0 - eps) * normal_pdf(y, tau);
  return num / den;
}

void check_derivative(const ScalarDenoiser& den, double y, const SeInputs& se,
                      double tol = 1e-5) {
  const double h = 1e-6;
  const double fd = (den.eval(y + h, se).value - den.eval(y - h, se).value) / (2 * h);
  CHECK(den.eval(y, se).deriv == doctest::Approx(fd).epsilon(tol));
}

}  // namespace

TEST_CASE("prior sampling moments") {
  Rng rng(1);
  Prior z2 = Prior::z2();
  Prior bg = Prior::bernoulli_gaussian(0.1);
  Prior g = Prior::gaussian();
  CHECK(z2.second_moment() == doctest::Approx(1.0));
  CHECK(bg.second_moment() == doctest::Approx(0.1));
  CHECK(g.second_moment() == doctest::Approx(1.0));
  const int n = 100000;
  Vector zs = z2.sample(rng, n);
  CHECK(std::abs(zs.mean()) < 0.02);
  CHECK(zs.cwiseAbs().minCoeff() == doctest::Approx(1.0));
  Vector bs = bg.sample(rng, n);
  int zeros = 0;
  for (int i = 0; i < n; ++i) zeros += bs[i] == 0.0;
  CHECK(static_cast<double>(zeros) / n == doctest::Approx(0.9).epsilon(0.01));
  CHECK(bs.squaredNorm() / n == doctest::Approx(0.1).epsilon(0.05));
}

TEST_CASE("two-atom posterior: Z2 denoisers are tanh maps") {
  SeInputs cs{0.7, 0.0};
  Prior z2 = Prior::z2();
  for (double y : {-1.5, -0.2, 0.0, 0.9, 2.4}) {
    // direct two-atom posterior: sum_x x w(x) / sum_x w(x), x in {-1, +1}
    const double t2 = cs.tau * cs.tau;
    const double wp = std::exp(-0.5 * (y - 1) * (y - 1) / t2);
    const double wm = std::exp(-0.5 * (y + 1) * (y + 1) / t2);
    CHECK(optimal_denoiser_cs(z2, y, cs).value ==
          doctest::Approx((wp - wm) / (wp + wm)).epsilon(1e-12));
    CHECK(optimal_denoiser_cs(z2, y, cs).value ==
          doctest::Approx(std::tanh(y / t2)).epsilon(1e-12));
  }
  SeInputs r1{0.8, 0.6};  // tau, mu
  for (double y : {-1.1, 0.3, 1.7}) {
    CHECK(optimal_denoiser_r1(z2, y, r1).value ==
          doctest::Approx(std::tanh(r1.mu * y / r1.tau)).epsilon(1e-12));
    check_derivative(BayesR1Denoiser(z2), y, r1);
  }
}

TEST_CASE("gaussian prior denoisers are the linear shrinkers") {
  Prior g = Prior::gaussian();
  SeInputs cs{0.5, 0.0};
  CHECK(optimal_denoiser_cs(g, 1.3, cs).value ==
        doctest::Approx(1.3 / (1.0 + 0.25)).epsilon(1e-12));
  SeInputs r1{0.4, 0.9};
  CHECK(optimal_denoiser_r1(g, -0.7, r1).value ==
        doctest::Approx(0.9 * -0.7 / (0.81 + 0.4)).epsilon(1e-12));
  check_derivative(BayesCsDenoiser(g), 1.3, cs);
}

TEST_CASE("bernoulli-gaussian denoiser matches the quadrature oracle") {
  const double eps = 0.1;
  Prior bg = Prior::bernoulli_gaussian(eps);
  for (double tau : {0.1, 0.5, 1.2}) {
    SeInputs cs{tau, 0.0};
    for (double y : {-2.0, -0.3, 0.0, 0.8, 3.1}) {
      CHECK(optimal_denoiser_cs(bg, y, cs).value ==
            doctest::Approx(bg_cs_oracle(eps, y, tau)).epsilon(1e-6));
      check_derivative(BayesCsDenoiser(bg), y, cs);
    }
  }
  SeInputs r1{0.6, 0.8};
  for (double y : {-1.4, 0.2, 2.2}) {
    CHECK(optimal_denoiser_r1(bg, y, r1).value ==
          doctest::Approx(bg_r1_oracle(eps, y, r1.mu, r1.tau)).epsilon(1e-6));
  }
}

TEST_CASE("guided denoisers reduce to the Bayes forms at canonical parameters") {
  SeInputs cs{0.63, 0.0};
  Prior z2 = Prior::z2();
  Prior g = Prior::gaussian();
  const double eps = 0.1;
  Prior bg = Prior::bernoulli_gaussian(eps);
  const double theta[2] = {1.0, std::log((1.0 - eps) / eps)};
  for (double y : {-2.1, -0.4, 0.5, 1.8}) {
    CHECK(guided_denoiser_cs(z2, y, cs, std::span<const double>(theta, 1)).value ==
          doctest::Approx(optimal_denoiser_cs(z2, y, cs).value).epsilon(1e-10));
    CHECK(guided_denoiser_cs(g, y, cs, std::span<const double>(theta, 1)).value ==
          doctest::Approx(optimal_denoiser_cs(g, y, cs).value).epsilon(1e-10));
    CHECK(guided_denoiser_cs(bg, y, cs, std::span<const double>(theta, 2)).value ==
          doctest::Approx(optimal_denoiser_cs(bg, y, cs).value).epsilon(1e-8));
  }
  SeInputs r1{0.5, 0.7};
  const double beta = 1.0;
  for (double y : {-1.0, 0.6}) {
    CHECK(guided_denoiser_r1(z2, y, r1, std::span<const double>(&beta, 1)).value ==
          doctest::Approx(optimal_denoiser_r1(z2, y, r1).value).epsilon(1e-10));
    CHECK(guided_denoiser_r1(g, y, r1, std::span<const double>(&beta, 1)).value ==
          doctest::Approx(optimal_denoiser_r1(g, y, r1).value).epsilon(1e-10));
  }
}

TEST_CASE("soft threshold denoiser") {
  SoftThresholdDenoiser den(1.5);
  SeInputs se{0.4, 0.0};  // threshold 0.6
  CHECK(den.eval(0.5, se).value == 0.0);
  CHECK(den.eval(0.5, se).deriv == 0.0);
  CHECK(den.eval(1.0, se).value == doctest::Approx(0.4));
  CHECK(den.eval(1.0, se).deriv == doctest::Approx(1.0));
  CHECK(den.eval(-1.0, se).value == doctest::Approx(-0.4));
}

TEST_CASE("tweedie form recovers the gaussian posterior mean") {
  // smoothed density of N(0,1) prior at noise tau: N(0, 1 + tau^2); its
  // score is -y / (1 + tau^2), so tweedie gives y (1 - tau^2/(1+tau^2)).
  const double tau = 0.8;
  auto score = [&](double y) { return -y / (1.0 + tau * tau); };
  CHECK(tweedie_denoiser(score, 1.1, tau) ==
        doctest::Approx(1.1 / (1.0 + tau * tau)).epsilon(1e-12));
}

TEST_CASE("multivariate mixture denoiser matches a grid oracle in 2-D") {
  MixtureSpec spec;
  spec.weights = {0.4, 0.6};
  Vector m1(2), m2(2);
  m1 << 1.0, -0.5;
  m2 << -1.2, 0.8;
  spec.means = {m1, m2};
  Matrix c1(2, 2), c2(2, 2);
  c1 << 0.8, 0.2, 0.2, 0.6;
  c2 << 1.1, -0.3, -0.3, 0.9;
  spec.covariances = {c1, c2};
  Prior mix = Prior::mixture(spec);

  const double mu = 0.7, tau = 0.5;
  SeInputs se{tau, mu};
  Vector y(2);
  y << 0.4, -0.2;
  VectorDenoiserEval got = mixture_denoiser_r1(mix, y, se);

  // oracle: grid integration of the posterior under y = mu x + sqrt(tau) g
  auto prior_pdf = [&](const Vector& x) {
    double p = 0.0;
    for (int i = 0; i < 2; ++i) {
      const Matrix& cv = spec.covariances[static_cast<std::size_t>(i)];
      const Vector d = x - spec.means[static_cast<std::size_t>(i)];
      const double q = d.dot(cv.inverse() * d);
      p += spec.weights[static_cast<std::size_t>(i)] *
           std::exp(-0.5 * q) / (2.0 * M_PI * std::sqrt(cv.determinant()));
    }
    return p;
  };
  const int n = 241;
  const double lo = -6.0, hi = 6.0, dx = (hi - lo) / (n - 1);
  Vector num = Vector::Zero(2);
  double den = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Vector x(2);
      x << lo + i * dx, lo + j * dx;
      const Vector r = y - mu * x;
      const double lik = std::exp(-0.5 * r.squaredNorm() / tau);
      const double f = prior_pdf(x) * lik;
      num += x * f;
      den += f;
    }
  }
  Vector oracle = num / den;
  CHECK(got.value[0] == doctest::Approx(oracle[0]).epsilon(1e-5));
  CHECK(got.value[1] == doctest::Approx(oracle[1]).epsilon(1e-5));

  // divergence vs finite differences
  const double h = 1e-6;
  double fd = 0.0;
  for (int i = 0; i < 2; ++i) {
    Vector yp = y, ym = y;
    yp[i] += h;
    ym[i] -= h;
    fd += (mixture_denoiser_r1(mix, yp, se).value[i] -
           mixture_denoiser_r1(mix, ym, se).value[i]) /
          (2 * h);
  }
  CHECK(got.divergence == doctest::Approx(fd).epsilon(1e-5));
}

TEST_CASE("random mixture construction is well-formed") {
  Rng rng(7);
  Prior mix = Prior::random_mixture(rng, 10);
  CHECK(mix.dim() == 10);
  CHECK(mix.mix().weights.size() == 2);
  for (const Matrix& cv : mix.mix().covariances) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cv);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
  Vector x = mix.sample(rng, 10);
  CHECK(x.size() == 10);
}
