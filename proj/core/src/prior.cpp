#include "uamp/prior.hpp"

#include <cmath>
#include <stdexcept>

namespace uamp {

Prior Prior::bernoulli_gaussian(double eps) {
  if (eps <= 0.0 || eps > 1.0) throw std::invalid_argument("bernoulli_gaussian: eps in (0,1]");
  Prior p;
  p.kind_ = Kind::BernoulliGaussian;
  p.eps_ = eps;
  return p;
}

Prior Prior::z2() {
  Prior p;
  p.kind_ = Kind::Z2;
  return p;
}

Prior Prior::gaussian() {
  Prior p;
  p.kind_ = Kind::Gaussian;
  return p;
}

Prior Prior::mixture(MixtureSpec spec) {
  if (spec.weights.empty() || spec.weights.size() != spec.means.size() ||
      spec.weights.size() != spec.covariances.size())
    throw std::invalid_argument("mixture: component count mismatch");
  const auto d = spec.means.front().size();
  Prior p;
  p.chol_.reserve(spec.weights.size());
  for (std::size_t i = 0; i < spec.weights.size(); ++i) {
    if (spec.means[i].size() != d || spec.covariances[i].rows() != d ||
        spec.covariances[i].cols() != d)
      throw std::invalid_argument("mixture: dimension mismatch");
    Eigen::LLT<Matrix> llt(spec.covariances[i]);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("mixture: covariance not SPD");
    p.chol_.push_back(llt.matrixL());
  }
  p.kind_ = Kind::GaussianMixture;
  p.mix_ = std::move(spec);
  return p;
}

Prior Prior::random_mixture(Rng& rng, int d, int components) {
  MixtureSpec spec;
  Rng mean_rng = rng.split("mixture-means");
  Rng eig_rng = rng.split("mixture-eigs");
  Rng rot_rng = rng.split("mixture-rotations");
  for (int c = 0; c < components; ++c) {
    Vector mu(d);
    bool ok = false;
    while (!ok) {
      for (int i = 0; i < d; ++i) mu(i) = mean_rng.normal();
      ok = true;
      for (const auto& prev : spec.means) {
        const double cosang = mu.dot(prev) / (mu.norm() * prev.norm());
        if (std::abs(cosang) > 0.95) ok = false;  // reject collinear pairs
      }
    }
    Vector eigs(d);
    for (int i = 0; i < d; ++i) eigs(i) = 1.0 + eig_rng.uniform();
    eigs *= std::sqrt(static_cast<double>(d)) / eigs.norm();
    Matrix q = truncated_orthogonal(rot_rng, d, d);
    Matrix cov = q * eigs.asDiagonal() * q.transpose();
    cov = 0.5 * (cov + cov.transpose());
    spec.means.push_back(mu);
    spec.covariances.push_back(cov);
    spec.weights.push_back(1.0 / components);
  }
  return mixture(std::move(spec));
}

int Prior::dim() const {
  if (kind_ == Kind::GaussianMixture) return static_cast<int>(mix_.means.front().size());
  return 1;
}

double Prior::mean_scalar() const {
  switch (kind_) {
    case Kind::BernoulliGaussian:
    case Kind::Z2:
    case Kind::Gaussian:
      return 0.0;
    case Kind::GaussianMixture: {
      const int d = dim();
      double acc = 0.0;
      for (std::size_t i = 0; i < mix_.weights.size(); ++i)
        acc += mix_.weights[i] * mix_.means[i].sum();
      return acc / d;
    }
  }
  return 0.0;
}

double Prior::second_moment() const {
  switch (kind_) {
    case Kind::BernoulliGaussian:
      return eps_;
    case Kind::Z2:
    case Kind::Gaussian:
      return 1.0;
    case Kind::GaussianMixture: {
      const int d = dim();
      double acc = 0.0;
      for (std::size_t i = 0; i < mix_.weights.size(); ++i)
        acc += mix_.weights[i] *
               (mix_.covariances[i].trace() + mix_.means[i].squaredNorm());
      return acc / d;
    }
  }
  return 1.0;
}

Vector Prior::sample(Rng& rng, int d) const {
  if (d < 1) throw std::invalid_argument("Prior::sample: d >= 1");
  switch (kind_) {
    case Kind::BernoulliGaussian: {
      Vector x(d);
      for (int i = 0; i < d; ++i) {
        const double u = rng.uniform();
        const double g = rng.normal();  // always drawn: keeps the stream aligned
        x(i) = (u <= eps_) ? g : 0.0;   // exact zeros for the Dirac atom
      }
      return x;
    }
    case Kind::Z2: {
      Vector x(d);
      for (int i = 0; i < d; ++i) x(i) = rng.uniform() <= 0.5 ? 1.0 : -1.0;
      return x;
    }
    case Kind::Gaussian: {
      Vector x(d);
      for (int i = 0; i < d; ++i) x(i) = rng.normal();
      return x;
    }
    case Kind::GaussianMixture: {
      if (d != dim()) throw std::invalid_argument("Prior::sample: mixture dimension mismatch");
      const double u = rng.uniform();
      double acc = 0.0;
      std::size_t c = mix_.weights.size() - 1;
      for (std::size_t i = 0; i < mix_.weights.size(); ++i) {
        acc += mix_.weights[i];
        if (u <= acc) { c = i; break; }
      }
      Vector z(d);
      for (int i = 0; i < d; ++i) z(i) = rng.normal();
      return mix_.means[c] + chol_[c] * z;
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace uamp
