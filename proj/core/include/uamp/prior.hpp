#pragma once

#include <vector>

#include "uamp/linalg.hpp"
#include "uamp/rng.hpp"

namespace uamp {

/// Gaussian-mixture description with precomputed Cholesky factors for
/// sampling and inverses for denoising. Covariances must be SPD.
struct MixtureSpec {
  std::vector<double> weights;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
};

class Prior {
 public:
  enum class Kind { BernoulliGaussian, Z2, Gaussian, GaussianMixture };

  static Prior bernoulli_gaussian(double eps);
  static Prior z2();
  static Prior gaussian();
  static Prior mixture(MixtureSpec spec);

  /// The d=10 two-component construction used in the multi-dimensional
  /// experiments: random normal means (rejecting near-collinear pairs),
  /// eigenvalues uniform on [1,2] rescaled to norm sqrt(d), conjugated by a
  /// random orthogonal matrix.
  static Prior random_mixture(Rng& rng, int d, int components = 2);

  Kind kind() const { return kind_; }
  double eps() const { return eps_; }
  const MixtureSpec& mix() const { return mix_; }
  bool is_product() const { return kind_ != Kind::GaussianMixture; }
  int dim() const;  // 1 for product priors, d for mixtures

  double mean_scalar() const;
  double second_moment() const;  // E[X^2] (per-coordinate average for mixtures)

  /// d i.i.d. coordinates for product priors; for mixtures d must equal the
  /// mixture dimension and one joint draw is returned.
  Vector sample(Rng& rng, int d) const;

 private:
  Prior() = default;
  Kind kind_ = Kind::Gaussian;
  double eps_ = 0.0;     // Bernoulli-Gaussian mass on the Gaussian component
  MixtureSpec mix_;
  std::vector<Matrix> chol_;  // per-component Cholesky factors
};

}  // namespace uamp
