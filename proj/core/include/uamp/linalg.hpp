#pragma once

#include <Eigen/Dense>

#include "uamp/rng.hpp"

namespace uamp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// NMSE value plus its dB rendering (db = -inf when value == 0).
struct Metric {
  double value = 0.0;
  double db = 0.0;
};

/// m x d matrix with i.i.d. N(0, variance) entries; deterministic in rng.
Matrix gaussian_matrix(Rng& rng, int m, int d, double variance);

/// i.i.d. N(0, variance) vector.
Vector gaussian_vector(Rng& rng, int n, double variance);

/// First m rows of a Haar-random d x d orthogonal matrix (orthonormal rows,
/// condition number 1). Requires m <= d.
Matrix truncated_orthogonal(Rng& rng, int m, int d);

/// First m rows of X^T X with X a d x d matrix of N(0, 1/m) entries.
/// Ill-conditioned by construction. Requires m <= d.
Matrix truncated_gram(Rng& rng, int m, int d);

/// ||xhat - x||^2 / ||x||^2. Throws on length mismatch or ||x|| == 0.
Metric nmse(const Vector& xhat, const Vector& x);

/// ||xhat xhat^T - x x^T||_F^2 / ||x x^T||_F^2 without forming the d x d
/// matrices, via ||ab^T - cd^T||_F^2 = |a|^2|b|^2 - 2(a.c)(b.d) + |c|^2|d|^2.
/// Sign-invariant: frobenius_nmse(-x, x) == 0.
Metric frobenius_nmse(const Vector& xhat, const Vector& x);

/// Ratio of extreme singular values (diagnostic; SVD cost accepted).
double condition_number(const Matrix& a);

double to_db(double v);

}  // namespace uamp
