#include "uamp/linalg.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace uamp {

double to_db(double v) {
  if (v <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(v);
}

Matrix gaussian_matrix(Rng& rng, int m, int d, double variance) {
  if (m < 1 || d < 1) throw std::invalid_argument("gaussian_matrix: dimensions must be >= 1");
  if (variance <= 0.0) throw std::invalid_argument("gaussian_matrix: variance must be > 0");
  const double s = std::sqrt(variance);
  Matrix a(m, d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < m; ++i) a(i, j) = s * rng.normal();
  return a;
}

Vector gaussian_vector(Rng& rng, int n, double variance) {
  if (n < 1) throw std::invalid_argument("gaussian_vector: length must be >= 1");
  if (variance < 0.0) throw std::invalid_argument("gaussian_vector: variance must be >= 0");
  const double s = std::sqrt(variance);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = s * rng.normal();
  return v;
}

Matrix truncated_orthogonal(Rng& rng, int m, int d) {
  if (m > d) throw std::invalid_argument("truncated_orthogonal: requires m <= d");
  Matrix g = gaussian_matrix(rng, d, d, 1.0);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  // Sign-correct by the diagonal of R so the distribution is Haar.
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q.transpose().topRows(m);
}

Matrix truncated_gram(Rng& rng, int m, int d) {
  if (m > d) throw std::invalid_argument("truncated_gram: requires m <= d");
  Matrix x = gaussian_matrix(rng, d, d, 1.0 / static_cast<double>(m));
  Matrix gram = x.transpose() * x;
  return gram.topRows(m);
}

Metric nmse(const Vector& xhat, const Vector& x) {
  if (xhat.size() != x.size()) throw std::invalid_argument("nmse: length mismatch");
  const double ref = x.squaredNorm();
  if (ref == 0.0) throw std::invalid_argument("nmse: zero reference signal");
  const double v = (xhat - x).squaredNorm() / ref;
  return {v, to_db(v)};
}

Metric frobenius_nmse(const Vector& xhat, const Vector& x) {
  if (xhat.size() != x.size()) throw std::invalid_argument("frobenius_nmse: length mismatch");
  const double nx2 = x.squaredNorm();
  if (nx2 == 0.0) throw std::invalid_argument("frobenius_nmse: zero reference signal");
  const double nh2 = xhat.squaredNorm();
  const double dot = xhat.dot(x);
  const double num = nh2 * nh2 - 2.0 * dot * dot + nx2 * nx2;
  const double v = std::max(num, 0.0) / (nx2 * nx2);
  return {v, to_db(v)};
}

double condition_number(const Matrix& a) {
  Eigen::BDCSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

}  // namespace uamp
