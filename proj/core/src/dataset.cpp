#include "uamp/dataset.hpp"

#include <stdexcept>

namespace uamp {

CsDataset generate_cs_dataset(const Prior& prior, const Matrix& A, int n,
                              double sigma2, Rng& rng) {
  if (n < 1) throw std::invalid_argument("generate_cs_dataset: n >= 1");
  if (sigma2 < 0.0) throw std::invalid_argument("generate_cs_dataset: sigma2 >= 0");
  const int m = static_cast<int>(A.rows());
  const int d = static_cast<int>(A.cols());
  CsDataset ds;
  ds.A = A;
  ds.sigma2 = sigma2;
  ds.X.resize(d, n);
  ds.Y.resize(m, n);
  const double sd = std::sqrt(sigma2);
  for (int i = 0; i < n; ++i) {
    ds.X.col(i) = prior.sample(rng, d);
    Vector w(m);
    for (int j = 0; j < m; ++j) w[j] = sd * rng.normal();
    ds.Y.col(i) = A * ds.X.col(i) + w;
  }
  return ds;
}

R1Dataset generate_r1_dataset(const Prior& prior, int d, int n, double lambda,
                              Rng& rng) {
  if (n < 1 || d < 1) throw std::invalid_argument("generate_r1_dataset: bad sizes");
  R1Dataset ds;
  ds.lambda = lambda;
  ds.noise_seed = rng.next_u64();
  ds.X.resize(d, n);
  for (int i = 0; i < n; ++i) ds.X.col(i) = prior.sample(rng, d);
  return ds;
}

Matrix symmetric_noise(int d, std::uint64_t seed, std::uint64_t index) {
  Rng rng(seed);
  Rng sub = rng.split(index);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  Matrix G(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      const double g = sd * sub.normal();
      G(i, j) = g;
      G(j, i) = g;
    }
  return G;
}

Matrix r1_observation(const R1Dataset& ds, int i) {
  const int d = ds.d();
  Matrix Y = symmetric_noise(d, ds.noise_seed, static_cast<std::uint64_t>(i));
  Y += (ds.lambda / d) * ds.X.col(i) * ds.X.col(i).transpose();
  return Y;
}

}  // namespace uamp
