#pragma once

#include <cstdint>

#include "uamp/linalg.hpp"
#include "uamp/prior.hpp"
#include "uamp/rng.hpp"

namespace uamp {

/// Linear-model training set: one fixed sensing matrix, N (signal,
/// observation) pairs y = A x + w with w ~ N(0, sigma2 I).
struct CsDataset {
  Matrix A;  // m x d
  Matrix X;  // d x N
  Matrix Y;  // m x N
  double sigma2 = 0.0;
  double delta() const {
    return static_cast<double>(A.rows()) / static_cast<double>(A.cols());
  }
};

CsDataset generate_cs_dataset(const Prior& prior, const Matrix& A, int n,
                              double sigma2, Rng& rng);

/// Rank-one training set. Observations Y_i = (lambda/d) x_i x_i^T + G_i are
/// regenerated on demand from (noise_seed, i); storing N dense d x d
/// matrices would dominate memory. The same struct covers the
/// low-dimensional non-product setting, where each column of X is a single
/// joint draw instead of d i.i.d. coordinates.
struct R1Dataset {
  Matrix X;  // d x N
  double lambda = 1.0;
  std::uint64_t noise_seed = 0;
  int d() const { return static_cast<int>(X.rows()); }
  int n() const { return static_cast<int>(X.cols()); }
};

R1Dataset generate_r1_dataset(const Prior& prior, int d, int n, double lambda,
                              Rng& rng);

/// Symmetric noise with entries N(0, 1/d) for i <= j, mirrored.
Matrix symmetric_noise(int d, std::uint64_t seed, std::uint64_t index);

/// Y_i = (lambda/d) x_i x_i^T + G_i for sample i.
Matrix r1_observation(const R1Dataset& ds, int i);

}  // namespace uamp
