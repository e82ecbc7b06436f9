#pragma once

#include "uamp/linalg.hpp"
#include "uamp/prior.hpp"
#include "uamp/rng.hpp"

namespace uamp {

/// One-hidden-layer ReLU network f(y) = sum_j a_j relu(w_j y + b_j) trained
/// on the scalar denoising objective by online gradient descent. Outputs
/// a_j ~ N(0, eps_a) and biases b_j ~ N(0, 1/m) stay frozen; only the
/// hidden weights w_j move.
class ReluLearner {
 public:
  ReluLearner(int m_neurons, double eps_a, double eta, Rng& rng);

  double eval(double y) const;

  /// One step on a fresh sample: gradient of (f(y) - x)^2 in the w_j only.
  void online_step(double y, double x);

  int neurons() const { return static_cast<int>(w_.size()); }
  double eta() const { return eta_; }
  const Vector& hidden_weights() const { return w_; }
  const Vector& outputs() const { return a_; }
  const Vector& biases() const { return b_; }

 private:
  Vector w_, a_, b_;
  double eta_;
};

/// Trains on T fresh (x + tau z, x) pairs and returns the learner's
/// Monte-Carlo denoising MSE E[(f(X + tau Z) - X)^2] over `mc_samples`
/// held-out draws.
double train_relu_learner(ReluLearner& learner, const Prior& prior, double tau,
                          long steps, Rng& rng);

double relu_learner_mse(const ReluLearner& learner, const Prior& prior,
                        double tau, long mc_samples, Rng& rng);

}  // namespace uamp
