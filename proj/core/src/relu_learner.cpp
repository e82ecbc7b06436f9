#include "uamp/relu_learner.hpp"

#include <cmath>
#include <stdexcept>

namespace uamp {

ReluLearner::ReluLearner(int m_neurons, double eps_a, double eta, Rng& rng)
    : eta_(eta) {
  if (m_neurons < 1) throw std::invalid_argument("ReluLearner: m_neurons >= 1");
  if (eps_a <= 0.0 || eps_a > 1.0)
    throw std::invalid_argument("ReluLearner: eps_a in (0, 1]");
  const double sd_inner = 1.0 / std::sqrt(static_cast<double>(m_neurons));
  const double sd_a = std::sqrt(eps_a);
  w_.resize(m_neurons);
  a_.resize(m_neurons);
  b_.resize(m_neurons);
  for (int j = 0; j < m_neurons; ++j) {
    w_[j] = sd_inner * rng.normal();
    b_[j] = sd_inner * rng.normal();
    a_[j] = sd_a * rng.normal();
  }
}

double ReluLearner::eval(double y) const {
  return a_.dot((w_.array() * y + b_.array()).max(0.0).matrix());
}

void ReluLearner::online_step(double y, double x) {
  Eigen::ArrayXd pre = w_.array() * y + b_.array();
  const double f = a_.dot(pre.max(0.0).matrix());
  const double err = 2.0 * (f - x);
  // d f / d w_j = a_j * y * 1[w_j y + b_j > 0]
  w_.array() -= (eta_ * err * y) * a_.array() * (pre > 0.0).cast<double>();
}

double train_relu_learner(ReluLearner& learner, const Prior& prior, double tau,
                          long steps, Rng& rng) {
  Rng data = rng.split("relu-train");
  for (long t = 0; t < steps; ++t) {
    const double x = prior.sample(data, 1)(0);
    const double y = x + tau * data.normal();
    learner.online_step(y, x);
  }
  Rng eval = rng.split("relu-eval");
  return relu_learner_mse(learner, prior, tau, 20000, eval);
}

double relu_learner_mse(const ReluLearner& learner, const Prior& prior,
                        double tau, long mc_samples, Rng& rng) {
  double acc = 0.0;
  for (long t = 0; t < mc_samples; ++t) {
    const double x = prior.sample(rng, 1)(0);
    const double y = x + tau * rng.normal();
    const double e = learner.eval(y) - x;
    acc += e * e;
  }
  return acc / static_cast<double>(mc_samples);
}

}  // namespace uamp
