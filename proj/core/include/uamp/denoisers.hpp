#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "uamp/linalg.hpp"
#include "uamp/prior.hpp"

namespace uamp {

/// State-evolution inputs handed to a denoiser: the effective noise scale
/// tau (compressed sensing) or the (mu, tau) channel parameters (rank-one).
struct SeInputs {
  double tau = 0.0;
  double mu = 0.0;
};

struct DenoiserEval {
  double value = 0.0;
  double deriv = 0.0;  // derivative with respect to the observation
};

struct VectorDenoiserEval {
  Vector value;
  double divergence = 0.0;
};

/// Scalar map applied entrywise inside AMP. Implementations must provide an
/// analytic input derivative (used verbatim in the Onsager term).
class ScalarDenoiser {
 public:
  virtual ~ScalarDenoiser() = default;
  virtual DenoiserEval eval(double y, const SeInputs& se) const = 0;

  /// Batched evaluation; the default loops over eval().
  virtual void eval_batch(std::span<const double> y, const SeInputs& se,
                          std::span<double> value, std::span<double> deriv) const;
};

/// R^d -> R^d map with exact divergence, for the non-separable setting.
class VectorDenoiser {
 public:
  virtual ~VectorDenoiser() = default;
  virtual VectorDenoiserEval eval(const Vector& y, const SeInputs& se) const = 0;
};

// --- Closed-form posterior means -------------------------------------------

/// E[X | X + tau Z = y] for the compressed-sensing channel. Throws if
/// se.tau <= 0 or the prior has no scalar closed form.
DenoiserEval optimal_denoiser_cs(const Prior& prior, double y, const SeInputs& se);

/// E[X | mu X + sqrt(tau) Z = y] for the rank-one channel.
DenoiserEval optimal_denoiser_r1(const Prior& prior, double y, const SeInputs& se);

/// Tweedie posterior mean for a d-dimensional Gaussian mixture under the
/// rank-one channel, with exact divergence. Near mu = 0 the rescaling is
/// singular and the prior mean is returned with divergence 0.
VectorDenoiserEval mixture_denoiser_r1(const Prior& prior, const Vector& y,
                                       const SeInputs& se);

/// Parametric ("guided") families from the closed forms. Bernoulli-Gaussian
/// takes (theta1, theta2); Z2 and Gaussian take a single beta.
DenoiserEval guided_denoiser_cs(const Prior& prior, double y, const SeInputs& se,
                                std::span<const double> params);
DenoiserEval guided_denoiser_r1(const Prior& prior, double y, const SeInputs& se,
                                std::span<const double> params);

/// Posterior mean from a smoothed-density score: y + tau^2 * score(y).
double tweedie_denoiser(const std::function<double(double)>& score, double y,
                        double tau);

// --- ScalarDenoiser wrappers ------------------------------------------------

class BayesCsDenoiser final : public ScalarDenoiser {
 public:
  explicit BayesCsDenoiser(Prior prior) : prior_(std::move(prior)) {}
  DenoiserEval eval(double y, const SeInputs& se) const override {
    return optimal_denoiser_cs(prior_, y, se);
  }

 private:
  Prior prior_;
};

class BayesR1Denoiser final : public ScalarDenoiser {
 public:
  explicit BayesR1Denoiser(Prior prior) : prior_(std::move(prior)) {}
  DenoiserEval eval(double y, const SeInputs& se) const override {
    return optimal_denoiser_r1(prior_, y, se);
  }

 private:
  Prior prior_;
};

class GuidedCsDenoiser final : public ScalarDenoiser {
 public:
  GuidedCsDenoiser(Prior prior, std::vector<double> params)
      : prior_(std::move(prior)), params_(std::move(params)) {}
  DenoiserEval eval(double y, const SeInputs& se) const override {
    return guided_denoiser_cs(prior_, y, se, params_);
  }
  std::vector<double>& params() { return params_; }

 private:
  Prior prior_;
  std::vector<double> params_;
};

class GuidedR1Denoiser final : public ScalarDenoiser {
 public:
  GuidedR1Denoiser(Prior prior, std::vector<double> params)
      : prior_(std::move(prior)), params_(std::move(params)) {}
  DenoiserEval eval(double y, const SeInputs& se) const override {
    return guided_denoiser_r1(prior_, y, se, params_);
  }
  std::vector<double>& params() { return params_; }

 private:
  Prior prior_;
  std::vector<double> params_;
};

class ZeroDenoiser final : public ScalarDenoiser {
 public:
  DenoiserEval eval(double, const SeInputs&) const override { return {0.0, 0.0}; }
};

class IdentityDenoiser final : public ScalarDenoiser {
 public:
  DenoiserEval eval(double y, const SeInputs&) const override { return {y, 1.0}; }
};

/// sign(y) * max(|y| - lambda * tau, 0); lambda scales with the empirical
/// noise level as in soft-thresholding AMP.
class SoftThresholdDenoiser final : public ScalarDenoiser {
 public:
  explicit SoftThresholdDenoiser(double lambda) : lambda_(lambda) {}
  DenoiserEval eval(double y, const SeInputs& se) const override;

 private:
  double lambda_;
};

/// Adapts an arbitrary (value, derivative) callable.
class FunctionDenoiser final : public ScalarDenoiser {
 public:
  using Fn = std::function<DenoiserEval(double, const SeInputs&)>;
  explicit FunctionDenoiser(Fn fn) : fn_(std::move(fn)) {}
  DenoiserEval eval(double y, const SeInputs& se) const override { return fn_(y, se); }

 private:
  Fn fn_;
};

/// Applies a scalar denoiser coordinatewise; the divergence is the average
/// of coordinate derivatives, matching the scalar AMP path bit-for-bit.
class SeparableVectorDenoiser final : public VectorDenoiser {
 public:
  explicit SeparableVectorDenoiser(const ScalarDenoiser& scalar) : scalar_(scalar) {}
  VectorDenoiserEval eval(const Vector& y, const SeInputs& se) const override;

 private:
  const ScalarDenoiser& scalar_;
};

class MixtureR1Denoiser final : public VectorDenoiser {
 public:
  explicit MixtureR1Denoiser(Prior prior) : prior_(std::move(prior)) {}
  VectorDenoiserEval eval(const Vector& y, const SeInputs& se) const override {
    return mixture_denoiser_r1(prior_, y, se);
  }

 private:
  Prior prior_;
};

}  // namespace uamp
