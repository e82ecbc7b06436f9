#pragma once

#include <vector>

#include "uamp/denoisers.hpp"
#include "uamp/linalg.hpp"
#include "uamp/rng.hpp"

namespace uamp {

enum class Activation { Gelu, Relu };

double activation_value(Activation a, double x);
double activation_deriv(Activation a, double x);
double activation_second(Activation a, double x);

struct MlpGrad {
  std::vector<Matrix> W;
  std::vector<Vector> b;
  void setZero();
};

/// Feedforward network evaluated in batch (columns are samples). Supports a
/// joint value/tangent forward pass (the tangent carries d(output)/d(input_i)
/// for one input coordinate) and a reverse pass that accepts adjoints on
/// BOTH outputs. Backpropagating through the tangent output is what lets
/// training differentiate the Onsager term, which is itself a derivative;
/// that path needs the activation's second derivative (GELU is smooth, ReLU
/// uses 0 almost everywhere).
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> widths, Activation act);

  void init(Rng& rng);

  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  int layer_count() const { return static_cast<int>(W.size()); }
  const std::vector<int>& widths() const { return widths_; }
  Activation activation() const { return act_; }

  struct Cache {
    Matrix x;                // input, in x B
    std::vector<Matrix> s;   // pre-activations
    std::vector<Matrix> z;   // post-activations (final layer: z == s)
    std::vector<Matrix> a;   // activation aux (GELU: cached tanh; ReLU: unused)
    std::vector<Matrix> u;   // tangent pre-activations
    std::vector<Matrix> t;   // tangent post-activations
    bool has_tangent = false;
    int tangent_index = -1;
    const Matrix& value() const { return z.back(); }
    const Matrix& tangent() const { return t.back(); }
  };

  /// tangent_index < 0 skips the tangent pass.
  void forward(const Matrix& X, int tangent_index, Cache& c) const;

  /// dtan may be null when the cache has no tangent or the tangent output
  /// does not enter the loss. Accumulates parameter gradients into g and
  /// input adjoints into dX (both optional).
  void backward(const Cache& c, const Matrix& dval, const Matrix* dtan,
                MlpGrad* g, Matrix* dX) const;

  /// Sum over i < n of d(out_i)/d(in_i) per column, using a value-only
  /// cache. One extra tangent propagation per coordinate.
  Vector jacobian_trace(const Cache& c, int n) const;

  MlpGrad zero_grad() const;

  std::vector<Matrix> W;
  std::vector<Vector> b;

 private:
  std::vector<int> widths_;
  Activation act_ = Activation::Gelu;
};

/// Adam over one Mlp's parameters.
class AdamMlp {
 public:
  AdamMlp() = default;
  explicit AdamMlp(const Mlp& mlp, double lr = 1e-3, double beta1 = 0.9,
                   double beta2 = 0.999, double eps = 1e-8);
  void step(Mlp& mlp, const MlpGrad& g);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<Matrix> mW_, vW_;
  std::vector<Vector> mb_, vb_;
};

/// Adam over a single dense matrix (the learnable B).
class AdamMatrix {
 public:
  AdamMatrix() = default;
  AdamMatrix(int rows, int cols, double lr = 1e-3);
  void step(Matrix& p, const Matrix& g);
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  Matrix m_, v_;
};

/// Scalar denoiser backed by an Mlp. Input layout: [r, tau] (CS) or
/// [r, mu, tau] (rank-one); the derivative is the exact tangent.
class MlpDenoiser final : public ScalarDenoiser {
 public:
  enum class InputKind { Cs, R1 };
  MlpDenoiser(const Mlp* mlp, InputKind kind) : mlp_(mlp), kind_(kind) {}

  DenoiserEval eval(double y, const SeInputs& se) const override;
  void eval_batch(std::span<const double> y, const SeInputs& se,
                  std::span<double> value, std::span<double> deriv) const override;

  /// Builds the (2 or 3) x n input matrix for the given observations.
  Matrix pack_inputs(std::span<const double> y, const SeInputs& se) const;

 private:
  const Mlp* mlp_;
  InputKind kind_;
};

/// Vector denoiser backed by an Mlp with input [v_1..v_d, mu, tau] and
/// d outputs; divergence via jacobian_trace.
class MlpVectorDenoiser final : public VectorDenoiser {
 public:
  explicit MlpVectorDenoiser(const Mlp* mlp) : mlp_(mlp) {}
  VectorDenoiserEval eval(const Vector& y, const SeInputs& se) const override;

 private:
  const Mlp* mlp_;
};

}  // namespace uamp
