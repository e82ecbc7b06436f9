#include "uamp/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace uamp {
namespace {

// GELU via the tanh approximation; cheaper than erfc and its derivatives
// stay consistent with the implemented value, which is what the
// finite-difference checks and the Onsager term care about.
constexpr double kC0 = 0.79788456080286535588;  // sqrt(2/pi)
constexpr double kC1 = 0.044715;

// tanh(g(s)) written with exp so Eigen vectorizes it for doubles.
inline Matrix gelu_tanh(const Matrix& s) {
  auto g = kC0 * (s.array() + kC1 * s.array().cube());
  return (1.0 - 2.0 / ((2.0 * g).exp() + 1.0)).matrix();
}

inline Matrix gelu_value(const Matrix& s, const Matrix& T) {
  return (0.5 * s.array() * (1.0 + T.array())).matrix();
}

inline Matrix gelu_deriv(const Matrix& s, const Matrix& T) {
  auto gp = kC0 * (1.0 + 3.0 * kC1 * s.array().square());
  return (0.5 * (1.0 + T.array()) +
          0.5 * s.array() * (1.0 - T.array().square()) * gp)
      .matrix();
}

inline Matrix gelu_second(const Matrix& s, const Matrix& T) {
  auto gp = kC0 * (1.0 + 3.0 * kC1 * s.array().square());
  auto gpp = 6.0 * kC0 * kC1 * s.array();
  return ((1.0 - T.array().square()) *
          (gp + 0.5 * s.array() * (gpp - 2.0 * T.array() * gp.square())))
      .matrix();
}

inline Matrix relu_deriv(const Matrix& s) {
  return (s.array() > 0.0).cast<double>().matrix();
}

}  // namespace

double activation_value(Activation a, double x) {
  if (a == Activation::Relu) return x > 0.0 ? x : 0.0;
  const double t = std::tanh(kC0 * (x + kC1 * x * x * x));
  return 0.5 * x * (1.0 + t);
}

double activation_deriv(Activation a, double x) {
  if (a == Activation::Relu) return x > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(kC0 * (x + kC1 * x * x * x));
  const double gp = kC0 * (1.0 + 3.0 * kC1 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * gp;
}

double activation_second(Activation a, double x) {
  if (a == Activation::Relu) return 0.0;
  const double t = std::tanh(kC0 * (x + kC1 * x * x * x));
  const double gp = kC0 * (1.0 + 3.0 * kC1 * x * x);
  const double gpp = 6.0 * kC0 * kC1 * x;
  return (1.0 - t * t) * (gp + 0.5 * x * (gpp - 2.0 * t * gp * gp));
}

void MlpGrad::setZero() {
  for (auto& m : W) m.setZero();
  for (auto& v : b) v.setZero();
}

Mlp::Mlp(std::vector<int> widths, Activation act)
    : widths_(std::move(widths)), act_(act) {
  if (widths_.size() < 2) throw std::invalid_argument("mlp needs >= 2 widths");
  const int L = static_cast<int>(widths_.size()) - 1;
  W.resize(L);
  b.resize(L);
  for (int l = 0; l < L; ++l) {
    W[l] = Matrix::Zero(widths_[l + 1], widths_[l]);
    b[l] = Vector::Zero(widths_[l + 1]);
  }
}

void Mlp::init(Rng& rng) {
  for (std::size_t l = 0; l < W.size(); ++l) {
    const double fan_in = static_cast<double>(W[l].cols());
    // He scaling on hidden layers, 1/fan_in on the linear readout.
    const double sd = std::sqrt((l + 1 < W.size() ? 2.0 : 1.0) / fan_in);
    for (Eigen::Index j = 0; j < W[l].cols(); ++j)
      for (Eigen::Index i = 0; i < W[l].rows(); ++i) W[l](i, j) = sd * rng.normal();
    b[l].setZero();
  }
}

void Mlp::forward(const Matrix& X, int tangent_index, Cache& c) const {
  if (X.rows() != input_dim()) throw std::invalid_argument("mlp input dim mismatch");
  const int L = layer_count();
  c.x = X;
  c.s.assign(L, Matrix());
  c.z.assign(L, Matrix());
  c.a.assign(L, Matrix());
  c.has_tangent = tangent_index >= 0;
  c.tangent_index = tangent_index;
  if (c.has_tangent) {
    c.u.assign(L, Matrix());
    c.t.assign(L, Matrix());
  } else {
    c.u.clear();
    c.t.clear();
  }

  const Matrix* zprev = &c.x;
  Matrix t0;
  const Matrix* tprev = nullptr;
  if (c.has_tangent) {
    t0 = Matrix::Zero(X.rows(), X.cols());
    t0.row(tangent_index).setOnes();
    tprev = &t0;
  }
  for (int l = 0; l < L; ++l) {
    c.s[l].noalias() = W[l] * (*zprev);
    c.s[l].colwise() += b[l];
    if (c.has_tangent) c.u[l].noalias() = W[l] * (*tprev);
    if (l + 1 < L) {
      if (act_ == Activation::Gelu) {
        c.a[l] = gelu_tanh(c.s[l]);
        c.z[l] = gelu_value(c.s[l], c.a[l]);
        if (c.has_tangent)
          c.t[l] = gelu_deriv(c.s[l], c.a[l]).cwiseProduct(c.u[l]);
      } else {
        c.z[l] = c.s[l].cwiseMax(0.0);
        if (c.has_tangent) c.t[l] = relu_deriv(c.s[l]).cwiseProduct(c.u[l]);
      }
    } else {
      c.z[l] = c.s[l];
      if (c.has_tangent) c.t[l] = c.u[l];
    }
    zprev = &c.z[l];
    if (c.has_tangent) tprev = &c.t[l];
  }
}

void Mlp::backward(const Cache& c, const Matrix& dval, const Matrix* dtan,
                   MlpGrad* g, Matrix* dX) const {
  const int L = layer_count();
  const bool tan = dtan != nullptr;
  if (tan && !c.has_tangent)
    throw std::logic_error("tangent adjoint requires a tangent cache");

  Matrix dz = dval;
  Matrix dt;
  if (tan) dt = *dtan;

  for (int l = L - 1; l >= 0; --l) {
    Matrix ds, du;
    if (l == L - 1) {
      ds = dz;
      if (tan) du = dt;
    } else {
      Matrix phi1 = act_ == Activation::Gelu ? gelu_deriv(c.s[l], c.a[l])
                                             : relu_deriv(c.s[l]);
      ds = phi1.cwiseProduct(dz);
      if (tan) {
        if (act_ == Activation::Gelu) {
          Matrix phi2 = gelu_second(c.s[l], c.a[l]);
          ds += phi2.cwiseProduct(c.u[l]).cwiseProduct(dt);
        }
        du = phi1.cwiseProduct(dt);
      }
    }
    const Matrix& zprev = l == 0 ? c.x : c.z[l - 1];
    if (g) {
      g->W[l].noalias() += ds * zprev.transpose();
      g->b[l] += ds.rowwise().sum();
      if (tan) {
        if (l == 0) {
          // the tangent seed has a single all-ones row, so du * seed^T
          // collapses onto one column of the weight gradient
          g->W[l].col(c.tangent_index) += du.rowwise().sum();
        } else {
          g->W[l].noalias() += du * c.t[l - 1].transpose();
        }
      }
    }
    if (l > 0) {
      dz = W[l].transpose() * ds;
      if (tan) dt = W[l].transpose() * du;
    } else if (dX) {
      dX->noalias() += W[l].transpose() * ds;
      // adjoint through the tangent seed is dropped: the seed is constant
    }
  }
}

Vector Mlp::jacobian_trace(const Cache& c, int n) const {
  const int L = layer_count();
  std::vector<Matrix> phi1(L > 0 ? L - 1 : 0);
  for (int l = 0; l + 1 < L; ++l)
    phi1[l] = act_ == Activation::Gelu ? gelu_deriv(c.s[l], c.a[l])
                                       : relu_deriv(c.s[l]);
  Vector out = Vector::Zero(c.x.cols());
  for (int k = 0; k < n; ++k) {
    Matrix t = Matrix::Zero(c.x.rows(), c.x.cols());
    t.row(k).setOnes();
    for (int l = 0; l < L; ++l) {
      Matrix u = W[l] * t;
      if (l + 1 < L)
        t = phi1[l].cwiseProduct(u);
      else
        t = std::move(u);
    }
    out += t.row(k).transpose();
  }
  return out;
}

MlpGrad Mlp::zero_grad() const {
  MlpGrad g;
  g.W.reserve(W.size());
  g.b.reserve(b.size());
  for (std::size_t l = 0; l < W.size(); ++l) {
    g.W.push_back(Matrix::Zero(W[l].rows(), W[l].cols()));
    g.b.push_back(Vector::Zero(b[l].size()));
  }
  return g;
}

AdamMlp::AdamMlp(const Mlp& mlp, double lr, double beta1, double beta2, double eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (std::size_t l = 0; l < mlp.W.size(); ++l) {
    mW_.push_back(Matrix::Zero(mlp.W[l].rows(), mlp.W[l].cols()));
    vW_.push_back(Matrix::Zero(mlp.W[l].rows(), mlp.W[l].cols()));
    mb_.push_back(Vector::Zero(mlp.b[l].size()));
    vb_.push_back(Vector::Zero(mlp.b[l].size()));
  }
}

void AdamMlp::step(Mlp& mlp, const MlpGrad& g) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t l = 0; l < mlp.W.size(); ++l) {
    mW_[l] = b1_ * mW_[l] + (1.0 - b1_) * g.W[l];
    vW_[l] = b2_ * vW_[l] + (1.0 - b2_) * g.W[l].cwiseProduct(g.W[l]);
    mlp.W[l].array() -=
        lr_ * (mW_[l].array() / c1) / ((vW_[l].array() / c2).sqrt() + eps_);
    mb_[l] = b1_ * mb_[l] + (1.0 - b1_) * g.b[l];
    vb_[l] = b2_ * vb_[l] + (1.0 - b2_) * g.b[l].cwiseProduct(g.b[l]);
    mlp.b[l].array() -=
        lr_ * (mb_[l].array() / c1) / ((vb_[l].array() / c2).sqrt() + eps_);
  }
}

AdamMatrix::AdamMatrix(int rows, int cols, double lr)
    : lr_(lr), m_(Matrix::Zero(rows, cols)), v_(Matrix::Zero(rows, cols)) {}

void AdamMatrix::step(Matrix& p, const Matrix& g) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  m_ = b1_ * m_ + (1.0 - b1_) * g;
  v_ = b2_ * v_ + (1.0 - b2_) * g.cwiseProduct(g);
  p.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

DenoiserEval MlpDenoiser::eval(double y, const SeInputs& se) const {
  double val, der;
  eval_batch(std::span<const double>(&y, 1), se, std::span<double>(&val, 1),
             std::span<double>(&der, 1));
  return {val, der};
}

Matrix MlpDenoiser::pack_inputs(std::span<const double> y, const SeInputs& se) const {
  const Eigen::Index n = static_cast<Eigen::Index>(y.size());
  Matrix in(kind_ == InputKind::Cs ? 2 : 3, n);
  for (Eigen::Index i = 0; i < n; ++i) in(0, i) = y[static_cast<std::size_t>(i)];
  if (kind_ == InputKind::Cs) {
    in.row(1).setConstant(se.tau);
  } else {
    in.row(1).setConstant(se.mu);
    in.row(2).setConstant(se.tau);
  }
  return in;
}

void MlpDenoiser::eval_batch(std::span<const double> y, const SeInputs& se,
                             std::span<double> value, std::span<double> deriv) const {
  Mlp::Cache c;
  mlp_->forward(pack_inputs(y, se), /*tangent_index=*/0, c);
  const Matrix& v = c.value();
  const Matrix& t = c.tangent();
  for (std::size_t i = 0; i < y.size(); ++i) {
    value[i] = v(0, static_cast<Eigen::Index>(i));
    deriv[i] = t(0, static_cast<Eigen::Index>(i));
  }
}

VectorDenoiserEval MlpVectorDenoiser::eval(const Vector& y, const SeInputs& se) const {
  const Eigen::Index d = y.size();
  Matrix in(d + 2, 1);
  in.topRows(d) = y;
  in(d, 0) = se.mu;
  in(d + 1, 0) = se.tau;
  Mlp::Cache c;
  mlp_->forward(in, -1, c);
  VectorDenoiserEval out;
  out.value = c.value().col(0);
  out.divergence = mlp_->jacobian_trace(c, static_cast<int>(d))(0);
  return out;
}

}  // namespace uamp
