#include "uamp/ldnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <stdexcept>

#include "uamp/denoisers.hpp"

namespace uamp {

namespace {

void shuffle_indices(std::vector<int>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(v[i - 1], v[j]);
  }
}

// How many samples a column budget affords for signal dimension d.
int cap_count(long cols, int d, int avail) {
  if (cols <= 0 || avail <= 0) return avail;
  const long want = std::max<long>(1, cols / std::max(1, d));
  return static_cast<int>(std::min<long>(want, avail));
}

std::vector<int> sample_subset(std::vector<int> v, int count, Rng& rng) {
  shuffle_indices(v, rng);
  v.resize(static_cast<std::size_t>(count));
  return v;
}

void split_indices(int n, double val_fraction, std::vector<int>& train,
                   std::vector<int>& val) {
  const int n_val = std::max(1, static_cast<int>(std::lround(n * val_fraction)));
  const int n_train = n - n_val;
  if (n_train < 1) throw std::invalid_argument("dataset too small to split");
  train.resize(n_train);
  val.resize(n_val);
  std::iota(train.begin(), train.end(), 0);
  std::iota(val.begin(), val.end(), n_train);
}

CsDataset cs_subset(const CsDataset& ds, const std::vector<int>& sel) {
  CsDataset out;
  out.A = ds.A;
  out.sigma2 = ds.sigma2;
  out.X.resize(ds.X.rows(), static_cast<Eigen::Index>(sel.size()));
  out.Y.resize(ds.Y.rows(), static_cast<Eigen::Index>(sel.size()));
  for (std::size_t k = 0; k < sel.size(); ++k) {
    out.X.col(static_cast<Eigen::Index>(k)) = ds.X.col(sel[k]);
    out.Y.col(static_cast<Eigen::Index>(k)) = ds.Y.col(sel[k]);
  }
  return out;
}

// Noise instances are indexed by position, so the subset re-pairs signals
// with fresh-but-deterministic noise draws; the joint law is unchanged.
R1Dataset r1_subset(const R1Dataset& ds, const std::vector<int>& sel) {
  R1Dataset out;
  out.lambda = ds.lambda;
  out.noise_seed = ds.noise_seed;
  out.X.resize(ds.X.rows(), static_cast<Eigen::Index>(sel.size()));
  for (std::size_t k = 0; k < sel.size(); ++k)
    out.X.col(static_cast<Eigen::Index>(k)) = ds.X.col(sel[k]);
  return out;
}

// Builds the active pool + validation subset for one training run: both the
// cached states and every epoch's work cover only these columns.
template <typename Dataset, typename SubsetFn>
Dataset build_pool(const Dataset& data, int n, int d, const TrainConfig& cfg,
                   Rng& rng, SubsetFn&& subset, std::vector<int>& train,
                   std::vector<int>& val) {
  std::vector<int> tr, va;
  split_indices(n, cfg.val_fraction, tr, va);
  tr = sample_subset(std::move(tr), cap_count(cfg.pool_cols, d, static_cast<int>(tr.size())), rng);
  va = sample_subset(std::move(va), cap_count(cfg.val_cols, d, static_cast<int>(va.size())), rng);
  std::vector<int> sel = tr;
  sel.insert(sel.end(), va.begin(), va.end());
  train.resize(tr.size());
  val.resize(va.size());
  std::iota(train.begin(), train.end(), 0);
  std::iota(val.begin(), val.end(), static_cast<int>(tr.size()));
  return subset(data, sel);
}

// ---- compressed sensing ----------------------------------------------------

// Cached per-sample iterates at the current depth of layerwise training.
// Wall-clock phase reporting on stderr, enabled by setting UAMP_TIMING.
struct PhaseTimer {
  const char* label;
  int layer;
  std::chrono::steady_clock::time_point start;
  PhaseTimer(const char* label, int layer)
      : label(label), layer(layer), start(std::chrono::steady_clock::now()) {}
  ~PhaseTimer() {
    if (!std::getenv("UAMP_TIMING")) return;
    const double s = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    std::fprintf(stderr, "[timing] layer %d %s: %.2fs\n", layer, label, s);
  }
};

struct CsStates {
  Matrix Xhat;  // d x N
  Matrix V;     // m x N
  Vector tau;   // N
};

CsStates cs_states_init(const CsDataset& ds) {
  CsStates st;
  st.Xhat = Matrix::Zero(ds.A.cols(), ds.X.cols());
  st.V = ds.Y;
  st.tau = ds.Y.colwise().norm().transpose() / std::sqrt(static_cast<double>(ds.A.rows()));
  return st;
}

const Matrix& matched_filter(const LdNet& net, const Matrix& A, Matrix& scratch) {
  if (net.has_b) return net.B;
  scratch = A.transpose();
  return scratch;
}

// Input block for samples `idx`: row 0 carries the d effective observations
// of each sample, row 1 its (gradient-stopped) tau.
Matrix pack_cs_block(const Matrix& R, const Vector& tau, const std::vector<int>& idx,
                     std::size_t lo, std::size_t hi) {
  const int d = static_cast<int>(R.rows());
  Matrix in(2, static_cast<Eigen::Index>(hi - lo) * d);
  for (std::size_t k = lo; k < hi; ++k) {
    const int b = idx[k];
    in.block(0, static_cast<Eigen::Index>(k - lo) * d, 1, d) = R.col(b).transpose();
    in.block(1, static_cast<Eigen::Index>(k - lo) * d, 1, d).setConstant(tau[b]);
  }
  return in;
}

// Advances all cached states through one layer (the step of cs_amp_step,
// batched across the dataset).
void cs_states_advance(const Mlp& mlp, const CsDataset& ds, const Matrix& Bm,
                       CsStates& st) {
  const int d = static_cast<int>(ds.A.cols());
  const int m = static_cast<int>(ds.A.rows());
  const int n = static_cast<int>(ds.X.cols());
  const double delta = ds.delta();
  Matrix R = Bm * st.V + st.Xhat;
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  const int chunk = 256;
  Matrix xh_new(d, n);
  Vector ons(n);
  Mlp::Cache c;
  for (int lo = 0; lo < n; lo += chunk) {
    const int hi = std::min(n, lo + chunk);
    Matrix in = pack_cs_block(R, st.tau, all, static_cast<std::size_t>(lo),
                              static_cast<std::size_t>(hi));
    mlp.forward(in, /*tangent_index=*/0, c);
    for (int b = lo; b < hi; ++b) {
      const Eigen::Index off = static_cast<Eigen::Index>(b - lo) * d;
      xh_new.col(b) = c.value().block(0, off, 1, d).transpose();
      ons[b] = c.tangent().block(0, off, 1, d).mean() / delta;
    }
  }
  Matrix v_new = ds.Y - ds.A * xh_new;
  for (int b = 0; b < n; ++b) v_new.col(b) += ons[b] * st.V.col(b);
  st.Xhat = std::move(xh_new);
  st.V = std::move(v_new);
  st.tau = st.V.colwise().norm().transpose() / std::sqrt(static_cast<double>(m));
}

double cs_regression_val_mse(const Mlp& mlp, const Matrix& R, const Vector& tau,
                             const Matrix& X, const std::vector<int>& idx) {
  const int d = static_cast<int>(R.rows());
  double acc = 0.0;
  Mlp::Cache c;
  const std::size_t chunk = 256;
  for (std::size_t lo = 0; lo < idx.size(); lo += chunk) {
    const std::size_t hi = std::min(idx.size(), lo + chunk);
    Matrix in = pack_cs_block(R, tau, idx, lo, hi);
    mlp.forward(in, -1, c);
    for (std::size_t k = lo; k < hi; ++k) {
      const Eigen::Index off = static_cast<Eigen::Index>(k - lo) * d;
      Vector f = c.value().block(0, off, 1, d).transpose();
      acc += (f - X.col(idx[k])).squaredNorm() / d;
    }
  }
  return acc / static_cast<double>(idx.size());
}

// One layer's regression phase: fit f(r; tau) to x with everything upstream
// frozen (upstream states are already baked into R).
LayerStats cs_layer_regression(Mlp& mlp, const Matrix& R, const Vector& tau,
                               const Matrix& X, const std::vector<int>& train,
                               const std::vector<int>& val, const TrainConfig& cfg,
                               Rng& rng, int layer) {
  const int d = static_cast<int>(R.rows());
  AdamMlp opt(mlp, cfg.lr);
  std::vector<int> order = train;
  Mlp bestW = mlp;
  double best = cs_regression_val_mse(mlp, R, tau, X, val);
  int since_improve = 0;
  bool decayed = false;
  int epochs_run = 0;
  Mlp::Cache c;
  const std::size_t es =
      static_cast<std::size_t>(cap_count(cfg.epoch_cols, d, static_cast<int>(order.size())));
  const std::size_t bs =
      static_cast<std::size_t>(cap_count(cfg.step_cols, d, static_cast<int>(es)));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (std::size_t lo = 0; lo < es; lo += bs) {
      const std::size_t hi = std::min(es, lo + bs);
      Matrix in = pack_cs_block(R, tau, order, lo, hi);
      mlp.forward(in, -1, c);
      Matrix dval(1, in.cols());
      const double scale = 2.0 / static_cast<double>(in.cols());
      for (std::size_t k = lo; k < hi; ++k) {
        const Eigen::Index off = static_cast<Eigen::Index>(k - lo) * d;
        dval.block(0, off, 1, d) =
            scale * (c.value().block(0, off, 1, d) -
                     X.col(order[k]).transpose());
      }
      MlpGrad g = mlp.zero_grad();
      mlp.backward(c, dval, nullptr, &g, nullptr);
      opt.step(mlp, g);
    }
    ++epochs_run;
    const double vm = cs_regression_val_mse(mlp, R, tau, X, val);
    if (vm < best - 1e-12) {
      best = vm;
      bestW = mlp;
      since_improve = 0;
    } else if (++since_improve > cfg.patience) {
      if (decayed) break;
      decayed = true;
      opt.set_lr(opt.lr() * 0.5);
      since_improve = 0;
    }
  }
  mlp = bestW;
  return {layer, best, epochs_run};
}

// Stored forward pass of the unrolled network on a minibatch, for the
// end-to-end phases. MLP caches are recomputed layer by layer in backward.
struct CsUnroll {
  std::vector<Matrix> Xhat;  // upto+2 entries, d x B
  std::vector<Matrix> V;     // upto+1 entries, m x B
  std::vector<Vector> tau;   // upto+1 entries
  std::vector<Vector> ons;   // Onsager coefficient per sample, upto entries
};

Matrix pack_cs_unroll_input(const Matrix& R, const Vector& tau) {
  const int d = static_cast<int>(R.rows());
  const int nb = static_cast<int>(R.cols());
  Matrix in(2, static_cast<Eigen::Index>(nb) * d);
  for (int b = 0; b < nb; ++b) {
    in.block(0, static_cast<Eigen::Index>(b) * d, 1, d) = R.col(b).transpose();
    in.block(1, static_cast<Eigen::Index>(b) * d, 1, d).setConstant(tau[b]);
  }
  return in;
}

void cs_unroll_forward(const LdNet& net, const CsDataset& ds, const Matrix& Bm,
                       const Matrix& Yb, int upto, CsUnroll& u,
                       const LdPath* pin = nullptr) {
  const int d = static_cast<int>(ds.A.cols());
  const int m = static_cast<int>(ds.A.rows());
  const int nb = static_cast<int>(Yb.cols());
  const double delta = ds.delta();
  u.Xhat.assign(static_cast<std::size_t>(upto) + 2, Matrix());
  u.V.assign(static_cast<std::size_t>(upto) + 1, Matrix());
  u.tau.assign(static_cast<std::size_t>(upto) + 1, Vector());
  u.ons.assign(static_cast<std::size_t>(upto) + 1, Vector());
  u.Xhat[0] = Matrix::Zero(d, nb);
  u.V[0] = Yb;
  u.tau[0] = Yb.colwise().norm().transpose() / std::sqrt(static_cast<double>(m));
  if (pin) u.tau[0] = pin->tau[0];
  Mlp::Cache c;
  for (int k = 0; k <= upto; ++k) {
    Matrix R = Bm * u.V[k] + u.Xhat[k];
    Matrix in = pack_cs_unroll_input(R, u.tau[k]);
    net.denoisers[static_cast<std::size_t>(k)].forward(in, 0, c);
    u.Xhat[k + 1].resize(d, nb);
    u.ons[k].resize(nb);
    for (int b = 0; b < nb; ++b) {
      const Eigen::Index off = static_cast<Eigen::Index>(b) * d;
      u.Xhat[k + 1].col(b) = c.value().block(0, off, 1, d).transpose();
      u.ons[k][b] = c.tangent().block(0, off, 1, d).mean() / delta;
    }
    if (k < upto) {
      u.V[k + 1] = Yb - ds.A * u.Xhat[k + 1];
      for (int b = 0; b < nb; ++b) u.V[k + 1].col(b) += u.ons[k][b] * u.V[k].col(b);
      u.tau[k + 1] =
          u.V[k + 1].colwise().norm().transpose() / std::sqrt(static_cast<double>(m));
      if (pin) u.tau[k + 1] = pin->tau[static_cast<std::size_t>(k) + 1];
    }
  }
}

// Reverse pass of the unroll. Accumulates per-layer parameter gradients
// into `g` and, when gB != nullptr, the matched-filter gradient. Loss is
// the per-sample average of (1/d)|x_hat - x|^2. tau is gradient-stopped.
void cs_unroll_backward(const LdNet& net, const CsDataset& ds, const Matrix& Bm,
                        const Matrix& Xb, int upto, const CsUnroll& u,
                        std::vector<MlpGrad>* g, Matrix* gB) {
  const int d = static_cast<int>(ds.A.cols());
  const int nb = static_cast<int>(Xb.cols());
  const double delta = ds.delta();
  Matrix dX = (2.0 / (static_cast<double>(nb) * d)) * (u.Xhat[upto + 1] - Xb);
  Matrix dV;  // adjoint on V[k+1], empty at the top layer
  Mlp::Cache c;
  for (int k = upto; k >= 0; --k) {
    Vector dons = Vector::Zero(nb);
    Matrix dVk = Matrix::Zero(Bm.cols(), nb);
    if (dV.size() != 0) {
      // v_{k+1} = y - A x_{k+1} + ons_k v_k
      dX.noalias() -= ds.A.transpose() * dV;
      for (int b = 0; b < nb; ++b) {
        dons[b] = u.V[k].col(b).dot(dV.col(b));
        dVk.col(b) = u.ons[k][b] * dV.col(b);
      }
    }
    Matrix R = Bm * u.V[k] + u.Xhat[k];
    Matrix in = pack_cs_unroll_input(R, u.tau[k]);
    net.denoisers[static_cast<std::size_t>(k)].forward(in, 0, c);
    Matrix dval(1, in.cols()), dtan(1, in.cols());
    for (int b = 0; b < nb; ++b) {
      const Eigen::Index off = static_cast<Eigen::Index>(b) * d;
      dval.block(0, off, 1, d) = dX.col(b).transpose();
      dtan.block(0, off, 1, d).setConstant(dons[b] / (delta * d));
    }
    Matrix dIn = Matrix::Zero(2, in.cols());
    const bool want_tan = dV.size() != 0;
    net.denoisers[static_cast<std::size_t>(k)].backward(
        c, dval, want_tan ? &dtan : nullptr,
        g ? &(*g)[static_cast<std::size_t>(k)] : nullptr, &dIn);
    Matrix dR(d, nb);
    for (int b = 0; b < nb; ++b)
      dR.col(b) = dIn.block(0, static_cast<Eigen::Index>(b) * d, 1, d).transpose();
    if (gB) gB->noalias() += dR * u.V[k].transpose();
    dVk.noalias() += Bm.transpose() * dR;
    dX = dR;  // adjoint on Xhat[k] (r = Bm v + x_hat)
    dV = std::move(dVk);
  }
}

double cs_unroll_eval_mse(const LdNet& net, const CsDataset& ds, const Matrix& Bm,
                          const std::vector<int>& idx, int upto) {
  const int d = static_cast<int>(ds.A.cols());
  double acc = 0.0;
  const std::size_t chunk = 128;
  CsUnroll u;
  for (std::size_t lo = 0; lo < idx.size(); lo += chunk) {
    const std::size_t hi = std::min(idx.size(), lo + chunk);
    Matrix Yb(ds.Y.rows(), static_cast<Eigen::Index>(hi - lo));
    Matrix Xb(d, static_cast<Eigen::Index>(hi - lo));
    for (std::size_t k = lo; k < hi; ++k) {
      Yb.col(static_cast<Eigen::Index>(k - lo)) = ds.Y.col(idx[k]);
      Xb.col(static_cast<Eigen::Index>(k - lo)) = ds.X.col(idx[k]);
    }
    cs_unroll_forward(net, ds, Bm, Yb, upto, u);
    acc += (u.Xhat[static_cast<std::size_t>(upto) + 1] - Xb).squaredNorm() / d;
  }
  return acc / static_cast<double>(idx.size());
}

// Joint phase: trains denoisers 0..upto (and B when train_b) end to end.
double cs_end_to_end(LdNet& net, const CsDataset& ds, const std::vector<int>& train,
                     const std::vector<int>& val, int upto, bool train_b,
                     int epochs, double lr, int batch, int epoch_samples,
                     Rng& rng) {
  Matrix bt_scratch;
  std::vector<AdamMlp> opts;
  opts.reserve(static_cast<std::size_t>(upto) + 1);
  for (int k = 0; k <= upto; ++k)
    opts.emplace_back(net.denoisers[static_cast<std::size_t>(k)], lr);
  AdamMatrix optB;
  if (train_b) {
    if (!net.has_b) throw std::logic_error("cs_end_to_end: no learnable B");
    optB = AdamMatrix(static_cast<int>(net.B.rows()),
                      static_cast<int>(net.B.cols()), lr);
  }
  std::vector<int> order = train;
  const int d = static_cast<int>(ds.A.cols());
  const std::size_t use =
      epoch_samples > 0
          ? std::min(order.size(), static_cast<std::size_t>(epoch_samples))
          : order.size();
  CsUnroll u;
  // Snapshot the best-validation parameters so an epoch that destabilizes
  // the unroll cannot make the phase a net loss.
  std::vector<Mlp> best_denoisers(net.denoisers.begin(),
                                  net.denoisers.begin() + upto + 1);
  Matrix best_b = net.B;
  double best_val;
  {
    const Matrix& Bm = matched_filter(net, ds.A, bt_scratch);
    best_val = cs_unroll_eval_mse(net, ds, Bm, val, upto);
  }
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (std::size_t lo = 0; lo < use; lo += batch) {
      const std::size_t hi = std::min(use, lo + batch);
      Matrix Yb(ds.Y.rows(), static_cast<Eigen::Index>(hi - lo));
      Matrix Xb(d, static_cast<Eigen::Index>(hi - lo));
      for (std::size_t k = lo; k < hi; ++k) {
        Yb.col(static_cast<Eigen::Index>(k - lo)) = ds.Y.col(order[k]);
        Xb.col(static_cast<Eigen::Index>(k - lo)) = ds.X.col(order[k]);
      }
      const Matrix& Bm = matched_filter(net, ds.A, bt_scratch);
      cs_unroll_forward(net, ds, Bm, Yb, upto, u);
      std::vector<MlpGrad> g;
      g.reserve(static_cast<std::size_t>(upto) + 1);
      for (int k = 0; k <= upto; ++k)
        g.push_back(net.denoisers[static_cast<std::size_t>(k)].zero_grad());
      Matrix gB;
      if (train_b) gB = Matrix::Zero(net.B.rows(), net.B.cols());
      cs_unroll_backward(net, ds, Bm, Xb, upto, u, &g, train_b ? &gB : nullptr);
      for (int k = 0; k <= upto; ++k)
        opts[static_cast<std::size_t>(k)].step(
            net.denoisers[static_cast<std::size_t>(k)], g[static_cast<std::size_t>(k)]);
      if (train_b) optB.step(net.B, gB);
    }
    const Matrix& Bm = matched_filter(net, ds.A, bt_scratch);
    const double v = cs_unroll_eval_mse(net, ds, Bm, val, upto);
    if (v < best_val) {
      best_val = v;
      best_denoisers.assign(net.denoisers.begin(),
                            net.denoisers.begin() + upto + 1);
      best_b = net.B;
    }
  }
  std::copy(best_denoisers.begin(), best_denoisers.end(), net.denoisers.begin());
  net.B = best_b;
  return best_val;
}

// ---- rank-one ---------------------------------------------------------------

struct R1States {
  Matrix Xhat;  // d x N
  Matrix V;     // d x N
  Vector tau;   // N
  Vector mu;    // N
};

R1States r1_states_init(const R1Dataset& ds, double m2) {
  const int d = ds.d();
  const int n = ds.n();
  R1States st;
  st.Xhat = Matrix::Ones(d, n);
  st.V.resize(d, n);
  st.tau = Vector::Ones(n);
  st.mu.resize(n);
  for (int i = 0; i < n; ++i) {
    Matrix Y = r1_observation(ds, i);
    st.V.col(i) = Y * st.Xhat.col(i);
    st.mu[i] = std::sqrt(std::abs(st.V.col(i).squaredNorm() / d - st.tau[i])) /
               std::sqrt(m2);
  }
  return st;
}

Matrix pack_r1_block(const Matrix& V, const Vector& mu, const Vector& tau,
                     const std::vector<int>& idx, std::size_t lo, std::size_t hi) {
  const int d = static_cast<int>(V.rows());
  Matrix in(3, static_cast<Eigen::Index>(hi - lo) * d);
  for (std::size_t k = lo; k < hi; ++k) {
    const int b = idx[k];
    const Eigen::Index off = static_cast<Eigen::Index>(k - lo) * d;
    in.block(0, off, 1, d) = V.col(b).transpose();
    in.block(1, off, 1, d).setConstant(mu[b]);
    in.block(2, off, 1, d).setConstant(tau[b]);
  }
  return in;
}

void r1_states_advance(const Mlp& mlp, const R1Dataset& ds, double m2,
                       R1States& st) {
  const int d = ds.d();
  const int n = ds.n();
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  const int chunk = 64;
  Mlp::Cache c;
  Matrix xh_new(d, n);
  Vector ons(n);
  for (int lo = 0; lo < n; lo += chunk) {
    const int hi = std::min(n, lo + chunk);
    Matrix in = pack_r1_block(st.V, st.mu, st.tau, all, static_cast<std::size_t>(lo),
                              static_cast<std::size_t>(hi));
    mlp.forward(in, 0, c);
    for (int b = lo; b < hi; ++b) {
      const Eigen::Index off = static_cast<Eigen::Index>(b - lo) * d;
      xh_new.col(b) = c.value().block(0, off, 1, d).transpose();
      ons[b] = c.tangent().block(0, off, 1, d).mean();
    }
  }
  for (int i = 0; i < n; ++i) {
    Matrix Y = r1_observation(ds, i);
    Vector v_new = Y * xh_new.col(i) - ons[i] * st.Xhat.col(i);
    st.tau[i] = xh_new.col(i).squaredNorm() / d;
    st.mu[i] = std::sqrt(std::abs(v_new.squaredNorm() / d - st.tau[i])) /
               std::sqrt(m2);
    st.V.col(i) = v_new;
    st.Xhat.col(i) = xh_new.col(i);
  }
}

// Sign-invariant matrix loss on a per-sample estimate: with a = |xh|^2 and
// c = x.xh, |xh xh' - x x'|_F^2 = a^2 - 2 c^2 + |x|^4. Training normalizes
// by d^2 to keep gradient scale dimension-free; reporting normalizes by
// |x|^4 (the NMSE convention).
double frob_loss_and_grad(const Vector& xh, const Vector& x, double norm,
                          Vector* grad) {
  const double a = xh.squaredNorm();
  const double cc = x.dot(xh);
  const double x4 = x.squaredNorm() * x.squaredNorm();
  if (grad) *grad = (4.0 * a) / norm * xh - (4.0 * cc) / norm * x;
  return (a * a - 2.0 * cc * cc + x4) / norm;
}

double r1_regression_val_nmse(const Mlp& mlp, const R1States& st, const Matrix& X,
                              const std::vector<int>& idx) {
  const int d = static_cast<int>(X.rows());
  Mlp::Cache c;
  double acc = 0.0;
  const std::size_t chunk = 64;
  for (std::size_t lo = 0; lo < idx.size(); lo += chunk) {
    const std::size_t hi = std::min(idx.size(), lo + chunk);
    Matrix in = pack_r1_block(st.V, st.mu, st.tau, idx, lo, hi);
    mlp.forward(in, -1, c);
    for (std::size_t k = lo; k < hi; ++k) {
      const Eigen::Index off = static_cast<Eigen::Index>(k - lo) * d;
      Vector f = c.value().block(0, off, 1, d).transpose();
      const Vector& x = X.col(idx[k]);
      const double x4 = x.squaredNorm() * x.squaredNorm();
      acc += frob_loss_and_grad(f, x, x4 > 0 ? x4 : 1.0, nullptr);
    }
  }
  return acc / static_cast<double>(idx.size());
}

LayerStats r1_layer_regression(Mlp& mlp, const R1States& st, const Matrix& X,
                               const std::vector<int>& train,
                               const std::vector<int>& val, const TrainConfig& cfg,
                               Rng& rng, int layer) {
  const int d = static_cast<int>(X.rows());
  AdamMlp opt(mlp, cfg.lr);
  std::vector<int> order = train;
  Mlp bestW = mlp;
  double best = r1_regression_val_nmse(mlp, st, X, val);
  int since_improve = 0;
  bool decayed = false;
  int epochs_run = 0;
  Mlp::Cache c;
  const double norm = static_cast<double>(d) * d;
  const std::size_t es =
      static_cast<std::size_t>(cap_count(cfg.epoch_cols, d, static_cast<int>(order.size())));
  const std::size_t bs =
      static_cast<std::size_t>(cap_count(cfg.step_cols, d, static_cast<int>(es)));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (std::size_t lo = 0; lo < es; lo += bs) {
      const std::size_t hi = std::min(es, lo + bs);
      Matrix in = pack_r1_block(st.V, st.mu, st.tau, order, lo, hi);
      mlp.forward(in, -1, c);
      Matrix dval(1, in.cols());
      const double scale = 1.0 / static_cast<double>(hi - lo);
      for (std::size_t k = lo; k < hi; ++k) {
        const Eigen::Index off = static_cast<Eigen::Index>(k - lo) * d;
        Vector f = c.value().block(0, off, 1, d).transpose();
        Vector grad;
        frob_loss_and_grad(f, X.col(order[k]), norm, &grad);
        dval.block(0, off, 1, d) = scale * grad.transpose();
      }
      MlpGrad g = mlp.zero_grad();
      mlp.backward(c, dval, nullptr, &g, nullptr);
      opt.step(mlp, g);
    }
    ++epochs_run;
    const double vm = r1_regression_val_nmse(mlp, st, X, val);
    if (vm < best - 1e-12) {
      best = vm;
      bestW = mlp;
      since_improve = 0;
    } else if (++since_improve > cfg.patience) {
      if (decayed) break;
      decayed = true;
      opt.set_lr(opt.lr() * 0.5);
      since_improve = 0;
    }
  }
  mlp = bestW;
  return {layer, best, epochs_run};
}

// End-to-end rank-one finetune on a minibatch; Y matrices are regenerated
// per sample and held for the backward pass.
struct R1Unroll {
  std::vector<Matrix> Xhat;  // upto+2, d x B
  std::vector<Matrix> V;     // upto+1
  std::vector<Vector> tau, mu, ons;
};

void r1_unroll_forward(const LdNet& net, const std::vector<Matrix>& Ys,
                       double m2, int upto, R1Unroll& u,
                       const LdPath* pin = nullptr) {
  const int nb = static_cast<int>(Ys.size());
  const int d = static_cast<int>(Ys.front().rows());
  u.Xhat.assign(static_cast<std::size_t>(upto) + 2, Matrix());
  u.V.assign(static_cast<std::size_t>(upto) + 1, Matrix());
  u.tau.assign(static_cast<std::size_t>(upto) + 1, Vector());
  u.mu.assign(static_cast<std::size_t>(upto) + 1, Vector());
  u.ons.assign(static_cast<std::size_t>(upto) + 1, Vector());
  u.Xhat[0] = Matrix::Ones(d, nb);
  u.V[0].resize(d, nb);
  u.tau[0] = Vector::Ones(nb);
  u.mu[0].resize(nb);
  for (int b = 0; b < nb; ++b) {
    u.V[0].col(b) = Ys[static_cast<std::size_t>(b)] * u.Xhat[0].col(b);
    u.mu[0][b] = std::sqrt(std::abs(u.V[0].col(b).squaredNorm() / d - 1.0)) /
                 std::sqrt(m2);
  }
  if (pin) {
    u.tau[0] = pin->tau[0];
    u.mu[0] = pin->mu[0];
  }
  std::vector<int> all(static_cast<std::size_t>(nb));
  std::iota(all.begin(), all.end(), 0);
  Mlp::Cache c;
  for (int k = 0; k <= upto; ++k) {
    Matrix in = pack_r1_block(u.V[k], u.mu[k], u.tau[k], all, 0, all.size());
    net.denoisers[static_cast<std::size_t>(k)].forward(in, 0, c);
    u.Xhat[k + 1].resize(d, nb);
    u.ons[k].resize(nb);
    for (int b = 0; b < nb; ++b) {
      const Eigen::Index off = static_cast<Eigen::Index>(b) * d;
      u.Xhat[k + 1].col(b) = c.value().block(0, off, 1, d).transpose();
      u.ons[k][b] = c.tangent().block(0, off, 1, d).mean();
    }
    if (k < upto) {
      u.V[k + 1].resize(d, nb);
      u.tau[k + 1].resize(nb);
      u.mu[k + 1].resize(nb);
      for (int b = 0; b < nb; ++b) {
        u.V[k + 1].col(b) = Ys[static_cast<std::size_t>(b)] * u.Xhat[k + 1].col(b) -
                            u.ons[k][b] * u.Xhat[k].col(b);
        u.tau[k + 1][b] = u.Xhat[k + 1].col(b).squaredNorm() / d;
        u.mu[k + 1][b] =
            std::sqrt(std::abs(u.V[k + 1].col(b).squaredNorm() / d -
                               u.tau[k + 1][b])) /
            std::sqrt(m2);
      }
      if (pin) {
        u.tau[k + 1] = pin->tau[static_cast<std::size_t>(k) + 1];
        u.mu[k + 1] = pin->mu[static_cast<std::size_t>(k) + 1];
      }
    }
  }
}

void r1_unroll_backward(const LdNet& net, const std::vector<Matrix>& Ys,
                        const Matrix& Xb, int upto, const R1Unroll& u,
                        std::vector<MlpGrad>* g) {
  const int nb = static_cast<int>(Ys.size());
  const int d = static_cast<int>(Ys.front().rows());
  const double norm = static_cast<double>(d) * d;
  Matrix dX(d, nb);
  for (int b = 0; b < nb; ++b) {
    Vector grad;
    frob_loss_and_grad(u.Xhat[static_cast<std::size_t>(upto) + 1].col(b), Xb.col(b),
                       norm, &grad);
    dX.col(b) = grad / nb;
  }
  Matrix dV;
  std::vector<int> all(static_cast<std::size_t>(nb));
  std::iota(all.begin(), all.end(), 0);
  Mlp::Cache c;
  for (int k = upto; k >= 0; --k) {
    Vector dons = Vector::Zero(nb);
    Matrix dXk = Matrix::Zero(d, nb);
    if (dV.size() != 0) {
      // v_{k+1} = Y x_{k+1} - ons_k x_k  (mu/tau gradient-stopped)
      for (int b = 0; b < nb; ++b) {
        dX.col(b).noalias() += Ys[static_cast<std::size_t>(b)] * dV.col(b);
        dons[b] = -u.Xhat[k].col(b).dot(dV.col(b));
        dXk.col(b) = -u.ons[k][b] * dV.col(b);
      }
    }
    Matrix in = pack_r1_block(u.V[k], u.mu[k], u.tau[k], all, 0, all.size());
    net.denoisers[static_cast<std::size_t>(k)].forward(in, 0, c);
    Matrix dval(1, in.cols()), dtan(1, in.cols());
    for (int b = 0; b < nb; ++b) {
      const Eigen::Index off = static_cast<Eigen::Index>(b) * d;
      dval.block(0, off, 1, d) = dX.col(b).transpose();
      dtan.block(0, off, 1, d).setConstant(dons[b] / d);
    }
    Matrix dIn = Matrix::Zero(3, in.cols());
    const bool want_tan = dV.size() != 0;
    net.denoisers[static_cast<std::size_t>(k)].backward(
        c, dval, want_tan ? &dtan : nullptr,
        g ? &(*g)[static_cast<std::size_t>(k)] : nullptr, &dIn);
    Matrix dVk(d, nb);
    for (int b = 0; b < nb; ++b)
      dVk.col(b) = dIn.block(0, static_cast<Eigen::Index>(b) * d, 1, d).transpose();
    dX = std::move(dXk);
    dV = std::move(dVk);
  }
}

double r1_end_to_end(LdNet& net, const R1Dataset& ds, double m2,
                     const std::vector<int>& train, const std::vector<int>& val,
                     int upto, int epochs, double lr, int batch,
                     int epoch_samples, Rng& rng) {
  std::vector<AdamMlp> opts;
  for (int k = 0; k <= upto; ++k)
    opts.emplace_back(net.denoisers[static_cast<std::size_t>(k)], lr);
  std::vector<int> order = train;
  const int d = ds.d();
  const std::size_t use =
      epoch_samples > 0
          ? std::min(order.size(), static_cast<std::size_t>(epoch_samples))
          : order.size();
  R1Unroll u;
  // validation: full unroll NMSE
  auto val_nmse = [&]() {
    double acc = 0.0;
    R1Unroll uv;
    for (std::size_t lo = 0; lo < val.size(); lo += 32) {
      const std::size_t hi = std::min(val.size(), lo + 32);
      std::vector<Matrix> Ys;
      Matrix Xb(d, static_cast<Eigen::Index>(hi - lo));
      for (std::size_t k = lo; k < hi; ++k) {
        Ys.push_back(r1_observation(ds, val[k]));
        Xb.col(static_cast<Eigen::Index>(k - lo)) = ds.X.col(val[k]);
      }
      r1_unroll_forward(net, Ys, m2, upto, uv);
      for (std::size_t k = lo; k < hi; ++k) {
        const Vector& x = Xb.col(static_cast<Eigen::Index>(k - lo));
        const double x4 = x.squaredNorm() * x.squaredNorm();
        acc += frob_loss_and_grad(
            uv.Xhat[static_cast<std::size_t>(upto) + 1].col(
                static_cast<Eigen::Index>(k - lo)),
            x, x4 > 0 ? x4 : 1.0, nullptr);
      }
    }
    return acc / static_cast<double>(val.size());
  };
  // Snapshot the best-validation parameters so an epoch that destabilizes
  // the unroll cannot make the phase a net loss.
  std::vector<Mlp> best_denoisers(net.denoisers.begin(),
                                  net.denoisers.begin() + upto + 1);
  double best_val = val_nmse();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (std::size_t lo = 0; lo < use; lo += batch) {
      const std::size_t hi = std::min(use, lo + batch);
      std::vector<Matrix> Ys;
      Matrix Xb(d, static_cast<Eigen::Index>(hi - lo));
      for (std::size_t k = lo; k < hi; ++k) {
        Ys.push_back(r1_observation(ds, order[k]));
        Xb.col(static_cast<Eigen::Index>(k - lo)) = ds.X.col(order[k]);
      }
      r1_unroll_forward(net, Ys, m2, upto, u);
      std::vector<MlpGrad> g;
      for (int k = 0; k <= upto; ++k)
        g.push_back(net.denoisers[static_cast<std::size_t>(k)].zero_grad());
      r1_unroll_backward(net, Ys, Xb, upto, u, &g);
      for (int k = 0; k <= upto; ++k)
        opts[static_cast<std::size_t>(k)].step(
            net.denoisers[static_cast<std::size_t>(k)], g[static_cast<std::size_t>(k)]);
    }
    const double v = val_nmse();
    if (v < best_val) {
      best_val = v;
      best_denoisers.assign(net.denoisers.begin(),
                            net.denoisers.begin() + upto + 1);
    }
  }
  std::copy(best_denoisers.begin(), best_denoisers.end(), net.denoisers.begin());
  return best_val;
}

// ---- multi-dimensional rank-one --------------------------------------------

Matrix pack_r1_multi_block(const Matrix& V, const Vector& mu, const Vector& tau,
                           const std::vector<int>& idx, std::size_t lo,
                           std::size_t hi) {
  const int d = static_cast<int>(V.rows());
  Matrix in(d + 2, static_cast<Eigen::Index>(hi - lo));
  for (std::size_t k = lo; k < hi; ++k) {
    const int b = idx[k];
    in.block(0, static_cast<Eigen::Index>(k - lo), d, 1) = V.col(b);
    in(d, static_cast<Eigen::Index>(k - lo)) = mu[b];
    in(d + 1, static_cast<Eigen::Index>(k - lo)) = tau[b];
  }
  return in;
}

void r1_multi_states_advance(const Mlp& mlp, const R1Dataset& ds, double m2,
                             R1States& st) {
  const int d = ds.d();
  const int n = ds.n();
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  Mlp::Cache c;
  Matrix in = pack_r1_multi_block(st.V, st.mu, st.tau, all, 0, all.size());
  mlp.forward(in, -1, c);
  Vector div = mlp.jacobian_trace(c, d);
  for (int i = 0; i < n; ++i) {
    Vector xh = c.value().col(i);
    Matrix Y = r1_observation(ds, i);
    Vector v_new = Y * xh - (div[i] / d) * st.Xhat.col(i);
    st.tau[i] = xh.squaredNorm() / d;
    st.mu[i] = std::sqrt(std::abs(v_new.squaredNorm() / d - st.tau[i])) /
               std::sqrt(m2);
    st.V.col(i) = v_new;
    st.Xhat.col(i) = xh;
  }
}

double r1_multi_val_nmse(const Mlp& mlp, const R1States& st, const Matrix& X,
                         const std::vector<int>& idx) {
  Mlp::Cache c;
  Matrix in = pack_r1_multi_block(st.V, st.mu, st.tau, idx, 0, idx.size());
  mlp.forward(in, -1, c);
  double acc = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Vector& x = X.col(idx[k]);
    const double x4 = x.squaredNorm() * x.squaredNorm();
    acc += frob_loss_and_grad(c.value().col(static_cast<Eigen::Index>(k)), x,
                              x4 > 0 ? x4 : 1.0, nullptr);
  }
  return acc / static_cast<double>(idx.size());
}

LayerStats r1_multi_layer_regression(Mlp& mlp, const R1States& st, const Matrix& X,
                                     const std::vector<int>& train,
                                     const std::vector<int>& val,
                                     const TrainConfig& cfg, Rng& rng, int layer) {
  const int d = static_cast<int>(X.rows());
  AdamMlp opt(mlp, cfg.lr);
  std::vector<int> order = train;
  Mlp bestW = mlp;
  double best = r1_multi_val_nmse(mlp, st, X, val);
  int since_improve = 0;
  bool decayed = false;
  int epochs_run = 0;
  Mlp::Cache c;
  const double norm = static_cast<double>(d) * d;
  const std::size_t es =
      static_cast<std::size_t>(cap_count(cfg.epoch_cols, d, static_cast<int>(order.size())));
  const std::size_t bs = std::min<std::size_t>(
      static_cast<std::size_t>(cfg.batch),
      static_cast<std::size_t>(cap_count(cfg.step_cols, d, static_cast<int>(es))));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (std::size_t lo = 0; lo < es; lo += bs) {
      const std::size_t hi = std::min(es, lo + bs);
      Matrix in = pack_r1_multi_block(st.V, st.mu, st.tau, order, lo, hi);
      mlp.forward(in, -1, c);
      Matrix dval(d, in.cols());
      const double scale = 1.0 / static_cast<double>(hi - lo);
      for (std::size_t k = lo; k < hi; ++k) {
        Vector grad;
        frob_loss_and_grad(c.value().col(static_cast<Eigen::Index>(k - lo)),
                           X.col(order[k]), norm, &grad);
        dval.col(static_cast<Eigen::Index>(k - lo)) = scale * grad;
      }
      MlpGrad g = mlp.zero_grad();
      mlp.backward(c, dval, nullptr, &g, nullptr);
      opt.step(mlp, g);
    }
    ++epochs_run;
    const double vm = r1_multi_val_nmse(mlp, st, X, val);
    if (vm < best - 1e-12) {
      best = vm;
      bestW = mlp;
      since_improve = 0;
    } else if (++since_improve > cfg.patience) {
      if (decayed) break;
      decayed = true;
      opt.set_lr(opt.lr() * 0.5);
      since_improve = 0;
    }
  }
  mlp = bestW;
  return {layer, best, epochs_run};
}

}  // namespace

LdNet LdNet::make(LdSetting setting, int layers, const std::vector<int>& hidden,
                  Rng& rng, int signal_dim, Activation act) {
  if (layers < 1) throw std::invalid_argument("LdNet: layers >= 1");
  LdNet net;
  net.setting = setting;
  net.signal_dim = setting == LdSetting::R1Multi ? signal_dim : 1;
  std::vector<int> widths;
  switch (setting) {
    case LdSetting::Cs: widths.push_back(2); break;
    case LdSetting::R1: widths.push_back(3); break;
    case LdSetting::R1Multi: widths.push_back(signal_dim + 2); break;
  }
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(setting == LdSetting::R1Multi ? signal_dim : 1);
  net.denoisers.reserve(static_cast<std::size_t>(layers));
  for (int l = 0; l < layers; ++l) {
    Mlp mlp(widths, act);
    Rng sub = rng.split(static_cast<std::uint64_t>(l));
    mlp.init(sub);
    net.denoisers.push_back(std::move(mlp));
  }
  return net;
}

TrainReport train_cs(LdNet& net, const CsDataset& data, const TrainConfig& cfg) {
  if (net.setting != LdSetting::Cs)
    throw std::invalid_argument("train_cs: wrong setting");
  TrainReport rep;
  Rng rng(cfg.seed, /*stream=*/0x1d5e7);
  std::vector<int> train, val;
  const CsDataset sub =
      build_pool(data, static_cast<int>(data.X.cols()),
                 static_cast<int>(data.A.cols()), cfg, rng, cs_subset, train, val);
  net.tau_path.assign(static_cast<std::size_t>(net.layers()), 0.0);
  net.mu_path.assign(static_cast<std::size_t>(net.layers()), 0.0);
  Matrix bt_scratch;
  const Matrix& Bm = matched_filter(net, sub.A, bt_scratch);
  // Each round replays the layerwise pass with the tau path produced by the
  // previous round; round one's per-layer targets are degraded by the
  // then-untrained upstream layers, so a second pass tightens every layer.
  const int rounds = std::max(1, cfg.rounds);
  for (int round = 0; round < rounds; ++round) {
    CsStates st = cs_states_init(sub);
    for (int l = 0; l < net.layers(); ++l) {
      if (round == 0 && l > 0)
        net.denoisers[static_cast<std::size_t>(l)] =
            net.denoisers[static_cast<std::size_t>(l - 1)];
      net.tau_path[static_cast<std::size_t>(l)] = st.tau.mean();
      Matrix R = Bm * st.V + st.Xhat;
      {
        PhaseTimer t("regression", l);
        rep.layers.push_back(cs_layer_regression(
            net.denoisers[static_cast<std::size_t>(l)], R, st.tau, sub.X, train,
            val, cfg, rng, l));
      }
      if (std::getenv("UAMP_TIMING"))
        std::fprintf(stderr, "[timing] layer %d epochs %d val_mse %.3e\n", l,
                     rep.layers.back().epochs, rep.layers.back().val_mse);
      {
        PhaseTimer t("advance", l);
        cs_states_advance(net.denoisers[static_cast<std::size_t>(l)], sub, Bm, st);
      }
      if (!st.Xhat.allFinite()) {
        rep.ok = false;
        rep.error = "training diverged at layer " + std::to_string(l);
        return rep;
      }
    }
    if (cfg.finetune && cfg.finetune_epochs > 0) {
      PhaseTimer t("finetune", net.layers() - 1);
      rep.final_val_mse =
          cs_end_to_end(net, sub, train, val, net.layers() - 1, /*train_b=*/false,
                        cfg.finetune_epochs, cfg.finetune_lr, cfg.batch,
                        cfg.finetune_samples, rng);
    } else
      rep.final_val_mse = cs_unroll_eval_mse(net, sub, Bm, val, net.layers() - 1);
  }
  return rep;
}

TrainReport train_cs_learn_b(LdNet& net, const CsDataset& data,
                             const TrainConfig& cfg) {
  if (net.setting != LdSetting::Cs)
    throw std::invalid_argument("train_cs_learn_b: CS only");
  net.has_b = true;
  net.B = data.A.transpose();
  TrainReport rep;
  Rng rng(cfg.seed, /*stream=*/0x1d5e8);
  std::vector<int> train, val;
  const CsDataset sub =
      build_pool(data, static_cast<int>(data.X.cols()),
                 static_cast<int>(data.A.cols()), cfg, rng, cs_subset, train, val);
  net.tau_path.assign(static_cast<std::size_t>(net.layers()), 0.0);
  net.mu_path.assign(static_cast<std::size_t>(net.layers()), 0.0);
  CsStates st = cs_states_init(sub);
  for (int l = 0; l < net.layers(); ++l) {
    if (l > 0) net.denoisers[static_cast<std::size_t>(l)] =
                   net.denoisers[static_cast<std::size_t>(l - 1)];
    net.tau_path[static_cast<std::size_t>(l)] = st.tau.mean();
    // phase 1: B and earlier denoisers frozen, plain regression on layer l
    Matrix R = net.B * st.V + st.Xhat;
    rep.layers.push_back(cs_layer_regression(
        net.denoisers[static_cast<std::size_t>(l)], R, st.tau, sub.X, train, val,
        cfg, rng, l));
    // phase 2: unfreeze B and all denoisers up to l, train jointly
    if (cfg.b_epochs > 0)
      cs_end_to_end(net, sub, train, val, l, /*train_b=*/true, cfg.b_epochs,
                    cfg.b_lr, cfg.batch, cfg.finetune_samples, rng);
    // B and earlier layers moved: rebuild the cached states from scratch
    st = cs_states_init(sub);
    for (int k = 0; k <= l; ++k)
      cs_states_advance(net.denoisers[static_cast<std::size_t>(k)], sub, net.B, st);
    if (!st.Xhat.allFinite()) {
      rep.ok = false;
      rep.error = "training diverged at layer " + std::to_string(l);
      return rep;
    }
  }
  rep.final_val_mse = cs_unroll_eval_mse(net, sub, net.B, val, net.layers() - 1);
  return rep;
}

TrainReport train_r1(LdNet& net, const R1Dataset& data, const TrainConfig& cfg) {
  if (net.setting != LdSetting::R1)
    throw std::invalid_argument("train_r1: wrong setting");
  TrainReport rep;
  Rng rng(cfg.seed, /*stream=*/0x1d5e9);
  std::vector<int> train, val;
  const R1Dataset sub =
      build_pool(data, data.n(), data.d(), cfg, rng, r1_subset, train, val);
  net.tau_path.assign(static_cast<std::size_t>(net.layers()), 0.0);
  net.mu_path.assign(static_cast<std::size_t>(net.layers()), 0.0);
  // second moment of the signal, estimated from the training set
  const double m2 = sub.X.squaredNorm() / static_cast<double>(sub.X.size());
  R1States st = r1_states_init(sub, m2);
  for (int l = 0; l < net.layers(); ++l) {
    if (l > 0) net.denoisers[static_cast<std::size_t>(l)] =
                   net.denoisers[static_cast<std::size_t>(l - 1)];
    net.tau_path[static_cast<std::size_t>(l)] = st.tau.mean();
    net.mu_path[static_cast<std::size_t>(l)] = st.mu.mean();
    rep.layers.push_back(r1_layer_regression(
        net.denoisers[static_cast<std::size_t>(l)], st, sub.X, train, val, cfg,
        rng, l));
    r1_states_advance(net.denoisers[static_cast<std::size_t>(l)], sub, m2, st);
    if (!st.Xhat.allFinite()) {
      rep.ok = false;
      rep.error = "training diverged at layer " + std::to_string(l);
      return rep;
    }
  }
  if (cfg.finetune && cfg.finetune_epochs > 0)
    rep.final_val_mse =
        r1_end_to_end(net, sub, m2, train, val, net.layers() - 1,
                      cfg.finetune_epochs, cfg.finetune_lr, std::min(cfg.batch, 16),
                      cfg.finetune_samples, rng);
  else
    rep.final_val_mse = rep.layers.back().val_mse;
  return rep;
}

TrainReport train_r1_multi(LdNet& net, const R1Dataset& data,
                           const TrainConfig& cfg) {
  if (net.setting != LdSetting::R1Multi)
    throw std::invalid_argument("train_r1_multi: wrong setting");
  TrainReport rep;
  Rng rng(cfg.seed, /*stream=*/0x1d5ea);
  std::vector<int> train, val;
  const R1Dataset sub =
      build_pool(data, data.n(), data.d(), cfg, rng, r1_subset, train, val);
  net.tau_path.assign(static_cast<std::size_t>(net.layers()), 0.0);
  net.mu_path.assign(static_cast<std::size_t>(net.layers()), 0.0);
  const double m2 = sub.X.squaredNorm() / static_cast<double>(sub.X.size());
  R1States st = r1_states_init(sub, m2);
  for (int l = 0; l < net.layers(); ++l) {
    if (l > 0) net.denoisers[static_cast<std::size_t>(l)] =
                   net.denoisers[static_cast<std::size_t>(l - 1)];
    net.tau_path[static_cast<std::size_t>(l)] = st.tau.mean();
    net.mu_path[static_cast<std::size_t>(l)] = st.mu.mean();
    rep.layers.push_back(r1_multi_layer_regression(
        net.denoisers[static_cast<std::size_t>(l)], st, sub.X, train, val, cfg,
        rng, l));
    r1_multi_states_advance(net.denoisers[static_cast<std::size_t>(l)], sub, m2, st);
    if (!st.Xhat.allFinite()) {
      rep.ok = false;
      rep.error = "training diverged at layer " + std::to_string(l);
      return rep;
    }
  }
  rep.final_val_mse = rep.layers.back().val_mse;
  return rep;
}

double ldnet_cs_loss(const LdNet& net, const CsDataset& data,
                     const std::vector<int>& idx, std::vector<MlpGrad>* grads,
                     Matrix* grad_b, const LdPath* path, LdPath* path_out) {
  const int d = static_cast<int>(data.A.cols());
  const int nb = static_cast<int>(idx.size());
  Matrix Yb(data.Y.rows(), nb), Xb(d, nb);
  for (int k = 0; k < nb; ++k) {
    Yb.col(k) = data.Y.col(idx[static_cast<std::size_t>(k)]);
    Xb.col(k) = data.X.col(idx[static_cast<std::size_t>(k)]);
  }
  Matrix bt_scratch;
  const Matrix& Bm = matched_filter(net, data.A, bt_scratch);
  const int upto = net.layers() - 1;
  CsUnroll u;
  cs_unroll_forward(net, data, Bm, Yb, upto, u, path);
  if (path_out) {
    path_out->tau = u.tau;
    path_out->mu.clear();
  }
  if (grads || grad_b) {
    if (grads) {
      grads->clear();
      for (const Mlp& m : net.denoisers) grads->push_back(m.zero_grad());
    }
    if (grad_b) *grad_b = Matrix::Zero(Bm.rows(), Bm.cols());
    cs_unroll_backward(net, data, Bm, Xb, upto, u, grads, grad_b);
  }
  return (u.Xhat[static_cast<std::size_t>(upto) + 1] - Xb).squaredNorm() /
         (static_cast<double>(nb) * d);
}

double ldnet_r1_loss(const LdNet& net, const R1Dataset& data, double m2,
                     const std::vector<int>& idx, std::vector<MlpGrad>* grads,
                     const LdPath* path, LdPath* path_out) {
  const int d = data.d();
  const int nb = static_cast<int>(idx.size());
  std::vector<Matrix> Ys;
  Matrix Xb(d, nb);
  for (int k = 0; k < nb; ++k) {
    Ys.push_back(r1_observation(data, idx[static_cast<std::size_t>(k)]));
    Xb.col(k) = data.X.col(idx[static_cast<std::size_t>(k)]);
  }
  const int upto = net.layers() - 1;
  R1Unroll u;
  r1_unroll_forward(net, Ys, m2, upto, u, path);
  if (path_out) {
    path_out->tau = u.tau;
    path_out->mu = u.mu;
  }
  if (grads) {
    grads->clear();
    for (const Mlp& m : net.denoisers) grads->push_back(m.zero_grad());
    r1_unroll_backward(net, Ys, Xb, upto, u, grads);
  }
  const double norm = static_cast<double>(d) * d;
  double acc = 0.0;
  for (int b = 0; b < nb; ++b)
    acc += frob_loss_and_grad(u.Xhat[static_cast<std::size_t>(upto) + 1].col(b),
                              Xb.col(b), norm, nullptr);
  return acc / nb;
}

std::vector<TraceRow> ldnet_run_cs(const LdNet& net, const CsProblem& p,
                                   const Vector& x_true) {
  std::vector<MlpDenoiser> wrappers;
  wrappers.reserve(static_cast<std::size_t>(net.layers()));
  DenoiserSchedule sched;
  for (const Mlp& m : net.denoisers)
    wrappers.emplace_back(&m, MlpDenoiser::InputKind::Cs);
  for (const auto& w : wrappers) sched.push_back(&w);
  return run_amp_cs(p, sched, net.layers(), x_true, net.has_b ? &net.B : nullptr);
}

std::vector<TraceRow> ldnet_run_r1(const LdNet& net, const R1Problem& p,
                                   const Vector& x_true,
                                   double prior_second_moment) {
  if (net.setting == LdSetting::R1Multi) {
    std::vector<TraceRow> rows;
    AmpState s = r1_amp_init(p, prior_second_moment);
    for (int l = 0; l < net.layers(); ++l) {
      MlpVectorDenoiser den(&net.denoisers[static_cast<std::size_t>(l)]);
      s = r1_amp_step_multidim(p, s, den, prior_second_moment);
      Metric m{1.0, 0.0};
      if (s.x_hat.allFinite()) m = frobenius_nmse(s.x_hat, x_true);
      rows.push_back({0, s.layer, s.tau_hat, s.mu_hat, m.value, m.db, s.diverged});
      if (s.diverged) break;
    }
    return rows;
  }
  std::vector<MlpDenoiser> wrappers;
  DenoiserSchedule sched;
  wrappers.reserve(static_cast<std::size_t>(net.layers()));
  for (const Mlp& m : net.denoisers)
    wrappers.emplace_back(&m, MlpDenoiser::InputKind::R1);
  for (const auto& w : wrappers) sched.push_back(&w);
  return run_amp_r1(p, sched, net.layers(), x_true, prior_second_moment);
}

std::vector<ProfileRow> denoiser_profile(const LdNet& net, const Prior& prior,
                                         int points, double lo, double hi) {
  if (net.setting == LdSetting::R1Multi)
    throw std::invalid_argument("denoiser_profile: scalar settings only");
  if (net.tau_path.empty())
    throw std::invalid_argument("denoiser_profile: net has no recorded tau path");
  std::vector<ProfileRow> rows;
  const bool cs = net.setting == LdSetting::Cs;
  for (int l = 0; l < net.layers(); ++l) {
    SeInputs se{net.tau_path[static_cast<std::size_t>(l)],
                net.mu_path[static_cast<std::size_t>(l)]};
    MlpDenoiser den(&net.denoisers[static_cast<std::size_t>(l)],
                    cs ? MlpDenoiser::InputKind::Cs : MlpDenoiser::InputKind::R1);
    for (int i = 0; i < points; ++i) {
      const double r = lo + (hi - lo) * i / (points - 1);
      const double learned = den.eval(r, se).value;
      const double optimal = cs ? optimal_denoiser_cs(prior, r, se).value
                                : optimal_denoiser_r1(prior, r, se).value;
      rows.push_back({l, r, learned, optimal});
    }
  }
  return rows;
}

std::string profile_to_csv(const std::vector<ProfileRow>& rows) {
  std::string out = "layer,r,learned,optimal\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", r.layer, r.r,
                  r.learned, r.optimal);
    out += buf;
  }
  return out;
}

}  // namespace uamp
