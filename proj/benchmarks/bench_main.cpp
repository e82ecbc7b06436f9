#include <benchmark/benchmark.h>

#include "uamp/amp.hpp"
#include "uamp/ldnet.hpp"
#include "uamp/state_evolution.hpp"

using namespace uamp;

namespace {

CsProblem make_problem(int m, int d, Rng& rng, Vector* x_out) {
  Prior prior = Prior::bernoulli_gaussian(0.1);
  Matrix A = gaussian_matrix(rng, m, d, 1.0 / m);
  Vector x = prior.sample(rng, d);
  Vector y = A * x + gaussian_vector(rng, m, 2e-5);
  if (x_out) *x_out = x;
  return {std::move(A), std::move(y), 2e-5};
}

void BM_CsAmpStep(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(1);
  CsProblem p = make_problem(d / 2, d, rng, nullptr);
  BayesCsDenoiser den(Prior::bernoulli_gaussian(0.1));
  const AmpState s0 = cs_amp_step(p, cs_amp_init(p), den);
  for (auto _ : state) {
    AmpState s = cs_amp_step(p, s0, den);
    benchmark::DoNotOptimize(s.tau_hat);
  }
}
BENCHMARK(BM_CsAmpStep)->Arg(500)->Arg(2000);

void BM_R1AmpStep(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(2);
  Prior prior = Prior::z2();
  Vector x = prior.sample(rng, d);
  Matrix w = gaussian_matrix(rng, d, d, 1.0);
  Matrix noise = (w + w.transpose()) / std::sqrt(2.0 * d);
  R1Problem p{Matrix((1.5 / d) * x * x.transpose() + noise), 1.5};
  BayesR1Denoiser den(prior);
  const AmpState s0 = r1_amp_step(p, r1_amp_init(p), den);
  for (auto _ : state) {
    AmpState s = r1_amp_step(p, s0, den);
    benchmark::DoNotOptimize(s.tau_hat);
  }
}
BENCHMARK(BM_R1AmpStep)->Arg(512);

void BM_MlpForwardTangent(benchmark::State& state) {
  const int cols = static_cast<int>(state.range(0));
  Rng rng(3);
  Mlp mlp({2, 48, 48, 1}, Activation::Gelu);
  mlp.init(rng);
  Matrix X = gaussian_matrix(rng, 2, cols, 1.0);
  Mlp::Cache cache;
  for (auto _ : state) {
    mlp.forward(X, 0, cache);
    benchmark::DoNotOptimize(cache.value()(0, 0));
  }
}
BENCHMARK(BM_MlpForwardTangent)->Arg(500)->Arg(4096);

void BM_MlpBackward(benchmark::State& state) {
  const int cols = static_cast<int>(state.range(0));
  Rng rng(4);
  Mlp mlp({2, 48, 48, 1}, Activation::Gelu);
  mlp.init(rng);
  Matrix X = gaussian_matrix(rng, 2, cols, 1.0);
  Mlp::Cache cache;
  mlp.forward(X, 0, cache);
  Matrix dval = Matrix::Ones(1, cols);
  Matrix dtan = Matrix::Ones(1, cols);
  MlpGrad g = mlp.zero_grad();
  for (auto _ : state) {
    g.setZero();
    mlp.backward(cache, dval, &dtan, &g, nullptr);
    benchmark::DoNotOptimize(g.W[0](0, 0));
  }
}
BENCHMARK(BM_MlpBackward)->Arg(500)->Arg(4096);

void BM_LdNetUnroll(benchmark::State& state) {
  Rng rng(5);
  Vector x;
  CsProblem p = make_problem(250, 500, rng, &x);
  Rng init(6);
  LdNet net = LdNet::make(LdSetting::Cs, 15, {48, 48}, init);
  for (auto _ : state) {
    auto rows = ldnet_run_cs(net, p, x);
    benchmark::DoNotOptimize(rows.back().nmse);
  }
}
BENCHMARK(BM_LdNetUnroll);

void BM_StateEvolutionCs(benchmark::State& state) {
  Prior prior = Prior::bernoulli_gaussian(0.1);
  BayesCsDenoiser den(prior);
  for (auto _ : state) {
    SeTrace t = se_cs(prior, den, 2e-5, 0.5, 15);
    benchmark::DoNotOptimize(t.tau2.back());
  }
}
BENCHMARK(BM_StateEvolutionCs);

}  // namespace

BENCHMARK_MAIN();
