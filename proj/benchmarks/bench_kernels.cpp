// Microbenchmarks for the hot paths: step kernels, the MC score oracle and
// the W2 estimators.
#include "diffbench/harness.hpp"

#include <benchmark/benchmark.h>

using namespace diffbench;

namespace {

const GaussianScoreOracle& stationary_oracle() {
  static const GaussianScoreOracle oracle(
      GaussianTarget(Vec::Zero(2), Mat::Identity(2, 2)));
  return oracle;
}

void BM_StepKernel(benchmark::State& state) {
  const SchemeKind scheme = static_cast<SchemeKind>(state.range(0));
  const TimeGrid grid = build_time_grid(10.0, 0.01);
  RngStream rng(SeedSpec{1, 0});
  OracleCtx ctx;
  Vec x = init_from_hat_pT(grid.T, 2, rng);
  int n = 0;
  for (auto _ : state) {
    x = step_scheme(scheme, x, n, grid, stationary_oracle(), ctx, rng);
    n = (n + 1) % grid.N;
    benchmark::DoNotOptimize(x.data());
  }
  state.SetLabel(scheme_name(scheme));
}
BENCHMARK(BM_StepKernel)->DenseRange(0, 4);

void BM_McOracleScore(benchmark::State& state) {
  const int n_particles = static_cast<int>(state.range(0));
  RngStream rng(SeedSpec{2, 0});
  Mat pool(n_particles, 2);
  for (int i = 0; i < n_particles; ++i) {
    pool.row(i) = rng.normal_vec(2).transpose();
  }
  McOracleConfig cfg;
  cfg.n_particles = n_particles;
  McScoreOracle oracle(pool, cfg);
  OracleCtx ctx;
  const Vec x = Vec::Constant(2, 0.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(oracle.score(1.0, x, ctx));
  }
}
BENCHMARK(BM_McOracleScore)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_McOracleJet(benchmark::State& state) {
  const int n_particles = static_cast<int>(state.range(0));
  RngStream rng(SeedSpec{3, 0});
  Mat pool(n_particles, 2);
  for (int i = 0; i < n_particles; ++i) {
    pool.row(i) = rng.normal_vec(2).transpose();
  }
  McOracleConfig cfg;
  cfg.n_particles = n_particles;
  McScoreOracle oracle(pool, cfg);
  OracleCtx ctx;
  const Vec x = Vec::Constant(2, 0.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(oracle.jet(1.0, x, ctx));
  }
}
BENCHMARK(BM_McOracleJet)->Arg(10000);

void BM_W2Sorted(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  RngStream rng(SeedSpec{4, 0});
  std::vector<double> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(w2_1d(a, b));
  }
}
BENCHMARK(BM_W2Sorted)->Arg(2000)->Arg(100000);

void BM_PhiFunctions(benchmark::State& state) {
  double z = -2.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(phi_functions(z));
    z = z < 2.0 ? z + 1e-3 : -2.0;
  }
}
BENCHMARK(BM_PhiFunctions);

void BM_MalaChain(benchmark::State& state) {
  const Dataset data = generate_dataset(100, 2, 100.0,
                                        Vec::Ones(2) / std::sqrt(2.0),
                                        SeedSpec{5, 0});
  const LogisticPosterior post(data, 50.0);
  MalaConfig cfg;
  cfg.step = 1.0 / post.L0();
  cfg.burn_in = 200;
  cfg.thinning = 2;
  cfg.n_samples = 500;
  std::uint64_t stream = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        mala_reference_sampler(post, cfg, SeedSpec{6, stream++}));
  }
}
BENCHMARK(BM_MalaChain)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
