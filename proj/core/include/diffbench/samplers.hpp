// Backward-process step kernels and the batch chain runner.
//
// All five kernels discretize the reverse SDE
//   dX = (X/2 + grad log p_{T-t}(X)) dt + dW,   X_0 ~ N(0, (1-e^{-T}) I),
// on the uniform grid t_n = n h.  Scheme-specific updates:
//   EM :  x' = (1+h/2) x + h s + sqrt(h) xi
//   EI :  x' = e^{h/2} x + 2(e^{h/2}-1) s + sqrt(e^h - 1) xi
//   REM:  midpoint at a uniform U in [0,1], Euler substep, noise coupling
//         xi = sqrt(U) xi' + sqrt(1-U) xi''
//   REI:  exponential-integrator substep with coupling coefficient rho(h, U)
//   SO :  local linearization with L = I/2 + hessian and temporal term M,
//         evaluated through phi-functions of L (valid for singular L).
#pragma once

#include "diffbench/numerics.hpp"
#include "diffbench/oracles.hpp"

#include <string>
#include <vector>

namespace diffbench {

enum class SchemeKind { EM, EI, REM, REI, SO };

const char* scheme_name(SchemeKind k);
SchemeKind scheme_from_name(const std::string& name);

// One draw from hat p_T = N(0, (1 - e^{-T}) I_d).
Vec init_from_hat_pT(double T, int d, RngStream& rng);

// Noise-coupling coefficient of the REI scheme,
//   rho = e^{h(1+u)/2} (1 - e^{-hu}) / sqrt((e^{hu}-1)(e^h-1)),
// evaluated through expm1 so the removable singularity at u -> 0 stays tame.
double rei_rho(double h, double u);

// One step of each kernel.  `n` is the step index (score queried at forward
// time T - nh).  Draw order is fixed: U first, then xi' then xi'' for the
// midpoint schemes; plain xi (d coordinates) for EM/EI; the SO noise
// consumes d normals through its covariance factor.  The kernels never
// mutate shared state; `ctx.calls` counts oracle evaluations.
Vec step_em(const Vec& theta, int n, const TimeGrid& grid,
            const ScoreOracle& oracle, OracleCtx& ctx, RngStream& rng);
Vec step_ei(const Vec& theta, int n, const TimeGrid& grid,
            const ScoreOracle& oracle, OracleCtx& ctx, RngStream& rng);
Vec step_rem(const Vec& theta, int n, const TimeGrid& grid,
             const ScoreOracle& oracle, OracleCtx& ctx, RngStream& rng);
Vec step_rei(const Vec& theta, int n, const TimeGrid& grid,
             const ScoreOracle& oracle, OracleCtx& ctx, RngStream& rng);
Vec step_so(const Vec& theta, int n, const TimeGrid& grid,
            const ScoreOracle& oracle, OracleCtx& ctx, RngStream& rng);

Vec step_scheme(SchemeKind scheme, const Vec& theta, int n,
                const TimeGrid& grid, const ScoreOracle& oracle,
                OracleCtx& ctx, RngStream& rng);

struct ChainResult {
  Mat finals;  // one row per completed trajectory, ordered by index
  SchemeKind scheme = SchemeKind::EM;
  TimeGrid grid;
  SeedSpec seed;
  double wall_ms = 0.0;
  std::uint64_t oracle_calls = 0;
  int n_requested = 0;
  int n_failed = 0;          // trajectories dropped on oracle failure
  std::string failure_note;  // first failure, for the run log
};

// n_traj independent chains; trajectory j draws from the stream with
// stream_id = j, so the result is identical whether trajectories run
// sequentially or across threads.  threads = 0 resolves DIFFBENCH_THREADS
// (0/unset = hardware concurrency).
//
// Per-trajectory oracle failures (e.g. an unusable MC effective sample size
// deep in a tail) are aggregated: the trajectory is dropped and counted in
// n_failed.  A non-finite state or a fully failed batch throws.
ChainResult run_batch(SchemeKind scheme, const ScoreOracle& oracle,
                      const TimeGrid& grid, int n_traj, const SeedSpec& seed,
                      int threads = 0);

struct GaussianLaw {
  Vec mean;
  Mat cov;
};

// Exact output law of the EM/EI/SO kernels on a Gaussian target: every score
// evaluation is affine in x, so each step is an affine-Gaussian map that can
// be propagated in closed form (zero Monte-Carlo error).  REM/REI are
// rejected: the realized U_n makes their law a continuous mixture.
GaussianLaw gaussian_pushforward_exact(SchemeKind scheme,
                                       const GaussianTarget& target,
                                       const TimeGrid& grid);

// Worker-count resolution shared by the batch runner and the harness.
int resolve_threads(int requested);

}  // namespace diffbench
