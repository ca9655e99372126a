#include "diffbench/samplers.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <thread>

namespace diffbench {

const char* scheme_name(SchemeKind k) {
  switch (k) {
    case SchemeKind::EM: return "EM";
    case SchemeKind::EI: return "EI";
    case SchemeKind::REM: return "REM";
    case SchemeKind::REI: return "REI";
    case SchemeKind::SO: return "SO";
  }
  return "?";
}

SchemeKind scheme_from_name(const std::string& name) {
  if (name == "EM") return SchemeKind::EM;
  if (name == "EI") return SchemeKind::EI;
  if (name == "REM") return SchemeKind::REM;
  if (name == "REI") return SchemeKind::REI;
  if (name == "SO") return SchemeKind::SO;
  throw std::invalid_argument("unknown scheme '" + name +
                              "' (expected EM|EI|REM|REI|SO)");
}

Vec init_from_hat_pT(double T, int d, RngStream& rng) {
  if (!(T > 0.0)) throw std::invalid_argument("init_from_hat_pT: T must be > 0");
  return std::sqrt(-std::expm1(-T)) * rng.normal_vec(d);
}

Vec step_em(const Vec& theta, int n, const TimeGrid& grid,
            const ScoreOracle& oracle, OracleCtx& ctx, RngStream& rng) {
  const double h = grid.h;
  const double t = grid.T - n * h;
  ++ctx.calls;
  Vec s = oracle.score(t, theta, ctx);
  Vec out = (1.0 + 0.5 * h) * theta + h * s;
  out += std::sqrt(h) * rng.normal_vec(theta.size());
  return out;
}

Vec step_ei(const Vec& theta, int n, const TimeGrid& grid,
            const ScoreOracle& oracle, OracleCtx& ctx, RngStream& rng) {
  const double h = grid.h;
  const double t = grid.T - n * h;
  ++ctx.calls;
  Vec s = oracle.score(t, theta, ctx);
  Vec out = std::exp(0.5 * h) * theta + 2.0 * std::expm1(0.5 * h) * s;
  out += std::sqrt(std::expm1(h)) * rng.normal_vec(theta.size());
  return out;
}

Vec step_rem(const Vec& theta, int n, const TimeGrid& grid,
             const ScoreOracle& oracle, OracleCtx& ctx, RngStream& rng) {
  const double h = grid.h;
  const double t = grid.T - n * h;
  const auto d = theta.size();

  const double u = rng.uniform();
  const Vec xi1 = rng.normal_vec(d);
  const Vec xi2 = rng.normal_vec(d);
  const Vec xi = std::sqrt(u) * xi1 + std::sqrt(1.0 - u) * xi2;

  // gamma(T-t, x) = x/2 + s(T-t, x)
  ++ctx.calls;
  Vec gamma0 = 0.5 * theta + oracle.score(t, theta, ctx);
  Vec mid = theta + (h * u) * gamma0 + std::sqrt(h * u) * xi1;

  ++ctx.calls;
  Vec gamma_mid = 0.5 * mid + oracle.score(t - u * h, mid, ctx);
  return theta + h * gamma_mid + std::sqrt(h) * xi;
}

double rei_rho(double h, double u) {
  const double num = std::exp(0.5 * h * (1.0 + u)) * (-std::expm1(-h * u));
  const double den = std::sqrt(std::expm1(h * u) * std::expm1(h));
  return num / den;
}

Vec step_rei(const Vec& theta, int n, const TimeGrid& grid,
             const ScoreOracle& oracle, OracleCtx& ctx, RngStream& rng) {
  constexpr double kUMin = 1e-8;  // rho is 0/0 at u = 0
  const double h = grid.h;
  const double t = grid.T - n * h;
  const auto d = theta.size();

  const double u = std::max(rng.uniform(), kUMin);
  const Vec xi1 = rng.normal_vec(d);
  const Vec xi2 = rng.normal_vec(d);
  const double rho = rei_rho(h, u);
  const Vec xi = rho * xi1 + std::sqrt(std::max(0.0, 1.0 - rho * rho)) * xi2;

  ++ctx.calls;
  Vec s0 = oracle.score(t, theta, ctx);
  Vec mid = std::exp(0.5 * u * h) * theta + 2.0 * std::expm1(0.5 * u * h) * s0;
  mid += std::sqrt(std::expm1(u * h)) * xi1;

  ++ctx.calls;
  Vec s_mid = oracle.score(t - u * h, mid, ctx);
  Vec out = std::exp(0.5 * h) * theta +
            h * std::exp(0.5 * (1.0 - u) * h) * s_mid;
  out += std::sqrt(std::expm1(h)) * xi;
  return out;
}

Vec step_so(const Vec& theta, int n, const TimeGrid& grid,
            const ScoreOracle& oracle, OracleCtx& ctx, RngStream& rng) {
  if (!oracle.has_m_term()) {
    throw std::logic_error("step_so: oracle lacks L/M capability");
  }
  const double h = grid.h;
  const double t = grid.T - n * h;

  ++ctx.calls;
  const LinTerms lt = oracle.lin_terms(t, theta, ctx);

  // Deterministic part in the eigenbasis of L:
  //   x + h phi1(Lh) (x/2 + s) + h^2 phi2(Lh) M,
  // identical to L^{-1}(e^{Lh}-I) gamma + L^{-2}(e^{Lh}-Lh-I) M for
  // invertible L and well-defined when an eigenvalue vanishes.  Diagonal L
  // (isotropic oracles) skips the eigensolve; both branches apply the same
  // per-eigenvalue update.
  const bool diag_L = lt.L.isDiagonal(0.0);
  SymEig eig;
  if (diag_L) {
    eig.eigenvalues = lt.L.diagonal();
  } else {
    eig = sym_eigendecompose(lt.L);
  }
  Vec qd = 0.5 * theta + lt.score;
  Vec qm = lt.M;
  if (!diag_L) {
    qd = eig.eigenvectors.transpose() * qd;
    qm = eig.eigenvectors.transpose() * qm;
  }
  for (Eigen::Index i = 0; i < qd.size(); ++i) {
    const PhiPair p = phi_functions(eig.eigenvalues[i] * h);
    // noise variance of int e^{L((n+1)h - t)} dW over one step:
    // (e^{2 lam h} - 1) / (2 lam) = h phi1(2 lam h)
    const double var = h * phi_functions(2.0 * eig.eigenvalues[i] * h).phi1;
    qd[i] = h * p.phi1 * qd[i] + h * h * p.phi2 * qm[i] +
            std::sqrt(std::max(0.0, var)) * rng.normal();
  }
  if (diag_L) return theta + qd;
  return theta + eig.eigenvectors * qd;
}

Vec step_scheme(SchemeKind scheme, const Vec& theta, int n,
                const TimeGrid& grid, const ScoreOracle& oracle,
                OracleCtx& ctx, RngStream& rng) {
  switch (scheme) {
    case SchemeKind::EM: return step_em(theta, n, grid, oracle, ctx, rng);
    case SchemeKind::EI: return step_ei(theta, n, grid, oracle, ctx, rng);
    case SchemeKind::REM: return step_rem(theta, n, grid, oracle, ctx, rng);
    case SchemeKind::REI: return step_rei(theta, n, grid, oracle, ctx, rng);
    case SchemeKind::SO: return step_so(theta, n, grid, oracle, ctx, rng);
  }
  throw std::logic_error("step_scheme: bad scheme");
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DIFFBENCH_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

ChainResult run_batch(SchemeKind scheme, const ScoreOracle& oracle,
                      const TimeGrid& grid, int n_traj, const SeedSpec& seed,
                      int threads) {
  if (n_traj < 1) throw std::invalid_argument("run_batch: n_traj must be >= 1");
  if (scheme == SchemeKind::SO && !oracle.has_m_term()) {
    throw std::logic_error("run_batch: SO scheme needs an oracle with L/M terms");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const int d = oracle.dim();
  const std::uint64_t base = derive_seed(seed);

  ChainResult result;
  result.scheme = scheme;
  result.grid = grid;
  result.seed = seed;
  result.n_requested = n_traj;

  Mat states(n_traj, d);
  std::vector<std::uint64_t> calls(static_cast<size_t>(n_traj), 0);
  std::vector<std::string> oracle_failures(static_cast<size_t>(n_traj));
  std::vector<int> diverged(static_cast<size_t>(n_traj), 0);

  auto run_range = [&](int lo, int hi) {
    for (int j = lo; j < hi; ++j) {
      const SeedSpec traj_seed{base, static_cast<std::uint64_t>(j)};
      RngStream rng(traj_seed);
      OracleCtx ctx{traj_seed, 0};
      try {
        Vec x = init_from_hat_pT(grid.T, d, rng);
        for (int nstep = 0; nstep < grid.N; ++nstep) {
          x = step_scheme(scheme, x, nstep, grid, oracle, ctx, rng);
        }
        if (!x.allFinite()) diverged[static_cast<size_t>(j)] = 1;
        states.row(j) = x.transpose();
      } catch (const McOracleError& e) {
        oracle_failures[static_cast<size_t>(j)] = e.what();
      }
      calls[static_cast<size_t>(j)] = ctx.calls;
    }
  };

  const int n_threads = std::min(resolve_threads(threads), n_traj);
  if (n_threads <= 1) {
    run_range(0, n_traj);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_threads));
    const int chunk = (n_traj + n_threads - 1) / n_threads;
    for (int k = 0; k < n_threads; ++k) {
      const int lo = k * chunk;
      const int hi = std::min(n_traj, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(run_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  for (int j = 0; j < n_traj; ++j) {
    result.oracle_calls += calls[static_cast<size_t>(j)];
    if (diverged[static_cast<size_t>(j)]) {
      std::ostringstream msg;
      msg << "run_batch(" << scheme_name(scheme) << "): trajectory " << j
          << " produced a non-finite state";
      throw std::runtime_error(msg.str());
    }
  }

  int n_ok = 0;
  for (int j = 0; j < n_traj; ++j) {
    const std::string& failure = oracle_failures[static_cast<size_t>(j)];
    if (failure.empty()) {
      states.row(n_ok++) = states.row(j);
    } else if (result.n_failed++ == 0) {
      result.failure_note =
          "trajectory " + std::to_string(j) + ": " + failure;
    }
  }
  if (n_ok == 0) {
    throw std::runtime_error("run_batch(" + std::string(scheme_name(scheme)) +
                             "): all " + std::to_string(n_traj) +
                             " trajectories failed; first: " +
                             result.failure_note);
  }
  result.finals = states.topRows(n_ok);

  result.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return result;
}

GaussianLaw gaussian_pushforward_exact(SchemeKind scheme,
                                       const GaussianTarget& target,
                                       const TimeGrid& grid) {
  if (scheme == SchemeKind::REM || scheme == SchemeKind::REI) {
    throw std::invalid_argument(
        "gaussian_pushforward_exact: REM/REI laws are U-mixtures, not Gaussian");
  }
  const int d = target.dim();
  const double h = grid.h;
  const GaussianScoreOracle oracle(target);

  GaussianLaw law;
  law.mean = Vec::Zero(d);
  law.cov = -std::expm1(-grid.T) * Mat::Identity(d, d);

  for (int n = 0; n < grid.N; ++n) {
    const double t = grid.T - n * h;
    // score(t, x) = H x + b with H = -P_t, b = P_t mu_t
    const Mat P = oracle.precision_at(t);
    const Mat H = -P;
    const Vec b = P * (std::exp(-0.5 * t) * target.mu());

    Mat F;
    Vec c;
    Mat Q;
    switch (scheme) {
      case SchemeKind::EM:
        F = (1.0 + 0.5 * h) * Mat::Identity(d, d) + h * H;
        c = h * b;
        Q = h * Mat::Identity(d, d);
        break;
      case SchemeKind::EI: {
        const double g = 2.0 * std::expm1(0.5 * h);
        F = std::exp(0.5 * h) * Mat::Identity(d, d) + g * H;
        c = g * b;
        Q = std::expm1(h) * Mat::Identity(d, d);
        break;
      }
      case SchemeKind::SO: {
        Mat L = H;
        L.diagonal().array() += 0.5;
        // gamma = L x + b;  M = -H(I + H) x - L b  (affine in x)
        const Mat K = -(H + H * H);
        const SymEig eig = sym_eigendecompose(L);
        Vec g1(d), g2(d), qv(d);
        for (int i = 0; i < d; ++i) {
          const PhiPair p = phi_functions(eig.eigenvalues[i] * h);
          g1[i] = h * p.phi1;
          g2[i] = h * h * p.phi2;
          qv[i] = h * phi_functions(2.0 * eig.eigenvalues[i] * h).phi1;
        }
        const Mat G1 = eig.eigenvectors * g1.asDiagonal() *
                       eig.eigenvectors.transpose();
        const Mat G2 = eig.eigenvectors * g2.asDiagonal() *
                       eig.eigenvectors.transpose();
        F = Mat::Identity(d, d) + G1 * L + G2 * K;
        c = G1 * b - G2 * (L * b);
        Q = eig.eigenvectors * qv.asDiagonal() * eig.eigenvectors.transpose();
        break;
      }
      default:
        throw std::logic_error("gaussian_pushforward_exact: bad scheme");
    }
    law.mean = F * law.mean + c;
    law.cov = F * law.cov * F.transpose() + Q;
    law.cov = 0.5 * (law.cov + law.cov.transpose());
  }
  return law;
}

}  // namespace diffbench
