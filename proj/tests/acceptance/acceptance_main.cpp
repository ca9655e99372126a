// Acceptance suite: one line per criterion, non-zero exit on any failure.
//
//  1. stationary fixed point, all schemes, 1e5 trajectories
//  2. convergence-order study slopes
//  3. second-order dominance on the logistic posterior study
//  4. affine W2 growth in the score-error radius
//  5. identity suites (phi, rho, M-term, W2 brute force, MC-vs-analytic)
//  6. bound-calculator regression
//  7. byte-identical outputs across two full default runs

#include "diffbench/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

using namespace diffbench;

namespace {

int g_failures = 0;

class Criterion {
 public:
  Criterion(int id, std::string title)
      : id_(id), title_(std::move(title)),
        start_(std::chrono::steady_clock::now()) {}

  void fail(const std::string& why) {
    ok_ = false;
    details_.push_back(why);
  }
  void note(const std::string& what) { details_.push_back(what); }

  void check(bool cond, const std::string& why) {
    if (!cond) fail(why);
  }

  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

  ~Criterion() {
    std::printf("[%s] criterion %d: %s (%.1fs)\n", ok_ ? "PASS" : "FAIL", id_,
                title_.c_str(), seconds());
    for (const std::string& d : details_) {
      std::printf("       - %s\n", d.c_str());
    }
    std::fflush(stdout);
    if (!ok_) ++g_failures;
  }

 private:
  int id_;
  std::string title_;
  bool ok_ = true;
  std::vector<std::string> details_;
  std::chrono::steady_clock::time_point start_;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

constexpr std::uint64_t kSeed = 20250115;

void criterion1_stationary_fixed_point() {
  Criterion c(1, "stationary fixed point: mean within 0.02, variance within "
                 "0.03 for every scheme");
  const GaussianScoreOracle oracle(
      GaussianTarget(Vec::Zero(2), Mat::Identity(2, 2)));
  const TimeGrid grid = build_time_grid(10.0, 0.01);
  for (const SchemeKind scheme : {SchemeKind::EM, SchemeKind::EI,
                                  SchemeKind::REM, SchemeKind::REI,
                                  SchemeKind::SO}) {
    const ChainResult chain =
        run_batch(scheme, oracle, grid, 100000, SeedSpec{kSeed, 1});
    for (int j = 0; j < 2; ++j) {
      const double mean = chain.finals.col(j).mean();
      const double var = (chain.finals.col(j).array() - mean).square().mean();
      c.check(std::abs(mean) <= 0.02, std::string(scheme_name(scheme)) +
                                          " mean[" + std::to_string(j) +
                                          "] = " + fmt(mean));
      c.check(std::abs(var - 1.0) <= 0.03, std::string(scheme_name(scheme)) +
                                               " var[" + std::to_string(j) +
                                               "] = " + fmt(var));
    }
  }
  c.check(c.seconds() <= 120.0, "runtime exceeded 2 min: " + fmt(c.seconds()));
}

void criterion2_order_study() {
  Criterion c(2, "order study: slope(SO) >= 0.9, others >= 0.45, "
                 "slope(SO) >= slope(EM) + 0.3");
  CliOverrides ov;
  ov.experiment = ExperimentKind::OrderStudy;
  ov.seed = kSeed;
  const ExperimentConfig cfg = parse_config("", ov);
  const ExperimentResult result = run_order_study(cfg);
  double slope_em = 0.0, slope_so = 0.0;
  for (const SlopeRow& s : result.slopes) {
    c.note("slope " + s.scheme + " = " + fmt(s.slope) + " (r2 " + fmt(s.r2) +
           ")");
    const double min_slope = s.scheme == "SO" ? 0.9 : 0.45;
    c.check(s.slope >= min_slope,
            s.scheme + " slope " + fmt(s.slope) + " < " + fmt(min_slope));
    if (s.scheme == "EM") slope_em = s.slope;
    if (s.scheme == "SO") slope_so = s.slope;
  }
  c.check(slope_so >= slope_em + 0.3,
          "slope(SO) - slope(EM) = " + fmt(slope_so - slope_em) + " < 0.3");
  c.check(c.seconds() <= 300.0, "runtime exceeded 5 min: " + fmt(c.seconds()));
}

// Shared by criteria 3 and 7: one full default logistic study.
ExperimentResult run_default_figure1(const std::string& out_dir) {
  CliOverrides ov;
  ov.experiment = ExperimentKind::Figure1;
  ov.seed = kSeed;
  ov.out_dir = out_dir;
  const ExperimentConfig cfg = parse_config("", ov);
  ExperimentResult result = run_figure1(cfg);
  emit_outputs(result, cfg);
  return result;
}

void criterion3_so_dominance() {
  Criterion c(3, "logistic study: SO has the smallest first-dimension W2 in "
                 ">= 4 of 5 step sizes for every lambda");
  const ExperimentResult result = run_default_figure1("/tmp/diffbench_accept_fig1_a");
  for (const double lambda : {10.0, 50.0, 100.0}) {
    int wins = 0, cells = 0;
    for (const double h : {0.4, 0.2, 0.1, 0.05, 0.025}) {
      double best = 1e300;
      std::string best_scheme;
      double so_value = 1e300;
      for (const ResultRow& row : result.rows) {
        if (row.lambda != lambda || row.h != h) continue;
        if (!(row.w2_dim1 >= 0.0)) continue;  // NaN error row
        if (row.scheme == "SO") so_value = row.w2_dim1;
        if (row.w2_dim1 < best) {
          best = row.w2_dim1;
          best_scheme = row.scheme;
        }
      }
      ++cells;
      if (best_scheme == "SO") {
        ++wins;
      } else {
        c.note("lambda " + fmt(lambda) + ", h " + fmt(h) + ": best " +
               best_scheme + " (" + fmt(best) + ") vs SO (" + fmt(so_value) +
               ")");
      }
    }
    c.check(cells == 5, "missing grid cells at lambda " + fmt(lambda));
    c.check(wins >= 4, "lambda " + fmt(lambda) + ": SO won only " +
                           std::to_string(wins) + "/5 cells");
    c.note("lambda " + fmt(lambda) + ": SO wins " + std::to_string(wins) + "/5");
  }
  c.check(c.seconds() <= 1200.0,
          "runtime exceeded 20 min: " + fmt(c.seconds()));
}

void criterion4_score_error_scaling() {
  Criterion c(4, "score-error scaling: W2 grows affinely in eps_sc "
                 "(r2 >= 0.9, positive slope) for EM/EI/REM/REI");
  const GaussianTarget target(2.0 * Vec::Ones(2), 0.25 * Mat::Identity(2, 2));
  const TimeGrid grid = build_time_grid(10.0, 0.05);
  const std::vector<double> eps_list{0.0, 0.05, 0.1, 0.2};

  RngStream ref_rng(SeedSpec{kSeed, 40});
  Mat reference(200000, 2);
  for (int i = 0; i < reference.rows(); ++i) {
    reference.row(i) = target.sample(ref_rng).transpose();
  }

  for (const SchemeKind scheme : {SchemeKind::EM, SchemeKind::EI,
                                  SchemeKind::REM, SchemeKind::REI}) {
    std::vector<double> errs;
    for (const double eps : eps_list) {
      auto inner = std::make_shared<GaussianScoreOracle>(target);
      std::shared_ptr<const ScoreOracle> oracle = inner;
      if (eps > 0.0) {
        oracle = corrupt_oracle(inner, CorruptionSpec{eps, 0.0, 0.0},
                                SeedSpec{kSeed, 41});
      }
      const ChainResult chain =
          run_batch(scheme, *oracle, grid, 100000, SeedSpec{kSeed, 42});
      errs.push_back(
          sliced_w2(chain.finals, reference, 64, SeedSpec{kSeed, 43}));
    }
    const LinearFit fit = linear_fit(eps_list, errs);
    std::ostringstream msg;
    msg << scheme_name(scheme) << ": W2(eps) = {" << fmt(errs[0]) << ", "
        << fmt(errs[1]) << ", " << fmt(errs[2]) << ", " << fmt(errs[3])
        << "}, slope " << fmt(fit.slope) << ", r2 " << fmt(fit.r2);
    c.note(msg.str());
    c.check(fit.slope > 0.0,
            std::string(scheme_name(scheme)) + ": slope not positive");
    c.check(fit.r2 >= 0.9, std::string(scheme_name(scheme)) + ": r2 " +
                               fmt(fit.r2) + " < 0.9");
  }
}

void criterion5_identity_suites() {
  Criterion c(5, "identity suites: phi, rho, M-term, W2 brute force, "
                 "MC score accuracy");
  // phi identities to 1e-10 over [-50, 50] (scaled by max(1, e^z))
  double worst_phi = 0.0;
  for (double z = -50.0; z <= 50.0; z += 0.0831) {
    const PhiPair p = phi_functions(z);
    const double ez = std::exp(z);
    const double scale = std::max(1.0, ez);
    worst_phi = std::max(worst_phi, std::abs(p.phi1 * z + 1.0 - ez) / scale);
    worst_phi =
        std::max(worst_phi, std::abs(p.phi2 * z * z + z + 1.0 - ez) / scale);
  }
  c.note("phi identity max error " + fmt(worst_phi));
  c.check(worst_phi <= 1e-10, "phi identities exceed 1e-10");

  // rho in [0,1] and rho(U=1) = 1 to 1e-12
  bool rho_ok = true;
  double rho1_err = 0.0;
  for (double h = 0.01; h <= 5.0; h += 0.0313) {
    rho1_err = std::max(rho1_err, std::abs(rei_rho(h, 1.0) - 1.0));
    for (double u = 1e-8; u <= 1.0; u = u * 2.3 + 0.0171) {
      const double r = rei_rho(h, std::min(u, 1.0));
      rho_ok = rho_ok && r >= 0.0 && r <= 1.0 + 1e-12;
    }
  }
  c.check(rho_ok, "rho left [0, 1]");
  c.check(rho1_err <= 1e-12, "rho(U=1) != 1");

  // M-term cancellation identity vs the analytic Gaussian oracle to 1e-8
  RngStream rng(SeedSpec{kSeed, 50});
  double worst_m = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    Mat G(2, 2);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) G(i, j) = rng.normal();
    const GaussianTarget g(rng.normal_vec(2),
                           Mat(G * G.transpose() + 0.3 * Mat::Identity(2, 2)));
    const GaussianScoreOracle oracle(g);
    OracleCtx ctx;
    const double t = 0.1 + 3.0 * rng.uniform();
    const Vec x = 2.0 * rng.normal_vec(2);
    const LinTerms lt = oracle.lin_terms(t, x, ctx);
    const auto der = gaussian_marginal_derivatives(g, t, x);
    worst_m = std::max(worst_m, (lt.M + der.dt_score).norm());
  }
  c.note("M identity max error " + fmt(worst_m));
  c.check(worst_m <= 1e-8, "M-term identity exceeds 1e-8");

  // w2_1d equals brute-force assignment for n <= 6
  bool w2_ok = true;
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 1 + static_cast<int>(rng.uniform() * 6.0);
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = 2.0 * rng.normal();
      b[i] = 2.0 * rng.normal();
    }
    w2_ok = w2_ok &&
            std::abs(w2_1d(a, b) - selfcheck::w2_1d_bruteforce(a, b)) <= 1e-12;
  }
  c.check(w2_ok, "w2_1d disagrees with brute force");

  // MC score within 0.05 (L2) of the analytic score at 1e5 particles
  const GaussianTarget g(Vec::Zero(2), Mat::Identity(2, 2));
  Mat pool(100000, 2);
  for (int i = 0; i < pool.rows(); ++i) pool.row(i) = g.sample(rng).transpose();
  McOracleConfig mc_cfg;
  mc_cfg.n_particles = 100000;
  McScoreOracle mc(pool, mc_cfg);
  const GaussianScoreOracle exact(g);
  OracleCtx ctx;
  double worst_mc = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const Vec x = rng.normal_vec(2);
    worst_mc = std::max(
        worst_mc, (mc.score(1.0, x, ctx) - exact.score(1.0, x, ctx)).norm());
  }
  c.note("MC score max error " + fmt(worst_mc));
  c.check(worst_mc <= 0.05, "MC score error exceeds 0.05");

  c.check(c.seconds() <= 60.0, "runtime exceeded 1 min: " + fmt(c.seconds()));
}

void criterion6_bound_regression() {
  Criterion c(6, "bound calculator: C1(EM) = 5, C2(EM) = 2, C1(EI) = 4, "
                 "m0 = 0.4 rejected");
  RegularityConstants rc;
  rc.m0 = 1.0;
  rc.L0 = 1.0;
  const BoundReport em =
      theorem_bound(SchemeKind::EM, rc, 2, 0.1, 10.0, 0, 0, 0, 1.0);
  c.check(std::abs(em.C1 - 5.0) < 1e-12, "C1(EM) = " + fmt(em.C1));
  c.check(std::abs(em.C2 - 2.0) < 1e-12, "C2(EM) = " + fmt(em.C2));
  const BoundReport ei =
      theorem_bound(SchemeKind::EI, rc, 2, 0.1, 10.0, 0, 0, 0, 1.0);
  c.check(std::abs(ei.C1 - 4.0) < 1e-12, "C1(EI) = " + fmt(ei.C1));
  bool rejected = false;
  try {
    RegularityConstants bad;
    bad.m0 = 0.4;
    bad.L0 = 1.0;
    theorem_bound(SchemeKind::EM, bad, 2, 0.1, 10.0, 0, 0, 0, 1.0);
  } catch (const std::invalid_argument& e) {
    rejected = std::string(e.what()).find("m_min") != std::string::npos;
  }
  c.check(rejected, "m0 = 0.4 was not rejected with the m_min message");
}

void criterion7_determinism() {
  Criterion c(7, "determinism: two full default runs emit byte-identical "
                 "results.csv");
  // First run happened in criterion 3; rerun with the identical config.
  run_default_figure1("/tmp/diffbench_accept_fig1_b");
  const std::string a = slurp("/tmp/diffbench_accept_fig1_a/results.csv");
  const std::string b = slurp("/tmp/diffbench_accept_fig1_b/results.csv");
  c.check(!a.empty(), "first run produced no results.csv");
  c.check(a == b, "results.csv differs between runs");
}

}  // namespace

int main() {
  std::printf("acceptance suite (seed %llu)\n",
              static_cast<unsigned long long>(kSeed));
  criterion5_identity_suites();
  criterion6_bound_regression();
  criterion1_stationary_fixed_point();
  criterion4_score_error_scaling();
  criterion2_order_study();
  criterion3_so_dominance();
  criterion7_determinism();
  std::filesystem::remove_all("/tmp/diffbench_accept_fig1_a");
  std::filesystem::remove_all("/tmp/diffbench_accept_fig1_b");
  if (g_failures > 0) {
    std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("acceptance: all 7 criteria passed\n");
  return 0;
}
