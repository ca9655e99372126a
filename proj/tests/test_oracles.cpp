#include "diffbench/metrics.hpp"
#include "diffbench/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace diffbench;

TEST_CASE("OU marginal of a Gaussian") {
  const GaussianTarget stationary(Vec::Zero(2), Mat::Identity(2, 2));
  SUBCASE("the standard normal is the fixed point") {
    for (const double t : {0.1, 1.0, 7.0}) {
      const GaussianTarget m = ou_marginal_gaussian(stationary, t);
      CHECK(m.mu().norm() == 0.0);
      CHECK((m.sigma() - Mat::Identity(2, 2)).norm() < 1e-14);
    }
  }
  SUBCASE("mean decays like e^{-t/2}") {
    const GaussianTarget g(4.0 * Vec::Ones(2), Mat::Identity(2, 2));
    const GaussianTarget m = ou_marginal_gaussian(g, std::log(2.0));
    CHECK((m.mu() - g.mu() / std::sqrt(2.0)).norm() < 1e-12);
  }
  SUBCASE("everything mixes to the standard normal") {
    const GaussianTarget g(Vec::Ones(3), 6.0 * Mat::Identity(3, 3));
    const GaussianTarget m = ou_marginal_gaussian(g, 70.0);
    CHECK(m.mu().norm() < 1e-12);
    CHECK((m.sigma() - Mat::Identity(3, 3)).norm() < 1e-12);
  }
}

TEST_CASE("gaussian marginal derivatives") {
  SUBCASE("stationary: score = -x, H = -I, dt_score = 0") {
    const GaussianTarget g(Vec::Zero(2), Mat::Identity(2, 2));
    RngStream rng(SeedSpec{40, 0});
    const Vec x = rng.normal_vec(2);
    const auto der = gaussian_marginal_derivatives(g, 1.3, x);
    CHECK((der.score + x).norm() < 1e-13);
    CHECK((der.hessian + Mat::Identity(2, 2)).norm() < 1e-13);
    CHECK(der.dt_score.norm() < 1e-13);
  }
  SUBCASE("t = 0 recovers the target score") {
    const GaussianTarget g(Vec::Zero(2), 4.0 * Mat::Identity(2, 2));
    const Vec x = Vec::Ones(2);
    const auto der = gaussian_marginal_derivatives(g, 0.0, x);
    CHECK((der.score + x / 4.0).norm() < 1e-13);
  }
  SUBCASE("dt_score matches finite differences") {
    Mat sigma(2, 2);
    sigma << 1.5, -0.2, -0.2, 0.6;
    const GaussianTarget g(Vec::Ones(2), sigma);
    RngStream rng(SeedSpec{41, 0});
    for (int rep = 0; rep < 5; ++rep) {
      const double t = 0.3 + rng.uniform();
      const Vec x = 2.0 * rng.normal_vec(2);
      const double dt = 1e-5;
      const Vec fd = (gaussian_marginal_derivatives(g, t + dt, x).score -
                      gaussian_marginal_derivatives(g, t - dt, x).score) /
                     (2 * dt);
      const auto der = gaussian_marginal_derivatives(g, t, x);
      CHECK((der.dt_score - fd).norm() < 1e-6 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("MC oracle basics") {
  RngStream rng(SeedSpec{42, 0});

  SUBCASE("point-mass pool evaluates the kernel score exactly") {
    const Vec theta0 = rng.normal_vec(2);
    Mat pool(150, 2);
    pool.rowwise() = theta0.transpose();
    McOracleConfig cfg;
    cfg.n_particles = 150;
    McScoreOracle oracle(pool, cfg);
    OracleCtx ctx;
    const double t = 0.9;
    const Vec x = rng.normal_vec(2);
    const double a = std::exp(-0.5 * t), v = -std::expm1(-t);
    CHECK((oracle.score(t, x, ctx) + (x - a * theta0) / v).norm() < 1e-12);
  }

  SUBCASE("score and Hessian approach the analytic Gaussian values") {
    const GaussianTarget g(Vec::Zero(2), Mat::Identity(2, 2));
    Mat pool(20000, 2);
    for (int i = 0; i < pool.rows(); ++i) pool.row(i) = g.sample(rng).transpose();
    McOracleConfig cfg;
    cfg.n_particles = 20000;
    McScoreOracle oracle(pool, cfg);
    const GaussianScoreOracle exact(g);
    OracleCtx ctx;
    const Vec x = rng.normal_vec(2);
    const ScoreJet mc = oracle.jet(1.0, x, ctx);
    const ScoreJet ex = exact.jet(1.0, x, ctx);
    CHECK((mc.score - ex.score).norm() < 0.12);
    CHECK((mc.hessian - ex.hessian).norm() < 0.25);
    CHECK((mc.hessian - mc.hessian.transpose()).norm() == 0.0);
  }

  SUBCASE("query times below t_min are clamped") {
    Mat pool(2000, 1);
    for (int i = 0; i < 2000; ++i) pool(i, 0) = rng.normal();
    McOracleConfig cfg;
    cfg.n_particles = 2000;
    cfg.t_min = 1e-3;
    McScoreOracle oracle(pool, cfg);
    OracleCtx ctx;
    const Vec x = Vec::Constant(1, 0.2);
    CHECK(oracle.score(1e-9, x, ctx) == oracle.score(1e-3, x, ctx));
  }

  SUBCASE("effective-sample-size failure is signalled") {
    Mat pool(100, 1);
    for (int i = 0; i < 100; ++i) pool(i, 0) = 10.0 * i;
    McOracleConfig cfg;
    cfg.n_particles = 100;
    McScoreOracle oracle(pool, cfg);
    OracleCtx ctx;
    CHECK_THROWS_AS(oracle.score(1e-3, Vec::Constant(1, 355.0), ctx),
                    McOracleError);
  }

  SUBCASE("pool smaller than n_particles is rejected") {
    Mat pool(50, 1);
    pool.setZero();
    McOracleConfig cfg;
    cfg.n_particles = 100;
    CHECK_THROWS_AS(McScoreOracle(pool, cfg), std::invalid_argument);
  }

  SUBCASE("resample_each_call keys draws off the call counter") {
    Mat pool(5000, 1);
    for (int i = 0; i < 5000; ++i) pool(i, 0) = rng.normal();
    McOracleConfig cfg;
    cfg.n_particles = 500;
    cfg.resample_each_call = true;
    cfg.seed = SeedSpec{77, 0};
    McScoreOracle oracle(pool, cfg);
    const Vec x = Vec::Constant(1, 0.4);
    OracleCtx c0{SeedSpec{0, 3}, 10};
    OracleCtx c1{SeedSpec{0, 3}, 10};
    OracleCtx c2{SeedSpec{0, 3}, 11};
    CHECK(oracle.score(1.0, x, c0) == oracle.score(1.0, x, c1));
    CHECK(oracle.score(1.0, x, c0) != oracle.score(1.0, x, c2));
  }
}

TEST_CASE("linearization terms") {
  SUBCASE("stationary marginal: L = -I/2 and M = 0") {
    const GaussianScoreOracle oracle(
        GaussianTarget(Vec::Zero(2), Mat::Identity(2, 2)));
    OracleCtx ctx;
    const Vec x = Vec::Ones(2);
    const LinTerms lt = linearization_terms(oracle, 0.8, x, ctx);
    CHECK((lt.L + 0.5 * Mat::Identity(2, 2)).norm() < 1e-13);
    CHECK(lt.M.norm() < 1e-13);
  }

  SUBCASE("isotropic non-stationary Gaussian matches -dt_score") {
    const GaussianTarget g(Vec::Zero(2), 4.0 * Mat::Identity(2, 2));
    const GaussianScoreOracle oracle(g);
    OracleCtx ctx;
    const Vec x = Vec::Constant(2, 0.7);
    const LinTerms lt = linearization_terms(oracle, 1.0, x, ctx);
    const auto der = gaussian_marginal_derivatives(g, 1.0, x);
    CHECK((lt.M + der.dt_score).norm() < 1e-10);
  }

  SUBCASE("holds for the MC mixture marginal via finite differences") {
    // The MC pool defines an empirical p0 whose OU marginals obey the same
    // Fokker-Planck identity, so M must equal
    // (1/2) grad tr(H) - dt(score) for the estimator's own functions.
    RngStream rng(SeedSpec{43, 0});
    Mat pool(400, 2);
    for (int i = 0; i < 400; ++i) {
      pool.row(i) = (0.5 * rng.normal_vec(2)).transpose();
    }
    McOracleConfig cfg;
    cfg.n_particles = 400;
    McScoreOracle oracle(pool, cfg);
    OracleCtx ctx;
    const double t = 0.5;
    const Vec x = Vec::Constant(2, 0.3);
    const LinTerms lt = oracle.lin_terms(t, x, ctx);

    const double dt = 1e-4;
    const Vec dscore =
        (oracle.score(t + dt, x, ctx) - oracle.score(t - dt, x, ctx)) / (2 * dt);
    const double dx = 1e-4;
    Vec grad_trH(2);
    for (int j = 0; j < 2; ++j) {
      Vec e = Vec::Zero(2);
      e[j] = dx;
      grad_trH[j] = (oracle.jet(t, x + e, ctx).hessian.trace() -
                     oracle.jet(t, x - e, ctx).hessian.trace()) /
                    (2 * dx);
    }
    const Vec m_direct = 0.5 * grad_trH - dscore;
    CHECK((lt.M - m_direct).norm() < 1e-4 * std::max(1.0, m_direct.norm()));
  }
}

TEST_CASE("corruption wrapper") {
  RngStream rng(SeedSpec{44, 0});
  Mat sigma(2, 2);
  sigma << 1.2, 0.1, 0.1, 0.8;
  auto inner = std::make_shared<GaussianScoreOracle>(
      GaussianTarget(rng.normal_vec(2), sigma));
  OracleCtx ctx;
  const double t = 1.1;
  const Vec x = rng.normal_vec(2);

  SUBCASE("error radii are attained exactly") {
    const auto corrupted = corrupt_oracle(inner, CorruptionSpec{0.05, 0.1, 0.15},
                                          SeedSpec{45, 0});
    const LinTerms clean = inner->lin_terms(t, x, ctx);
    const LinTerms dirty = corrupted->lin_terms(t, x, ctx);
    CHECK((dirty.score - clean.score).norm() == doctest::Approx(0.05).epsilon(1e-12));
    CHECK((dirty.L - clean.L).norm() == doctest::Approx(0.1).epsilon(1e-12));
    CHECK((dirty.M - clean.M).norm() == doctest::Approx(0.15).epsilon(1e-12));
    // the L perturbation stays symmetric
    CHECK((dirty.L - dirty.L.transpose()).norm() < 1e-15);
  }

  SUBCASE("zero radii change nothing, bit for bit") {
    const auto noop = corrupt_oracle(inner, CorruptionSpec{}, SeedSpec{46, 0});
    const Vec a = inner->score(t, x, ctx);
    const Vec b = noop->score(t, x, ctx);
    CHECK(a == b);
  }

  SUBCASE("negative radii are rejected") {
    CHECK_THROWS_AS(corrupt_oracle(inner, CorruptionSpec{-0.1, 0, 0},
                                   SeedSpec{47, 0}),
                    std::invalid_argument);
  }
}

TEST_CASE("score-norm diagnostic") {
  const GaussianTarget stat(Vec::Zero(2), Mat::Identity(2, 2));
  const GaussianScoreOracle oracle(stat);
  RngStream rng(SeedSpec{48, 0});
  Mat samples(5000, 2);
  for (int i = 0; i < samples.rows(); ++i) {
    samples.row(i) = stat.sample(rng).transpose();
  }
  const double diag = score_norm_diagnostic(oracle, 2.0, samples);
  CHECK(diag == doctest::Approx(std::sqrt(2.0)).epsilon(0.03));
  CHECK(diag <= std::sqrt(2.0 * lipschitz_L(2.0, 1.0)) * 1.02);
  CHECK_THROWS_AS(score_norm_diagnostic(oracle, 1.0, Mat(0, 2)),
                  std::invalid_argument);
}
