// Release-gate invariant suite: every module contributes identity, oracle
// and fixed-point checks.  Printed as one line per check; the return value
// counts failures.
#include "diffbench/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <numeric>
#include <vector>

namespace diffbench {

namespace selfcheck {

double w2_1d_bruteforce(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size() || a.empty() || a.size() > 8) {
    throw std::invalid_argument("w2_1d_bruteforce: need equal sizes in 1..8");
  }
  std::vector<int> idx(a.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end());
  double best = std::numeric_limits<double>::infinity();
  do {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      const double diff = a[i] - b[static_cast<size_t>(idx[i])];
      acc += diff * diff;
    }
    best = std::min(best, acc);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return std::sqrt(best / a.size());
}

}  // namespace selfcheck

namespace {

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& msg) {
  if (!cond) throw CheckFailure(msg);
}

void require_close(double got, double want, double tol, const std::string& what) {
  if (!(std::abs(got - want) <= tol)) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s: got %.12g want %.12g (tol %.3g)",
                  what.c_str(), got, want, tol);
    throw CheckFailure(buf);
  }
}

// max over a z-sweep of |phi1(z) z + 1 - e^z| and |phi2(z) z^2 + z + 1 - e^z|,
// scaled by max(1, e^z).  The scale keeps the check meaningful at z << 0,
// where e^z underflows the last retained bit of phi1(z) z + 1.
double phi_identity_max_err(const std::function<double(double)>& p1,
                            const std::function<double(double)>& p2) {
  double worst = 0.0;
  for (double z = -50.0; z <= 50.0; z += 0.37) {
    const double ez = std::exp(z);
    const double scale = std::max(1.0, ez);
    worst = std::max(worst, std::abs(p1(z) * z + 1.0 - ez) / scale);
    worst = std::max(worst, std::abs(p2(z) * z * z + z + 1.0 - ez) / scale);
  }
  return worst;
}

// Independent matrix exponential: Taylor series with scaling and squaring.
Mat expm_scaling_squaring(Mat A) {
  int s = 0;
  double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.5) {
    norm /= 2.0;
    ++s;
  }
  A /= std::pow(2.0, s);
  Mat term = Mat::Identity(A.rows(), A.cols());
  Mat sum = term;
  for (int k = 1; k <= 24; ++k) {
    term = (term * A) / k;
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum;
}

Mat random_symmetric(int d, RngStream& rng) {
  Mat G(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) G(i, j) = rng.normal();
  }
  return 0.5 * (G + G.transpose());
}

Mat random_spd(int d, RngStream& rng) {
  Mat G(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) G(i, j) = rng.normal();
  }
  return G * G.transpose() + 0.3 * Mat::Identity(d, d);
}

Dataset small_dataset(int n, int d, RngStream& rng) {
  Dataset data;
  data.features.resize(n, d);
  data.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.features(i, j) = 2.0 * rng.normal();
    data.labels[i] = rng.uniform() < 0.5 ? 1.0 : -1.0;
  }
  return data;
}

struct Suite {
  std::uint64_t seed;
  int failed = 0;
  int total = 0;

  void run(const std::string& name, const std::function<void()>& fn) {
    ++total;
    try {
      fn();
      std::printf("[ OK ] %s\n", name.c_str());
    } catch (const std::exception& e) {
      ++failed;
      std::printf("[FAIL] %s: %s\n", name.c_str(), e.what());
    }
    std::fflush(stdout);
  }
};

}  // namespace

int self_test(const ExperimentConfig& cfg) {
  Suite suite{cfg.master_seed};

  // ---- core numerics -------------------------------------------------------

  suite.run("phi identities over z in [-50,50]", [&] {
    const double err = phi_identity_max_err(
        [](double z) { return phi_functions(z).phi1; },
        [](double z) { return phi_functions(z).phi2; });
    require(err <= 1e-10, "identity error " + format_double(err));
  });

  suite.run("phi identity check catches a broken phi2", [&] {
    // mutated phi2 that drops the -z term; the checker must flag it
    const double err = phi_identity_max_err(
        [](double z) { return phi_functions(z).phi1; },
        [](double z) {
          return std::abs(z) < 1e-12 ? 0.5 : std::expm1(z) / (z * z);
        });
    require(err > 1e-6, "mutated phi2 slipped through");
  });

  suite.run("phi values at 0, 1, -1 and series handoff", [&] {
    require_close(phi_functions(0.0).phi1, 1.0, 0.0, "phi1(0)");
    require_close(phi_functions(0.0).phi2, 0.5, 0.0, "phi2(0)");
    require_close(phi_functions(1.0).phi1, std::exp(1.0) - 1.0, 1e-14, "phi1(1)");
    require_close(phi_functions(1.0).phi2, std::exp(1.0) - 2.0, 1e-14, "phi2(1)");
    require_close(phi_functions(-1.0).phi1, 1.0 - std::exp(-1.0), 1e-14,
                  "phi1(-1)");
    require_close(phi_functions(-1.0).phi2, std::exp(-1.0), 1e-14, "phi2(-1)");
    for (const double z : {9.9e-5, 1.01e-4, -9.9e-5, -1.01e-4}) {
      require_close(phi_functions(z).phi1, std::expm1(z) / z, 1e-13,
                    "phi1 series handoff");
    }
  });

  suite.run("sym_matrix_function matches scaling-and-squaring expm", [&] {
    RngStream rng(SeedSpec{suite.seed, 101});
    for (int rep = 0; rep < 10; ++rep) {
      const Mat A = random_symmetric(5, rng);
      const Mat got = sym_matrix_function(A, [](double x) { return std::exp(x); });
      const Mat want = expm_scaling_squaring(A);
      require((got - want).norm() <= 1e-8 * (1.0 + want.norm()),
              "expm mismatch at rep " + std::to_string(rep));
    }
  });

  suite.run("sym_matrix_function examples and symmetry guard", [&] {
    const Mat Z = Mat::Zero(3, 3);
    require((sym_matrix_function(Z, [](double x) { return std::exp(x); }) -
             Mat::Identity(3, 3)).norm() < 1e-14, "exp(0) != I");
    Mat D = Mat::Zero(2, 2);
    D(0, 0) = 1.0;
    D(1, 1) = -1.0;
    const Mat E = sym_matrix_function(D, [](double x) { return std::exp(x); });
    require_close(E(0, 0), std::exp(1.0), 1e-12, "exp diag");
    require_close(E(1, 1), std::exp(-1.0), 1e-12, "exp diag");
    const Mat P = sym_matrix_function(
        -0.5 * Mat::Identity(2, 2),
        [](double z) { return phi_functions(z).phi1; });
    require_close(P(0, 0), 0.7869386805747332, 1e-9, "phi1(-1/2) matrix");
    Mat bad(2, 2);
    bad << 0.0, 1.0, 0.0, 0.0;
    bool threw = false;
    try {
      sym_matrix_function(bad, [](double x) { return x; });
    } catch (const std::invalid_argument&) {
      threw = true;
    }
    require(threw, "non-symmetric input accepted");
  });

  suite.run("rng streams reproducible and disjoint", [&] {
    RngStream a(SeedSpec{suite.seed, 7});
    RngStream b(SeedSpec{suite.seed, 7});
    RngStream c(SeedSpec{suite.seed, 8});
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 1000; ++i) {
      const double va = a.normal(), vb = b.normal(), vc = c.normal();
      all_equal = all_equal && (va == vb);
      any_diff = any_diff || (va != vc);
    }
    require(all_equal, "same SeedSpec diverged");
    require(any_diff, "distinct stream_ids coincide");
  });

  suite.run("gaussian sampling with covariance diag(4,1)", [&] {
    RngStream rng(SeedSpec{suite.seed, 102});
    Mat C = Mat::Zero(2, 2);
    C(0, 0) = 4.0;
    C(1, 1) = 1.0;
    const SymEig eig = sym_eigendecompose(C);
    const int n = 100000;
    double s0 = 0, s1 = 0, q0 = 0, q1 = 0;
    for (int i = 0; i < n; ++i) {
      const Vec x = sample_gaussian_from_eig(eig, rng);
      s0 += x[0]; s1 += x[1];
      q0 += x[0] * x[0]; q1 += x[1] * x[1];
    }
    const double v0 = q0 / n - (s0 / n) * (s0 / n);
    const double v1 = q1 / n - (s1 / n) * (s1 / n);
    require(v0 > 3.8 && v0 < 4.2, "var0 " + format_double(v0));
    require(v1 > 0.95 && v1 < 1.05, "var1 " + format_double(v1));
    const Vec z = sample_gaussian_with_cov(Mat::Zero(2, 2), rng);
    require(z.norm() == 0.0, "zero covariance drew nonzero");
  });

  suite.run("time grid rounding and adjustment", [&] {
    require(build_time_grid(10.0, 0.1).N == 100, "N(10,0.1)");
    require(build_time_grid(1.0, 1.0).N == 1, "N(1,1)");
    double from = 0.0;
    const TimeGrid g = build_time_grid(10.0, 0.3, &from);
    require(g.N == 33, "N(10,0.3)");
    require_close(g.T, 9.9, 1e-12, "adjusted T");
    require_close(from, 10.0, 0.0, "reported original T");
    bool threw = false;
    try {
      build_time_grid(1.0, 2.0);
    } catch (const std::invalid_argument&) {
      threw = true;
    }
    require(threw, "h > T accepted");
  });

  // ---- targets --------------------------------------------------------------

  suite.run("logistic potential and gradient at zero", [&] {
    RngStream rng(SeedSpec{suite.seed, 103});
    const Dataset data = small_dataset(20, 2, rng);
    LogisticPosterior post(data, 10.0);
    const Vec zero = Vec::Zero(2);
    require_close(post.potential(zero), std::log(2.0), 1e-12, "f(0)");
    Vec expect = Vec::Zero(2);
    for (int i = 0; i < data.n_data(); ++i) {
      expect += data.labels[i] * data.features.row(i).transpose();
    }
    expect /= 2.0 * data.n_data();
    require((post.grad_log(zero) - expect).norm() < 1e-12, "grad at 0");
  });

  suite.run("logistic derivatives match finite differences", [&] {
    RngStream rng(SeedSpec{suite.seed, 104});
    const Dataset data = small_dataset(5, 2, rng);
    LogisticPosterior post(data, 3.0);
    const Vec theta = rng.normal_vec(2);
    const auto der = logistic_derivatives(post, theta);
    const double fd_step = 1e-5;
    for (int j = 0; j < 2; ++j) {
      Vec e = Vec::Zero(2);
      e[j] = fd_step;
      const double fd =
          (post.potential(theta + e) - post.potential(theta - e)) / (2 * fd_step);
      require_close(der.grad_logp0[j], -fd,
                    1e-5 * std::max(1.0, std::abs(fd)), "grad fd");
      const Vec hcol =
          (post.grad_log(theta + e) - post.grad_log(theta - e)) / (2 * fd_step);
      require((der.hess_logp0.col(j) - hcol).norm() <
                  1e-5 * std::max(1.0, hcol.norm()),
              "hess fd col " + std::to_string(j));
    }
  });

  suite.run("logistic regularity constants", [&] {
    Dataset one;
    one.features.resize(1, 2);
    one.features << 3.0, 4.0;
    one.labels.resize(1);
    one.labels << 1.0;
    const auto rp = logistic_regularity(LogisticPosterior(one, 10.0));
    require_close(rp.m0, 10.0, 0.0, "m0");
    require_close(rp.L0, 35.0, 1e-10, "L0 = 10 + ||x||^2");
    Dataset zeros;
    zeros.features = Mat::Zero(4, 2);
    zeros.labels = Eigen::VectorXd::Ones(4);
    const auto rz = logistic_regularity(LogisticPosterior(zeros, 10.0));
    require_close(rz.L0, 10.0, 1e-12, "zero Gram");
  });

  suite.run("logistic Hessian sandwich -L0 <= H <= -lambda", [&] {
    RngStream rng(SeedSpec{suite.seed, 105});
    const Dataset data = small_dataset(30, 2, rng);
    LogisticPosterior post(data, 5.0);
    for (int rep = 0; rep < 20; ++rep) {
      const Vec theta = 3.0 * rng.normal_vec(2);
      const SymEig eig = sym_eigendecompose(post.hess_log(theta));
      require(eig.eigenvalues.maxCoeff() <= -post.m0() + 1e-9,
              "upper bound violated");
      require(eig.eigenvalues.minCoeff() >= -post.L0() - 1e-9,
              "lower bound violated");
    }
  });

  suite.run("gaussian target exposes the same derivative interface", [&] {
    RngStream rng(SeedSpec{suite.seed, 106});
    const GaussianTarget g(Vec::Ones(2), random_spd(2, rng));
    const Vec x = rng.normal_vec(2);
    const Vec expect = -(g.precision() * (x - g.mu()));
    require((g.grad_log(x) - expect).norm() < 1e-12, "score formula");
    const double fd_step = 1e-5;
    for (int j = 0; j < 2; ++j) {
      Vec e = Vec::Zero(2);
      e[j] = fd_step;
      const double fd =
          (g.log_density(x + e) - g.log_density(x - e)) / (2 * fd_step);
      require_close(g.grad_log(x)[j], fd, 1e-6, "gaussian grad fd");
    }
  });

  suite.run("dataset generation: feature scale, fair labels, determinism", [&] {
    const Vec theta_star = Vec::Zero(2);
    const Dataset a =
        generate_dataset(100, 2, 100.0, Vec::Ones(2) / std::sqrt(2.0),
                         SeedSpec{suite.seed, 107});
    for (int j = 0; j < 2; ++j) {
      const double mean = a.features.col(j).mean();
      const double var =
          (a.features.col(j).array() - mean).square().sum() / (100 - 1);
      require(var > 70.0 && var < 130.0, "feature variance " + format_double(var));
    }
    const Dataset fair =
        generate_dataset(10000, 2, 1.0, theta_star, SeedSpec{suite.seed, 108});
    const double label_mean = fair.labels.mean();
    require(std::abs(label_mean) < 0.05, "label mean " + format_double(label_mean));
    const Dataset b =
        generate_dataset(100, 2, 100.0, Vec::Ones(2) / std::sqrt(2.0),
                         SeedSpec{suite.seed, 107});
    require(a.features == b.features && a.labels == b.labels,
            "same seed produced different datasets");
  });

  suite.run("MALA on a Gaussian target recovers the mean", [&] {
    const GaussianTarget g(Vec::Zero(2), Mat::Identity(2, 2));
    MalaConfig mc;
    mc.step = 0.5;
    mc.burn_in = 2000;
    mc.thinning = 5;
    mc.n_samples = 4000;
    const Mat samples = mala_reference_sampler(g, mc, SeedSpec{suite.seed, 109});
    require(samples.rows() == 4000, "sample count");
    for (int j = 0; j < 2; ++j) {
      require(std::abs(samples.col(j).mean()) < 4.0 / std::sqrt(4000.0),
              "mean out of CLT band");
    }
  });

  suite.run("MALA concentration at lambda = 100", [&] {
    RngStream rng(SeedSpec{suite.seed, 110});
    Dataset data;
    data.features.resize(50, 2);
    for (int i = 0; i < 50; ++i) {
      data.features(i, 0) = 10.0 * rng.normal();
      data.features(i, 1) = 10.0 * rng.normal();
    }
    data.labels.resize(50);
    for (int i = 0; i < 50; ++i) data.labels[i] = rng.uniform() < 0.5 ? 1 : -1;
    LogisticPosterior post(data, 100.0);
    MalaConfig mc;
    mc.step = 0.005;
    mc.burn_in = 2000;
    mc.thinning = 2;
    mc.n_samples = 5000;
    const Mat samples = mala_reference_sampler(post, mc, SeedSpec{suite.seed, 111});
    const double second_moment = samples.rowwise().squaredNorm().mean();
    require(second_moment <= 3.0 * 2.0 / 100.0,
            "second moment " + format_double(second_moment));
  });

  suite.run("MALA chain length contract", [&] {
    const GaussianTarget g(Vec::Zero(1), Mat::Identity(1, 1));
    MalaConfig mc;
    mc.step = 0.5;
    mc.burn_in = 0;
    mc.thinning = 1;
    mc.n_samples = 17;
    require(mala_reference_sampler(g, mc, SeedSpec{suite.seed, 112}).rows() == 17,
            "thinning=1/burn_in=0 length");
  });

  // ---- marginal oracles ------------------------------------------------------

  suite.run("OU marginal pushforward", [&] {
    const GaussianTarget stat(Vec::Zero(2), Mat::Identity(2, 2));
    const GaussianTarget at1 = ou_marginal_gaussian(stat, 1.0);
    require((at1.mu().norm() == 0.0) &&
                (at1.sigma() - Mat::Identity(2, 2)).norm() < 1e-14,
            "stationary law moved");
    const GaussianTarget shifted(3.0 * Vec::Ones(2), Mat::Identity(2, 2));
    const GaussianTarget at_ln2 = ou_marginal_gaussian(shifted, std::log(2.0));
    require((at_ln2.mu() - shifted.mu() / std::sqrt(2.0)).norm() < 1e-12,
            "mean decay at t=ln2");
    const GaussianTarget far = ou_marginal_gaussian(
        GaussianTarget(Vec::Ones(2), 5.0 * Mat::Identity(2, 2)), 60.0);
    require(far.mu().norm() < 1e-10 &&
                (far.sigma() - Mat::Identity(2, 2)).norm() < 1e-10,
            "mixing limit");
  });

  suite.run("gaussian dt_score matches finite differences in t", [&] {
    RngStream rng(SeedSpec{suite.seed, 113});
    const GaussianTarget g(rng.normal_vec(2), random_spd(2, rng));
    for (int rep = 0; rep < 5; ++rep) {
      const double t = 0.2 + 2.0 * rng.uniform();
      const Vec x = 2.0 * rng.normal_vec(2);
      const auto der = gaussian_marginal_derivatives(g, t, x);
      const double dt = 1e-5;
      const Vec fd = (gaussian_marginal_derivatives(g, t + dt, x).score -
                      gaussian_marginal_derivatives(g, t - dt, x).score) /
                     (2 * dt);
      require((der.dt_score - fd).norm() < 1e-6 * std::max(1.0, fd.norm()),
              "dt_score fd mismatch");
    }
  });

  suite.run("MC oracle: single-location pool is exact", [&] {
    RngStream rng(SeedSpec{suite.seed, 114});
    const Vec theta0 = rng.normal_vec(2);
    Mat pool(100, 2);
    pool.rowwise() = theta0.transpose();
    McOracleConfig mc;
    mc.n_particles = 100;
    McScoreOracle oracle(pool, mc);
    OracleCtx ctx;
    const double t = 0.7;
    const Vec x = rng.normal_vec(2);
    const double a = std::exp(-0.5 * t), v = -std::expm1(-t);
    const Vec expect = -(x - a * theta0) / v;
    require((oracle.score(t, x, ctx) - expect).norm() < 1e-12,
            "point-mass score");
  });

  suite.run("MC oracle tracks the analytic Gaussian score (1e5 particles)", [&] {
    RngStream rng(SeedSpec{suite.seed, 115});
    const GaussianTarget g(Vec::Zero(2), Mat::Identity(2, 2));
    Mat pool(100000, 2);
    for (int i = 0; i < pool.rows(); ++i) {
      pool.row(i) = g.sample(rng).transpose();
    }
    McOracleConfig mc;
    mc.n_particles = 100000;
    McScoreOracle oracle(pool, mc);
    const GaussianScoreOracle exact(g);
    OracleCtx ctx;
    for (int rep = 0; rep < 3; ++rep) {
      const Vec x = rng.normal_vec(2);
      const Vec s_mc = oracle.score(1.0, x, ctx);
      const Vec s_ex = exact.score(1.0, x, ctx);
      require((s_mc - s_ex).norm() <= 0.05,
              "MC score error " + format_double((s_mc - s_ex).norm()));
    }
  });

  suite.run("MC oracle error decays ~ 1/sqrt(n_particles)", [&] {
    RngStream rng(SeedSpec{suite.seed, 116});
    const GaussianTarget g(Vec::Zero(2), Mat::Identity(2, 2));
    Mat pool(100000, 2);
    for (int i = 0; i < pool.rows(); ++i) {
      pool.row(i) = g.sample(rng).transpose();
    }
    const GaussianScoreOracle exact(g);
    std::vector<double> log_n, log_err;
    for (const int n : {1000, 10000, 100000}) {
      McOracleConfig mc;
      mc.n_particles = n;
      McScoreOracle oracle(pool, mc);
      OracleCtx ctx;
      double err = 0.0;
      const int reps = 40;
      for (int rep = 0; rep < reps; ++rep) {
        const Vec x = rng.normal_vec(2);
        err += (oracle.score(1.0, x, ctx) - exact.score(1.0, x, ctx)).norm();
      }
      log_n.push_back(std::log(double(n)));
      log_err.push_back(std::log(err / reps));
    }
    const LinearFit fit = linear_fit(log_n, log_err);
    require(fit.slope > -0.7 && fit.slope < -0.3,
            "slope " + format_double(fit.slope));
  });

  suite.run("MC oracle matches explicit long-double normalization", [&] {
    // Exercises the log-sum-exp path where raw exponents are ~ +-1e3.
    RngStream rng(SeedSpec{suite.seed, 117});
    Mat pool(200, 1);
    for (int i = 0; i < 200; ++i) pool(i, 0) = 0.05 * rng.normal();
    McOracleConfig mc;
    mc.n_particles = 200;
    McScoreOracle oracle(pool, mc);
    OracleCtx ctx;
    const double t = 0.02;
    const Vec x = Vec::Constant(1, 0.9);
    const double a = std::exp(-0.5 * t), v = -std::expm1(-t);
    long double num = 0.0L, den = 0.0L;
    // direct evaluation without subtracting the max log-weight
    for (int i = 0; i < 200; ++i) {
      const long double r = x[0] - a * pool(i, 0);
      const long double w = std::exp(-double(r * r) / (2 * v));
      num += w * pool(i, 0);
      den += w;
    }
    const double theta_bar = double(num / den);
    const double expect = -(x[0] - a * theta_bar) / v;
    require_close(oracle.score(t, x, ctx)[0], expect, 1e-9 * std::abs(expect),
                  "self-normalized score");
  });

  suite.run("MC oracle signals unusable effective sample size", [&] {
    RngStream rng(SeedSpec{suite.seed, 118});
    Mat pool(100, 1);
    for (int i = 0; i < 100; ++i) pool(i, 0) = 10.0 * i;
    McOracleConfig mc;
    mc.n_particles = 100;
    mc.t_min = 1e-3;
    McScoreOracle oracle(pool, mc);
    OracleCtx ctx;
    bool threw = false;
    try {
      oracle.score(1e-3, Vec::Constant(1, 250.0), ctx);
    } catch (const McOracleError&) {
      threw = true;
    }
    require(threw, "ESS < 10 not signalled");
  });

  suite.run("linearization at the stationary marginal: L=-I/2, M=0", [&] {
    const GaussianScoreOracle oracle(
        GaussianTarget(Vec::Zero(2), Mat::Identity(2, 2)));
    OracleCtx ctx;
    RngStream rng(SeedSpec{suite.seed, 119});
    const Vec x = rng.normal_vec(2);
    const LinTerms lt = linearization_terms(oracle, 1.3, x, ctx);
    require((lt.L + 0.5 * Mat::Identity(2, 2)).norm() < 1e-12, "L != -I/2");
    require(lt.M.norm() < 1e-12, "M != 0");
  });

  suite.run("M-term cancellation identity vs analytic Gaussian", [&] {
    RngStream rng(SeedSpec{suite.seed, 120});
    for (int rep = 0; rep < 100; ++rep) {
      const GaussianTarget g(rng.normal_vec(2), random_spd(2, rng));
      const GaussianScoreOracle oracle(g);
      const double t = 0.1 + 3.0 * rng.uniform();
      const Vec x = 2.0 * rng.normal_vec(2);
      OracleCtx ctx;
      const LinTerms lt = linearization_terms(oracle, t, x, ctx);
      // Gaussian marginals have vanishing third derivatives, so
      // M = (1/2) grad tr(H) - dt_score = -dt_score.
      const auto der = gaussian_marginal_derivatives(g, t, x);
      require((lt.M + der.dt_score).norm() <= 1e-8,
              "M identity error " + format_double((lt.M + der.dt_score).norm()));
    }
  });

  suite.run("corruption radii attained exactly; zero spec is a no-op", [&] {
    RngStream rng(SeedSpec{suite.seed, 121});
    auto inner = std::make_shared<GaussianScoreOracle>(
        GaussianTarget(rng.normal_vec(2), random_spd(2, rng)));
    const auto corrupted =
        corrupt_oracle(inner, CorruptionSpec{0.1, 0.2, 0.3},
                       SeedSpec{suite.seed, 122});
    OracleCtx ctx;
    const double t = 0.9;
    const Vec x = rng.normal_vec(2);
    const LinTerms clean = inner->lin_terms(t, x, ctx);
    const LinTerms dirty = corrupted->lin_terms(t, x, ctx);
    require_close((dirty.score - clean.score).norm(), 0.1, 1e-12, "eps_sc");
    require_close((dirty.L - clean.L).norm(), 0.2, 1e-12, "eps_L");
    require_close((dirty.M - clean.M).norm(), 0.3, 1e-12, "eps_M");
    const auto noop = corrupt_oracle(inner, CorruptionSpec{}, SeedSpec{1, 2});
    const Vec s0 = inner->score(t, x, ctx);
    const Vec s1 = noop->score(t, x, ctx);
    require(std::memcmp(s0.data(), s1.data(), sizeof(double) * 2) == 0,
            "zero corruption changed bits");
  });

  suite.run("score-norm diagnostic respects sqrt(d L(t))", [&] {
    RngStream rng(SeedSpec{suite.seed, 123});
    const GaussianTarget stat(Vec::Zero(2), Mat::Identity(2, 2));
    const GaussianScoreOracle oracle(stat);
    Mat samples(10000, 2);
    for (int i = 0; i < samples.rows(); ++i) {
      samples.row(i) = stat.sample(rng).transpose();
    }
    const double diag = score_norm_diagnostic(oracle, 1.0, samples);
    require_close(diag, std::sqrt(2.0), 0.05, "stationary norm != sqrt(d)");
    require(diag <= std::sqrt(2.0 * lipschitz_L(1.0, stat.L0())) * 1.01,
            "lemma bound violated");
    bool threw = false;
    try {
      score_norm_diagnostic(oracle, 1.0, Mat(0, 2));
    } catch (const std::invalid_argument&) {
      threw = true;
    }
    require(threw, "empty sample accepted");
  });

  // ---- samplers ---------------------------------------------------------------

  suite.run("REI coupling coefficient rho", [&] {
    for (const double h : {0.025, 0.1, 0.5, 1.0, 3.0, 5.0}) {
      require_close(rei_rho(h, 1.0), 1.0, 1e-12, "rho(U=1)");
      for (double u = 1e-8; u <= 1.0; u = u * 3.7 + 0.013) {
        const double r = rei_rho(h, u);
        require(r >= 0.0 && r <= 1.0 + 1e-12,
                "rho outside [0,1] at h=" + format_double(h) +
                    " u=" + format_double(u));
      }
    }
    require(rei_rho(0.5, 1e-8) < 1e-3, "rho(U->0) not vanishing");
    require_close(rei_rho(1e-9, 0.36), std::sqrt(0.36), 1e-4, "rho(h->0)");
  });

  suite.run("step kernels reproduce their formulas and draw order", [&] {
    RngStream rng(SeedSpec{suite.seed, 124});
    const GaussianScoreOracle oracle(
        GaussianTarget(rng.normal_vec(2), random_spd(2, rng)));
    TimeGrid grid{10.0, 0.2, 50};
    const Vec theta = rng.normal_vec(2);
    const int n = 3;
    const double t = grid.T - n * grid.h, h = grid.h;
    OracleCtx ctx;

    {
      RngStream step_rng(SeedSpec{suite.seed, 200});
      RngStream replay(SeedSpec{suite.seed, 200});
      const Vec got = step_em(theta, n, grid, oracle, ctx, step_rng);
      const Vec xi = replay.normal_vec(2);
      const Vec want = (1.0 + h / 2) * theta + h * oracle.score(t, theta, ctx) +
                       std::sqrt(h) * xi;
      require((got - want).norm() < 1e-13, "EM formula");
    }
    {
      RngStream step_rng(SeedSpec{suite.seed, 201});
      RngStream replay(SeedSpec{suite.seed, 201});
      const Vec got = step_ei(theta, n, grid, oracle, ctx, step_rng);
      const Vec xi = replay.normal_vec(2);
      const Vec want = std::exp(h / 2) * theta +
                       2.0 * std::expm1(h / 2) * oracle.score(t, theta, ctx) +
                       std::sqrt(std::expm1(h)) * xi;
      require((got - want).norm() < 1e-13, "EI formula");
    }
    {
      RngStream step_rng(SeedSpec{suite.seed, 202});
      RngStream replay(SeedSpec{suite.seed, 202});
      const Vec got = step_rem(theta, n, grid, oracle, ctx, step_rng);
      const double u = replay.uniform();
      const Vec xi1 = replay.normal_vec(2);
      const Vec xi2 = replay.normal_vec(2);
      const Vec xi = std::sqrt(u) * xi1 + std::sqrt(1 - u) * xi2;
      const Vec mid = theta +
                      h * u * (0.5 * theta + oracle.score(t, theta, ctx)) +
                      std::sqrt(h * u) * xi1;
      const Vec want = theta +
                       h * (0.5 * mid + oracle.score(t - u * h, mid, ctx)) +
                       std::sqrt(h) * xi;
      require((got - want).norm() < 1e-13, "REM formula / draw order");
    }
    {
      RngStream step_rng(SeedSpec{suite.seed, 203});
      RngStream replay(SeedSpec{suite.seed, 203});
      const Vec got = step_rei(theta, n, grid, oracle, ctx, step_rng);
      const double u = std::max(replay.uniform(), 1e-8);
      const Vec xi1 = replay.normal_vec(2);
      const Vec xi2 = replay.normal_vec(2);
      const double rho = rei_rho(h, u);
      const Vec xi = rho * xi1 + std::sqrt(1 - rho * rho) * xi2;
      const Vec mid = std::exp(u * h / 2) * theta +
                      2.0 * std::expm1(u * h / 2) * oracle.score(t, theta, ctx) +
                      std::sqrt(std::expm1(u * h)) * xi1;
      const Vec want = std::exp(h / 2) * theta +
                       h * std::exp((1 - u) * h / 2) *
                           oracle.score(t - u * h, mid, ctx) +
                       std::sqrt(std::expm1(h)) * xi;
      require((got - want).norm() < 1e-13, "REI formula / draw order");
    }
    {
      RngStream step_rng(SeedSpec{suite.seed, 204});
      RngStream replay(SeedSpec{suite.seed, 204});
      const Vec got = step_so(theta, n, grid, oracle, ctx, step_rng);
      const LinTerms lt = oracle.lin_terms(t, theta, ctx);
      const SymEig eig = sym_eigendecompose(lt.L);
      const Vec qn = replay.normal_vec(2);
      Vec acc = Vec::Zero(2);
      const Vec qd = eig.eigenvectors.transpose() * (0.5 * theta + lt.score);
      const Vec qm = eig.eigenvectors.transpose() * lt.M;
      for (int i = 0; i < 2; ++i) {
        const PhiPair p = phi_functions(eig.eigenvalues[i] * h);
        const double var = h * phi_functions(2 * eig.eigenvalues[i] * h).phi1;
        acc[i] = h * p.phi1 * qd[i] + h * h * p.phi2 * qm[i] +
                 std::sqrt(var) * qn[i];
      }
      const Vec want = theta + eig.eigenvectors * acc;
      require((got - want).norm() < 1e-13, "SO formula");
    }
  });

  suite.run("REM noise coupling moments at fixed U = 0.25", [&] {
    RngStream rng(SeedSpec{suite.seed, 125});
    const double u = 0.25;
    const int n = 100000;
    double cov = 0.0, var = 0.0;
    for (int i = 0; i < n; ++i) {
      const double xi1 = rng.normal();
      const double xi2 = rng.normal();
      const double xi = std::sqrt(u) * xi1 + std::sqrt(1 - u) * xi2;
      cov += xi * xi1;
      var += xi * xi;
    }
    require_close(cov / n, 0.5, 0.01, "Cov(xi, xi') at U=0.25");
    require_close(var / n, 1.0, 0.015, "Var(xi)");
  });

  suite.run("hat p_T initialization variance", [&] {
    RngStream rng(SeedSpec{suite.seed, 126});
    const int n = 100000;
    double q = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec x = init_from_hat_pT(10.0, 1, rng);
      q += x[0] * x[0];
    }
    require_close(q / n, -std::expm1(-10.0), 0.015, "variance at T=10");
    RngStream rng2(SeedSpec{suite.seed, 127});
    q = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec x = init_from_hat_pT(std::log(2.0), 1, rng2);
      q += x[0] * x[0];
    }
    require_close(q / n, 0.5, 0.01, "variance at T=ln2");
  });

  suite.run("SO step is exact for the stationary Gaussian", [&] {
    const GaussianTarget stat(Vec::Zero(2), Mat::Identity(2, 2));
    const TimeGrid grid = build_time_grid(10.0, 0.5);
    const GaussianLaw law = gaussian_pushforward_exact(SchemeKind::SO, stat, grid);
    require(law.mean.norm() < 1e-12, "mean drifted");
    const double want = 1.0 - std::exp(-grid.T) * std::exp(-grid.T);
    require((law.cov - want * Mat::Identity(2, 2)).norm() < 1e-10,
            "variance != 1 - e^{-2T}");
  });

  suite.run("batch runner is deterministic and handles N = 0", [&] {
    const GaussianScoreOracle oracle(
        GaussianTarget(Vec::Zero(2), Mat::Identity(2, 2)));
    const TimeGrid grid = build_time_grid(10.0, 0.5);
    const SeedSpec seed{suite.seed, 128};
    const ChainResult a = run_batch(SchemeKind::REM, oracle, grid, 50, seed, 2);
    const ChainResult b = run_batch(SchemeKind::REM, oracle, grid, 50, seed, 1);
    require(a.finals == b.finals, "threaded != sequential");
    TimeGrid empty{10.0, 0.5, 0};
    const ChainResult c = run_batch(SchemeKind::EM, oracle, empty, 1, seed);
    RngStream rng(SeedSpec{derive_seed(seed), 0});
    require((c.finals.row(0).transpose() - init_from_hat_pT(10.0, 2, rng)).norm() <
                1e-15,
            "N=0 differs from hat p_T draw");
  });

  suite.run("all schemes hold the stationary fixed point (quick)", [&] {
    const GaussianScoreOracle oracle(
        GaussianTarget(Vec::Zero(2), Mat::Identity(2, 2)));
    const TimeGrid grid = build_time_grid(10.0, 0.05);
    for (const SchemeKind scheme :
         {SchemeKind::EM, SchemeKind::EI, SchemeKind::REM, SchemeKind::REI,
          SchemeKind::SO}) {
      const ChainResult chain =
          run_batch(scheme, oracle, grid, 20000, SeedSpec{suite.seed, 129});
      for (int j = 0; j < 2; ++j) {
        const double mean = chain.finals.col(j).mean();
        const double var =
            (chain.finals.col(j).array() - mean).square().mean();
        require(std::abs(mean) < 0.04,
                std::string(scheme_name(scheme)) + " mean " + format_double(mean));
        require(std::abs(var - 1.0) < 0.05,
                std::string(scheme_name(scheme)) + " var " + format_double(var));
      }
    }
  });

  suite.run("exact pushforward matches the sampled law", [&] {
    const GaussianTarget target(2.0 * Vec::Ones(2), 0.25 * Mat::Identity(2, 2));
    const GaussianScoreOracle oracle(target);
    const TimeGrid grid = build_time_grid(10.0, 0.1);
    const GaussianLaw law = gaussian_pushforward_exact(SchemeKind::EM, target, grid);
    const ChainResult chain =
        run_batch(SchemeKind::EM, oracle, grid, 20000, SeedSpec{suite.seed, 130});
    const Vec mean = chain.finals.colwise().mean().transpose();
    require((mean - law.mean).norm() < 0.02, "empirical mean off");
    Mat centered = chain.finals.rowwise() - mean.transpose();
    const Mat cov = centered.transpose() * centered / (chain.finals.rows() - 1);
    require((cov - law.cov).norm() < 0.03, "empirical covariance off");
    bool threw = false;
    try {
      gaussian_pushforward_exact(SchemeKind::REM, target, grid);
    } catch (const std::invalid_argument&) {
      threw = true;
    }
    require(threw, "REM pushforward accepted");
  });

  // ---- metrics ---------------------------------------------------------------

  suite.run("w2_1d equals brute-force assignment for n <= 6", [&] {
    RngStream rng(SeedSpec{suite.seed, 131});
    for (int rep = 0; rep < 60; ++rep) {
      const int n = 1 + static_cast<int>(rng.uniform() * 6.0);
      std::vector<double> a(n), b(n);
      for (int i = 0; i < n; ++i) {
        a[i] = 3.0 * rng.normal();
        b[i] = 3.0 * rng.normal();
      }
      require_close(w2_1d(a, b), selfcheck::w2_1d_bruteforce(a, b), 1e-12,
                    "brute-force mismatch");
    }
  });

  suite.run("w2_1d examples and quantile coupling", [&] {
    require_close(w2_1d({0.0, 2.0}, {1.0, 3.0}), 1.0, 1e-15, "pair example");
    require_close(w2_1d({0.0}, {1.0}), 1.0, 1e-15, "point masses");
    require_close(w2_1d({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}), 0.0, 0.0, "a = b");
    require_close(w2_1d({0.5}, {2.0, 2.0, 2.0}), 1.5, 1e-15, "1 vs 3 copies");
    RngStream rng(SeedSpec{suite.seed, 132});
    std::vector<double> a(7), b(7), a2, b2;
    for (int i = 0; i < 7; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    for (double v : a) { a2.push_back(v); a2.push_back(v); }
    for (double v : b) { b2.push_back(v); b2.push_back(v); }
    require_close(w2_1d(a, b), w2_1d(a2, b2), 1e-12, "replication invariance");
    require_close(w2_1d(a, b2), w2_1d(a, b), 1e-12,
                  "unequal sizes vs duplicated");
  });

  suite.run("w2_gaussian examples and metric axioms", [&] {
    const GaussianLaw n01{Vec::Zero(1), Mat::Identity(1, 1)};
    const GaussianLaw n31{Vec::Constant(1, 3.0), Mat::Identity(1, 1)};
    const GaussianLaw n04{Vec::Zero(1), 4.0 * Mat::Identity(1, 1)};
    require_close(w2_gaussian(n01, n31), 3.0, 1e-12, "mean shift");
    require_close(w2_gaussian(n01, n04), 1.0, 1e-12, "|2-1|");
    require_close(w2_gaussian(n04, n04), 0.0, 1e-12, "identical");
    RngStream rng(SeedSpec{suite.seed, 133});
    for (int rep = 0; rep < 20; ++rep) {
      const GaussianLaw A{rng.normal_vec(3), random_spd(3, rng)};
      const GaussianLaw B{rng.normal_vec(3), random_spd(3, rng)};
      const GaussianLaw C{rng.normal_vec(3), random_spd(3, rng)};
      require_close(w2_gaussian(A, B), w2_gaussian(B, A), 1e-12, "symmetry");
      require(w2_gaussian(A, C) <=
                  w2_gaussian(A, B) + w2_gaussian(B, C) + 1e-10,
              "triangle inequality");
    }
  });

  suite.run("sliced W2: zero, planted shift, forced direction", [&] {
    RngStream rng(SeedSpec{suite.seed, 134});
    Mat a(4000, 2);
    for (int i = 0; i < a.rows(); ++i) a.row(i) = rng.normal_vec(2).transpose();
    const SeedSpec sseed{suite.seed, 135};
    require_close(sliced_w2(a, a, 16, sseed), 0.0, 1e-14, "a = b");
    const double c = 1.7;
    Mat b = a;
    b.col(0).array() += c;
    // per direction u the projected sets differ by the constant c*u1, so the
    // 1-d W2 is exactly |c u1| and the RMS tends to c/sqrt(2)
    require_close(sliced_w2(a, b, 2048, sseed), c / std::sqrt(2.0),
                  0.03 * c, "planted shift");
    // n_proj = 1: reproduce the single drawn direction and compare
    RngStream dir_rng(SeedSpec{derive_seed(sseed, 0x51cedULL), 0});
    Vec u = dir_rng.normal_vec(2);
    u.normalize();
    require_close(sliced_w2(a, b, 1, sseed),
                  w2_1d(Eigen::VectorXd(a * u), Eigen::VectorXd(b * u)), 1e-12,
                  "single projection");
  });

  suite.run("fit_order on synthetic rates", [&] {
    const std::vector<double> hs{0.4, 0.2, 0.1, 0.05, 0.025};
    std::vector<double> lin, sqrt_err, floored;
    for (const double h : hs) {
      lin.push_back(3.0 * h);
      sqrt_err.push_back(0.7 * std::sqrt(h));
      floored.push_back(0.7 * std::sqrt(h) + 2e-4);
    }
    const OrderFit f1 = fit_order(hs, lin, 0.0);
    require_close(f1.slope, 1.0, 1e-12, "linear slope");
    require_close(f1.r2, 1.0, 1e-12, "linear r2");
    require_close(fit_order(hs, sqrt_err, 0.0).slope, 0.5, 1e-12, "sqrt slope");
    require_close(fit_order(hs, floored, 2e-4).slope, 0.5, 1e-6,
                  "floored sqrt slope");
  });

  suite.run("regularity functions L(t), m(t)", [&] {
    require_close(lipschitz_L(std::log(2.0), 1.0), 2.0, 1e-12, "L(ln2, 1)");
    require_close(lipschitz_L(50.0, 7.0), 1.0, 1e-12, "L(t->inf)");
    require_close(lipschitz_L(0.01, 3.0), std::exp(0.01) * 3.0, 1e-12,
                  "small-t branch");
    require_close(convexity_m(3.3, 1.0), 1.0, 1e-15, "m0=1 fixed point");
    require_close(convexity_m(60.0, 2.0), 1.0, 1e-12, "m(t->inf)");
    require_close(convexity_m(0.0, 0.5), 0.5, 1e-15, "m(0)");
    for (double t = 0.01; t < 12.0; t += 0.07) {
      require(lipschitz_L(t, 4.0) <= 5.0 + 1e-12, "L(t) <= L0+1");
      require(convexity_m(t, 0.7) >= 0.7 - 1e-12, "m(t) >= min(1,m0)");
      require(convexity_m(t, 2.5) >= 1.0 - 1e-12, "m(t) >= 1");
    }
  });

  suite.run("theorem bound values, rejection and monotonicity", [&] {
    RegularityConstants rc;
    rc.m0 = 1.0;
    rc.L0 = 1.0;
    const BoundReport em =
        theorem_bound(SchemeKind::EM, rc, 2, 0.1, 10.0, 0.0, 0.0, 0.0, 1.0);
    require_close(em.C1, 5.0, 1e-12, "C1(EM)");
    require_close(em.C2, 2.0, 1e-12, "C2(EM)");
    const BoundReport ei =
        theorem_bound(SchemeKind::EI, rc, 2, 0.1, 10.0, 0.0, 0.0, 0.0, 1.0);
    require_close(ei.C1, 4.0, 1e-12, "C1(EI)");
    bool threw = false;
    try {
      RegularityConstants bad;
      bad.m0 = 0.4;
      bad.L0 = 1.0;
      theorem_bound(SchemeKind::EM, bad, 2, 0.1, 10.0, 0, 0, 0, 1.0);
    } catch (const std::invalid_argument& e) {
      threw = std::string(e.what()).find("m_min") != std::string::npos;
    }
    require(threw, "m0 = 0.4 not rejected with the m_min message");
    const BoundReport tiny =
        theorem_bound(SchemeKind::REI, rc, 2, 1e-12, 1000.0, 0, 0, 0, 1.0);
    require(tiny.total() < 1e-5, "bound does not vanish");
    for (const SchemeKind s : {SchemeKind::EM, SchemeKind::EI, SchemeKind::REM,
                               SchemeKind::REI, SchemeKind::SO}) {
      const BoundReport lo = theorem_bound(s, rc, 2, 0.05, 10, 0.1, 0.1, 0.1, 1);
      const BoundReport hi_h = theorem_bound(s, rc, 2, 0.1, 10, 0.1, 0.1, 0.1, 1);
      const BoundReport hi_e = theorem_bound(s, rc, 2, 0.05, 10, 0.2, 0.1, 0.1, 1);
      const BoundReport hi_d = theorem_bound(s, rc, 5, 0.05, 10, 0.1, 0.1, 0.1, 1);
      require(hi_h.disc_term >= lo.disc_term && hi_h.score_term >= lo.score_term,
              "not monotone in h");
      require(hi_e.score_term >= lo.score_term, "not monotone in eps");
      require(hi_d.disc_term >= lo.disc_term && hi_d.C1 >= lo.C1,
              "not monotone in d");
    }
  });

  suite.run("config parsing: defaults, overrides, rejects", [&] {
    const ExperimentConfig def = parse_config("", CliOverrides{});
    require(def.lambda_list == std::vector<double>({10.0, 50.0, 100.0}),
            "default lambda_list");
    require(def.d == 2 && def.n_data == 100 && def.T == 10.0, "default scalars");
    require(def.h_list == std::vector<double>({0.4, 0.2, 0.1, 0.05, 0.025}),
            "default h_list");
    CliOverrides ov;
    ov.h_list = std::vector<double>{0.5, 0.1};
    const ExperimentConfig with = parse_config("", ov);
    require(with.h_list == std::vector<double>({0.5, 0.1}), "override h_list");
    bool threw = false;
    try {
      CliOverrides bad;
      bad.h_list = std::vector<double>{0.5, 0.0};
      parse_config("", bad);
    } catch (const std::invalid_argument&) {
      threw = true;
    }
    require(threw, "h = 0 accepted");
  });

  suite.run("results CSV round-trips exactly", [&] {
    std::vector<ResultRow> rows(2);
    rows[0] = {"figure1", "EM", 10.0, 0.1, 100, 2000, 42,
               0.12345678901234567, 0.3, std::nullopt, 0.0, 7};
    rows[1] = {"order_study", "SO", 0.0, 0.025, 400, 0, 7,
               std::numeric_limits<double>::quiet_NaN(), 1e-300,
               5.5511151231257827e-17, 0.0, 0};
    const std::string path = "/tmp/diffbench_selftest_roundtrip.csv";
    write_results_csv(rows, path);
    const auto back = read_results_csv(path);
    require(back.size() == 2, "row count");
    for (size_t i = 0; i < 2; ++i) {
      const ResultRow& w = rows[i];
      const ResultRow& r = back[i];
      auto same = [](double x, double y) {
        return (std::isnan(x) && std::isnan(y)) || x == y;
      };
      require(w.experiment == r.experiment && w.scheme == r.scheme &&
                  same(w.lambda, r.lambda) && same(w.h, r.h) && w.N == r.N &&
                  w.n_traj == r.n_traj && w.seed == r.seed &&
                  same(w.w2_dim1, r.w2_dim1) && same(w.w2_sliced, r.w2_sliced) &&
                  w.w2_gauss.has_value() == r.w2_gauss.has_value() &&
                  (!w.w2_gauss || same(*w.w2_gauss, *r.w2_gauss)) &&
                  w.oracle_calls == r.oracle_calls,
              "row " + std::to_string(i) + " not identical");
    }
  });

  std::printf("self-test: %d/%d checks passed\n", suite.total - suite.failed,
              suite.total);
  return suite.failed;
}

}  // namespace diffbench
