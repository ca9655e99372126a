#include "diffbench/targets.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>

using namespace diffbench;

namespace {

Dataset random_dataset(int n, int d, double scale, std::uint64_t seed) {
  RngStream rng(SeedSpec{seed, 0});
  Dataset data;
  data.features.resize(n, d);
  data.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.features(i, j) = scale * rng.normal();
    data.labels[i] = rng.uniform() < 0.5 ? 1.0 : -1.0;
  }
  return data;
}

}  // namespace

TEST_CASE("logistic potential at the origin") {
  const Dataset data = random_dataset(12, 2, 1.5, 21);
  LogisticPosterior post(data, 7.0);
  CHECK(post.potential(Vec::Zero(2)) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  Vec expect = Vec::Zero(2);
  for (int i = 0; i < data.n_data(); ++i) {
    expect += data.labels[i] * data.features.row(i).transpose();
  }
  expect /= 2.0 * data.n_data();
  CHECK((post.grad_log(Vec::Zero(2)) - expect).norm() < 1e-13);
}

TEST_CASE("logistic derivatives agree with central finite differences") {
  const Dataset data = random_dataset(5, 2, 2.0, 22);
  LogisticPosterior post(data, 3.0);
  RngStream rng(SeedSpec{23, 0});
  const Vec theta = rng.normal_vec(2);
  const auto der = logistic_derivatives(post, theta);
  CHECK(der.f == doctest::Approx(post.potential(theta)));

  const double step = 1e-5;
  for (int j = 0; j < 2; ++j) {
    Vec e = Vec::Zero(2);
    e[j] = step;
    const double fd =
        (post.potential(theta + e) - post.potential(theta - e)) / (2 * step);
    CHECK(der.grad_logp0[j] ==
          doctest::Approx(-fd).epsilon(1e-5));
    const Vec col =
        (post.grad_log(theta + e) - post.grad_log(theta - e)) / (2 * step);
    CHECK((der.hess_logp0.col(j) - col).norm() <=
          1e-5 * std::max(1.0, col.norm()));
  }
}

TEST_CASE("logistic regularity constants") {
  SUBCASE("zero features") {
    Dataset zeros;
    zeros.features = Mat::Zero(5, 3);
    zeros.labels = Eigen::VectorXd::Ones(5);
    const auto r = logistic_regularity(LogisticPosterior(zeros, 10.0));
    CHECK(r.m0 == 10.0);
    CHECK(r.L0 == doctest::Approx(10.0));
  }
  SUBCASE("single observation: L0 = lambda + ||x||^2") {
    Dataset one;
    one.features.resize(1, 2);
    one.features << 3.0, 4.0;
    one.labels.resize(1);
    one.labels << -1.0;
    const auto r = logistic_regularity(LogisticPosterior(one, 10.0));
    CHECK(r.m0 == 10.0);
    CHECK(r.L0 == doctest::Approx(35.0));
  }
  SUBCASE("wide features at lambda = 50") {
    const Dataset data = random_dataset(100, 2, 10.0, 24);
    const auto r = logistic_regularity(LogisticPosterior(data, 50.0));
    CHECK(r.m0 == 50.0);
    CHECK(r.L0 > 50.0);
  }
}

TEST_CASE("logistic Hessian is sandwiched between -L0 I and -lambda I") {
  const Dataset data = random_dataset(40, 2, 3.0, 25);
  LogisticPosterior post(data, 4.0);
  RngStream rng(SeedSpec{26, 0});
  for (int rep = 0; rep < 25; ++rep) {
    const Vec theta = 4.0 * rng.normal_vec(2);
    const SymEig eig = sym_eigendecompose(post.hess_log(theta));
    CHECK(eig.eigenvalues.maxCoeff() <= -post.m0() + 1e-10);
    CHECK(eig.eigenvalues.minCoeff() >= -post.L0() - 1e-10);
  }
}

TEST_CASE("logistic posterior rejects bad construction") {
  Dataset data = random_dataset(4, 2, 1.0, 27);
  CHECK_THROWS_AS(LogisticPosterior(data, 0.0), std::invalid_argument);
  data.labels[2] = 0.5;
  CHECK_THROWS_AS(LogisticPosterior(data, 1.0), std::invalid_argument);
}

TEST_CASE("gaussian target derivatives and sampling") {
  Mat sigma(2, 2);
  sigma << 2.0, 0.3, 0.3, 1.0;
  const GaussianTarget g(Vec::Ones(2), sigma);
  RngStream rng(SeedSpec{28, 0});
  const Vec x = rng.normal_vec(2);
  CHECK((g.grad_log(x) + g.precision() * (x - g.mu())).norm() < 1e-13);
  CHECK((g.hess_log(x) + g.precision()).norm() < 1e-13);
  CHECK(g.m0() == doctest::Approx(1.0 / sym_eigendecompose(sigma).eigenvalues.maxCoeff()));

  double q = 0.0;
  const int n = 40000;
  Vec mean = Vec::Zero(2);
  for (int i = 0; i < n; ++i) {
    const Vec s = g.sample(rng);
    mean += s;
    q += (s - g.mu()).squaredNorm();
  }
  CHECK((mean / n - g.mu()).norm() < 0.03);
  CHECK(q / n == doctest::Approx(sigma.trace()).epsilon(0.03));

  CHECK_THROWS_AS(GaussianTarget(Vec::Zero(2), Mat::Zero(2, 2)),
                  std::invalid_argument);
}

TEST_CASE("dataset generation: scale, planted labels, determinism") {
  const Vec theta_star = Vec::Ones(2) / std::sqrt(2.0);
  const Dataset a = generate_dataset(100, 2, 100.0, theta_star, SeedSpec{30, 1});
  for (int j = 0; j < 2; ++j) {
    const double mean = a.features.col(j).mean();
    const double var =
        (a.features.col(j).array() - mean).square().sum() / 99.0;
    CHECK(var > 70.0);
    CHECK(var < 130.0);
  }
  for (int i = 0; i < a.n_data(); ++i) {
    CHECK((a.labels[i] == 1.0 || a.labels[i] == -1.0));
  }

  const Dataset fair =
      generate_dataset(10000, 2, 1.0, Vec::Zero(2), SeedSpec{30, 2});
  CHECK(std::abs(fair.labels.mean()) < 0.05);

  const Dataset b = generate_dataset(100, 2, 100.0, theta_star, SeedSpec{30, 1});
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
}

TEST_CASE("dataset CSV round trip") {
  const Dataset a = generate_dataset(20, 3, 4.0, Vec::Ones(3), SeedSpec{31, 0});
  const std::string path = "/tmp/diffbench_test_dataset.csv";
  write_dataset_csv(a, path);
  const Dataset b = read_dataset_csv(path);
  CHECK(b.n_data() == a.n_data());
  CHECK(b.dim() == a.dim());
  CHECK((a.features - b.features).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(a.labels == b.labels);
  std::remove(path.c_str());
}

TEST_CASE("MALA: length contract, CLT mean band, concentration") {
  const GaussianTarget g(Vec::Zero(2), Mat::Identity(2, 2));
  MalaConfig cfg;
  cfg.step = 0.5;
  cfg.burn_in = 0;
  cfg.thinning = 1;
  cfg.n_samples = 11;
  CHECK(mala_reference_sampler(g, cfg, SeedSpec{32, 0}).rows() == 11);

  cfg.burn_in = 1500;
  cfg.thinning = 5;
  cfg.n_samples = 3000;
  const Mat samples = mala_reference_sampler(g, cfg, SeedSpec{32, 1});
  for (int j = 0; j < 2; ++j) {
    CHECK(std::abs(samples.col(j).mean()) < 4.0 / std::sqrt(3000.0));
  }
}

namespace {

struct BrokenTarget : TargetDensity {
  int dim() const override { return 1; }
  double log_density(const Vec&) const override {
    return std::numeric_limits<double>::quiet_NaN();
  }
  Vec grad_log(const Vec&) const override { return Vec::Zero(1); }
  Mat hess_log(const Vec&) const override { return Mat::Zero(1, 1); }
  double m0() const override { return 1.0; }
  double L0() const override { return 1.0; }
};

}  // namespace

TEST_CASE("MALA signals non-finite log-density") {
  BrokenTarget target;
  MalaConfig cfg;
  cfg.n_samples = 5;
  CHECK_THROWS_AS(mala_reference_sampler(target, cfg, SeedSpec{33, 0}),
                  std::runtime_error);
}
