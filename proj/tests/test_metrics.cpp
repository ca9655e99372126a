#include "diffbench/harness.hpp"
#include "diffbench/metrics.hpp"

#include <doctest.h>

#include <cmath>

using namespace diffbench;

TEST_CASE("regularity functions") {
  CHECK(lipschitz_L(std::log(2.0), 1.0) == doctest::Approx(2.0));
  CHECK(lipschitz_L(40.0, 9.0) == doctest::Approx(1.0));
  CHECK(lipschitz_L(0.01, 3.0) == doctest::Approx(std::exp(0.01) * 3.0));
  CHECK(lipschitz_L(0.0, 5.0) == 5.0);
  CHECK(convexity_m(0.0, 0.5) == doctest::Approx(0.5));
  CHECK(convexity_m(4.0, 1.0) == doctest::Approx(1.0));
  CHECK(convexity_m(60.0, 2.0) == doctest::Approx(1.0));
  for (double t = 0.02; t < 9.0; t += 0.11) {
    CHECK(lipschitz_L(t, 2.5) <= 3.5 + 1e-12);
    CHECK(convexity_m(t, 0.8) >= 0.8 - 1e-12);
  }
  CHECK_THROWS_AS(lipschitz_L(-0.1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(convexity_m(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("theorem bound constants") {
  RegularityConstants rc;
  rc.m0 = 1.0;
  rc.L0 = 1.0;

  const BoundReport em =
      theorem_bound(SchemeKind::EM, rc, 2, 0.1, 10.0, 0.0, 0.0, 0.0, 1.0);
  CHECK(em.C1 == doctest::Approx(5.0));
  CHECK(em.C2 == doctest::Approx(2.0));
  CHECK(em.disc_term == doctest::Approx(5.0 * std::sqrt(0.2)));
  CHECK(em.init_term == doctest::Approx(std::exp(-10.0)));

  const BoundReport ei =
      theorem_bound(SchemeKind::EI, rc, 2, 0.1, 10.0, 0.0, 0.0, 0.0, 1.0);
  CHECK(ei.C1 == doctest::Approx(4.0));
  CHECK(ei.C1 < em.C1);

  SUBCASE("REM discretization term scales with sqrt(h), d lives in C1") {
    const BoundReport r4 =
        theorem_bound(SchemeKind::REM, rc, 4, 0.09, 10.0, 0.0, 0.0, 0.0, 1.0);
    CHECK(r4.disc_term == doctest::Approx(r4.C1 * 0.3));
    CHECK(r4.C1 ==
          doctest::Approx((std::sqrt(4.0 / 3.0) * 2.0 + 0.5 / std::sqrt(3.0)) /
                          0.5));
  }

  SUBCASE("SO score term mixes the three estimation radii") {
    rc.L_F = 1.0;
    const double h = 0.04;
    const BoundReport so =
        theorem_bound(SchemeKind::SO, rc, 2, h, 10.0, 0.1, 0.2, 0.3, 1.0);
    const double amp = std::exp((2.0 - 0.5) * h);
    CHECK(so.C2 == doctest::Approx(amp / 0.5));
    CHECK(so.score_term ==
          doctest::Approx(so.C2 * (0.1 + (2.0 / 3.0) * std::sqrt(h) * 0.2 +
                                   0.5 * h * 0.3)));
    CHECK(so.disc_term == doctest::Approx(so.C1 * h));
  }

  SUBCASE("vanishing inputs make the bound vanish") {
    const BoundReport tiny =
        theorem_bound(SchemeKind::REI, rc, 2, 1e-14, 2000.0, 0, 0, 0, 1.0);
    CHECK(tiny.total() < 1e-6);
  }

  SUBCASE("m_min <= 1/2 is rejected with the explanatory message") {
    RegularityConstants bad;
    bad.m0 = 0.4;
    bad.L0 = 1.0;
    CHECK_THROWS_WITH_AS(
        theorem_bound(SchemeKind::EM, bad, 2, 0.1, 10.0, 0, 0, 0, 1.0),
        doctest::Contains("m_min"), std::invalid_argument);
  }

  SUBCASE("component monotonicity in h, eps_sc and d") {
    for (const SchemeKind s : {SchemeKind::EM, SchemeKind::EI, SchemeKind::REM,
                               SchemeKind::REI, SchemeKind::SO}) {
      const BoundReport lo = theorem_bound(s, rc, 2, 0.02, 10, 0.1, 0.1, 0.1, 1);
      const BoundReport hi = theorem_bound(s, rc, 3, 0.08, 10, 0.3, 0.2, 0.2, 1);
      CHECK(hi.disc_term >= lo.disc_term);
      CHECK(hi.score_term >= lo.score_term);
      CHECK(hi.C1 >= lo.C1);
      CHECK(hi.C2 >= lo.C2);
    }
  }
}

TEST_CASE("1-d W2") {
  CHECK(w2_1d({0.0, 2.0}, {1.0, 3.0}) == doctest::Approx(1.0));
  CHECK(w2_1d({0.0}, {1.0}) == doctest::Approx(1.0));
  CHECK(w2_1d({5.0, 1.0, 3.0}, {3.0, 5.0, 1.0}) == 0.0);
  CHECK(w2_1d({0.5}, {2.0, 2.0, 2.0}) == doctest::Approx(1.5));
  CHECK_THROWS_AS(w2_1d(std::vector<double>{}, {1.0}), std::invalid_argument);

  SUBCASE("equals exhaustive assignment for n <= 6") {
    RngStream rng(SeedSpec{80, 0});
    for (int rep = 0; rep < 40; ++rep) {
      const int n = 1 + static_cast<int>(rng.uniform() * 6.0);
      std::vector<double> a(n), b(n);
      for (int i = 0; i < n; ++i) {
        a[i] = 2.0 * rng.normal();
        b[i] = 2.0 * rng.normal();
      }
      CHECK(w2_1d(a, b) ==
            doctest::Approx(selfcheck::w2_1d_bruteforce(a, b)).epsilon(1e-12));
    }
  }

  SUBCASE("quantile coupling is replication invariant") {
    RngStream rng(SeedSpec{80, 1});
    std::vector<double> a(9), b(5), a3, b2;
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    for (double v : a) for (int k = 0; k < 3; ++k) a3.push_back(v);
    for (double v : b) for (int k = 0; k < 2; ++k) b2.push_back(v);
    CHECK(w2_1d(a3, b2) == doctest::Approx(w2_1d(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("gaussian W2 (Bures)") {
  const GaussianLaw n01{Vec::Zero(1), Mat::Identity(1, 1)};
  const GaussianLaw n31{Vec::Constant(1, 3.0), Mat::Identity(1, 1)};
  const GaussianLaw n04{Vec::Zero(1), 4.0 * Mat::Identity(1, 1)};
  CHECK(w2_gaussian(n01, n31) == doctest::Approx(3.0));
  CHECK(w2_gaussian(n01, n04) == doctest::Approx(1.0));
  CHECK(w2_gaussian(n31, n31) == doctest::Approx(0.0));

  RngStream rng(SeedSpec{81, 0});
  auto random_law = [&] {
    Mat G(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) G(i, j) = rng.normal();
    return GaussianLaw{rng.normal_vec(3),
                       Mat(G * G.transpose() + 0.2 * Mat::Identity(3, 3))};
  };
  for (int rep = 0; rep < 25; ++rep) {
    const GaussianLaw A = random_law(), B = random_law(), C = random_law();
    CHECK(w2_gaussian(A, B) == doctest::Approx(w2_gaussian(B, A)).epsilon(1e-12));
    CHECK(w2_gaussian(A, C) <= w2_gaussian(A, B) + w2_gaussian(B, C) + 1e-10);
    CHECK(w2_gaussian(A, A) < 1e-6);
  }
}

TEST_CASE("sliced W2") {
  RngStream rng(SeedSpec{82, 0});
  Mat a(3000, 2);
  for (int i = 0; i < a.rows(); ++i) a.row(i) = rng.normal_vec(2).transpose();
  const SeedSpec seed{83, 0};

  CHECK(sliced_w2(a, a, 8, seed) == 0.0);

  Mat b = a;
  b.col(0).array() += 2.0;
  CHECK(sliced_w2(a, b, 1024, seed) ==
        doctest::Approx(2.0 / std::sqrt(2.0)).epsilon(0.05));

  // a single projection reproduces the (documented) first drawn direction
  RngStream dir(SeedSpec{derive_seed(seed, 0x51cedULL), 0});
  Vec u = dir.normal_vec(2);
  u.normalize();
  CHECK(sliced_w2(a, b, 1, seed) ==
        doctest::Approx(w2_1d(Eigen::VectorXd(a * u), Eigen::VectorXd(b * u)))
            .epsilon(1e-12));

  CHECK_THROWS_AS(sliced_w2(a, b, 0, seed), std::invalid_argument);
}

TEST_CASE("order fitting") {
  const std::vector<double> hs{0.4, 0.2, 0.1, 0.05, 0.025};
  std::vector<double> lin, rooted, floored;
  for (const double h : hs) {
    lin.push_back(2.0 * h);
    rooted.push_back(0.5 * std::sqrt(h));
    floored.push_back(0.5 * std::sqrt(h) + 1e-3);
  }
  CHECK(fit_order(hs, lin, 0.0).slope == doctest::Approx(1.0));
  CHECK(fit_order(hs, lin, 0.0).r2 == doctest::Approx(1.0));
  CHECK(fit_order(hs, rooted, 0.0).slope == doctest::Approx(0.5));
  CHECK(fit_order(hs, floored, 1e-3).slope == doctest::Approx(0.5).epsilon(1e-6));

  SUBCASE("points at or below twice the floor are excluded") {
    std::vector<double> errs{0.4, 0.2, 0.1, 0.0019, 0.0015};
    const OrderFit fit = fit_order(hs, errs, 1e-3);
    CHECK(fit.n_used == 3);
  }
  SUBCASE("fewer than three usable points is an error") {
    CHECK_THROWS_AS(fit_order({0.4, 0.2, 0.1}, {1.0, 1e-4, 1e-4}, 1e-3),
                    std::invalid_argument);
  }
}

TEST_CASE("linear fit") {
  const LinearFit f = linear_fit({0.0, 1.0, 2.0, 3.0}, {1.0, 3.0, 5.0, 7.0});
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
  CHECK_THROWS_AS(linear_fit({1.0}, {2.0}), std::invalid_argument);
}
