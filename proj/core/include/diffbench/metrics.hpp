// Wasserstein-2 estimators, convergence-order fitting, and evaluation of the
// regularity functions and convergence-bound constants.
#pragma once

#include "diffbench/numerics.hpp"
#include "diffbench/samplers.hpp"

#include <vector>

namespace diffbench {

// Lipschitz constant of grad log p_t:
//   L(t) = min{ (1 - e^{-t})^{-1}, e^t L0 },  so L(t) <= L0 + 1.
// t = 0 returns L0.
double lipschitz_L(double t, double L0);

// Strong log-concavity of p_t:
//   m(t) = 1 / (e^{-t}/m0 + (1 - e^{-t})),  so m(t) >= min(1, m0).
double convexity_m(double t, double m0);

struct RegularityConstants {
  double m0 = 1.0;
  double L0 = 1.0;
  double M1 = 0.0;   // time-regularity of the score; no constructive formula
  double M2 = 0.0;   // time-regularity of the Hessian; likewise user-supplied
  double L_F = 0.0;  // Frobenius-Lipschitz constant of the Hessian

  double m_min() const { return std::min(1.0, m0); }
  double L_max() const { return 1.0 + L0; }
};

struct BoundReport {
  SchemeKind scheme = SchemeKind::EM;
  double C1 = 0.0;
  double C2 = 0.0;
  double init_term = 0.0;   // e^{-m_min T} ||X0||_{L2}
  double disc_term = 0.0;   // C1-weighted step-size term
  double score_term = 0.0;  // C2-weighted score-error term
  long long N_for_eps = 0;  // iterations to reach the evaluated total bound

  double total() const { return init_term + disc_term + score_term; }
};

// Evaluates the leading convergence-bound expressions for one scheme:
//   EM :  C1 = (L_max + 1/2)/(m_min - 1/2),      disc = C1 sqrt(d h)
//   EI :  C1 = L_max/(m_min - 1/2),              disc = C1 sqrt(d h)
//   REM:  C1 = (sqrt(d/3) L_max + 1/(2 sqrt 3))/(m_min - 1/2), disc = C1 sqrt(h)
//   REI:  C1 = L_max/(sqrt(3)(m_min - 1/2)),     disc = C1 sqrt(d h)
//   SO :  C1 = e^{(L_max-1/2)h}(sqrt(d) L_max^{3/2} + 3 d L_F/2)/(m_min-1/2),
//         disc = C1 h,  score = C2 (eps_sc + (2/3) h^{1/2} eps_L + h eps_M / 2)
// with C2 = 1/(m_min - 1/2) for EM/EI, 3/(m_min - 1/2) for REM/REI and
// e^{(L_max-1/2)h}/(m_min - 1/2) for SO.  The expressions omit absolute
// constants, so the report is order-level, never a certified dominating
// bound.  Rejects m_min <= 1/2, where all constants above blow up.
//
// N_for_eps inverts the scheme's iteration-complexity rate at the evaluated
// total bound eps = init + disc + score: T grows like log(X0_norm/eps)/m_min
// and h is sized so the discretization term alone meets eps (h ~ eps^2 for
// EM/EI/REM/REI, h ~ eps for SO), then N = ceil(T/h).
BoundReport theorem_bound(SchemeKind scheme, const RegularityConstants& rc,
                          int d, double h, double T, double eps_sc,
                          double eps_L, double eps_M, double X0_norm);

// Exact W2 between two 1-d empirical measures.  Equal sizes: sort and take
// the RMS of paired differences; unequal sizes: exact quantile-function
// coupling integrated over the merged quantile grid.
double w2_1d(std::vector<double> a, std::vector<double> b);
double w2_1d(const Eigen::Ref<const Eigen::VectorXd>& a,
             const Eigen::Ref<const Eigen::VectorXd>& b);

// Closed-form W2 between Gaussians (Bures metric):
//   sqrt(||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sb^{1/2} Sa Sb^{1/2})^{1/2})).
double w2_gaussian(const GaussianLaw& a, const GaussianLaw& b);

// RMS over n_proj seed-deterministic uniform unit directions of the 1-d W2
// of the projected samples (rows of a and b are points).
double sliced_w2(const Mat& a, const Mat& b, int n_proj, const SeedSpec& seed);

struct OrderFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int n_used = 0;
};

// Least squares of log(err - floor) against log h; points with
// err <= 2*floor are excluded, and at least 3 points must survive.
OrderFit fit_order(const std::vector<double>& h_list,
                   const std::vector<double>& err_list, double floor);

// Straight-line least squares y ~ a + b x (used for the score-error sweep).
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LinearFit linear_fit(const std::vector<double>& x,
                     const std::vector<double>& y);

}  // namespace diffbench
