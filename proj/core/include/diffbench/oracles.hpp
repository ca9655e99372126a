// Evaluators of the forward-marginal score grad log p_t, its Hessian, and the
// local-linearization terms (L, M), along the unit OU flow
// dX = -X/2 dt + dB.  Analytic for Gaussian targets, self-normalized
// Monte Carlo for general targets, plus a wrapper that injects score error of
// exactly prescribed norm.
#pragma once

#include "diffbench/numerics.hpp"
#include "diffbench/targets.hpp"

#include <memory>

namespace diffbench {

// Per-trajectory evaluation context.  `calls` is the trajectory-local oracle
// call counter, incremented by the caller (the step kernels / batch runner)
// once per logical evaluation; oracles may read it but never mutate it.
struct OracleCtx {
  SeedSpec seed;
  std::uint64_t calls = 0;
};

struct ScoreJet {
  Vec score;
  Mat hessian;
};

// Everything the second-order step consumes at one (t, x):
//   L = I/2 + hessian,
//   M = -score/2 - hessian*x/2 - hessian*score,
// where M comes from the Fokker-Planck simplification of the temporal score
// derivative; the third-derivative terms cancel exactly.
struct LinTerms {
  Vec score;
  Mat L;
  Vec M;
};

class ScoreOracle {
 public:
  virtual ~ScoreOracle() = default;
  virtual int dim() const = 0;
  virtual bool has_hessian() const { return false; }
  virtual bool has_m_term() const { return has_hessian(); }

  // grad log p_t(x); t is forward time (step kernels pass T - nh).
  virtual Vec score(double t, const Vec& x, OracleCtx& ctx) const = 0;

  // score + hessian in one evaluation; requires has_hessian().
  virtual ScoreJet jet(double t, const Vec& x, OracleCtx& ctx) const;

  // (score, L, M); the default derives them from jet() via the cancellation
  // identity above.  Requires has_m_term().
  virtual LinTerms lin_terms(double t, const Vec& x, OracleCtx& ctx) const;
};

// Raised when the MC estimator has too few effective particles at (t, x).
struct McOracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- Gaussian analytic path ------------------------------------------------

// Exact OU pushforward of a Gaussian: N(mu, Sigma) at time t becomes
// N(e^{-t/2} mu, e^{-t} Sigma + (1 - e^{-t}) I).
GaussianTarget ou_marginal_gaussian(const GaussianTarget& target, double t);

struct GaussianMarginalDerivatives {
  Vec score;
  Mat hessian;
  Vec dt_score;  // d/dt of grad log p_t at fixed x
};
GaussianMarginalDerivatives gaussian_marginal_derivatives(
    const GaussianTarget& target, double t, const Vec& x);

class GaussianScoreOracle : public ScoreOracle {
 public:
  explicit GaussianScoreOracle(GaussianTarget target);

  int dim() const override { return target_.dim(); }
  bool has_hessian() const override { return true; }
  Vec score(double t, const Vec& x, OracleCtx& ctx) const override;
  ScoreJet jet(double t, const Vec& x, OracleCtx& ctx) const override;
  LinTerms lin_terms(double t, const Vec& x, OracleCtx& ctx) const override;

  const GaussianTarget& target() const { return target_; }
  // Marginal precision at time t (the negated Hessian).
  Mat precision_at(double t) const;

 private:
  GaussianTarget target_;
  SymEig sigma_eig_;   // eigendecomposition of the target covariance
  double iso_var_ = -1.0;  // Sigma = iso_var * I enables the scalar path
};

// --- Monte Carlo path -------------------------------------------------------

struct McOracleConfig {
  int n_particles = 10000;
  SeedSpec seed;
  bool resample_each_call = false;
  // Query times are clamped below to keep the kernel variance 1 - e^{-t}
  // away from zero (midpoint substeps can reach t ~ 0).
  double t_min = 1e-3;
  double min_ess = 10.0;
};

// Self-normalized estimator over a fixed reference particle set
// theta_j ~ p0: weights w_j ~ exp(-||x - e^{-t/2} theta_j||^2 / (2(1-e^{-t})))
// via log-sum-exp, score and Hessian from the weighted kernel moments.
class McScoreOracle : public ScoreOracle {
 public:
  // `particles`: one reference draw from p0 per row.
  McScoreOracle(Mat particles, McOracleConfig cfg);

  int dim() const override { return static_cast<int>(pool_.cols()); }
  bool has_hessian() const override { return true; }
  Vec score(double t, const Vec& x, OracleCtx& ctx) const override;
  ScoreJet jet(double t, const Vec& x, OracleCtx& ctx) const override;

  const McOracleConfig& config() const { return cfg_; }

 private:
  void eval(double t, const Vec& x, const OracleCtx& ctx, bool need_hessian,
            Vec& score_out, Mat* hess_out) const;

  Mat pool_;       // reference particles, one per row
  Vec pool_sqn_;   // squared row norms
  McOracleConfig cfg_;
};

// Convenience wrapper matching the one-shot operation shape.
ScoreJet mc_marginal_derivatives(const Mat& particles, double t, const Vec& x,
                                 const McOracleConfig& cfg);

// --- Corruption -------------------------------------------------------------

// L2 perturbation radii for score, L-term, M-term (Assumption-style error
// with the bound attained exactly).
struct CorruptionSpec {
  double eps_sc = 0.0;
  double eps_L = 0.0;
  double eps_M = 0.0;
};

// Wraps `inner` so that every score evaluation is displaced by exactly
// eps_sc along a fixed uniformly random unit direction drawn once from
// `seed` (analogously eps_L with a unit-Frobenius symmetric matrix and eps_M
// with a unit vector).  A fixed direction realizes the worst case admitted
// by the error assumptions: per-call independent directions would average
// out along the chain and the epsilon terms in the bounds would not be
// observable.
std::shared_ptr<const ScoreOracle> corrupt_oracle(
    std::shared_ptr<const ScoreOracle> inner, const CorruptionSpec& spec,
    const SeedSpec& seed);

// --- Diagnostics ------------------------------------------------------------

// Free-function form of the linearization evaluation.
LinTerms linearization_terms(const ScoreOracle& oracle, double t, const Vec& x,
                             OracleCtx& ctx);

// Empirical L2 norm sqrt(mean ||score(t, x_k)||^2) over samples from p_t,
// to be compared against sqrt(d L(t)).
double score_norm_diagnostic(const ScoreOracle& oracle, double t,
                             const Mat& samples_from_pt);

}  // namespace diffbench
