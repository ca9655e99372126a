#include "diffbench/oracles.hpp"

#include <cmath>

namespace diffbench {

ScoreJet ScoreOracle::jet(double, const Vec&, OracleCtx&) const {
  throw std::logic_error("ScoreOracle: hessian not available for this oracle");
}

LinTerms ScoreOracle::lin_terms(double t, const Vec& x, OracleCtx& ctx) const {
  if (!has_m_term()) {
    throw std::logic_error("ScoreOracle: L/M terms not available");
  }
  ScoreJet j = jet(t, x, ctx);
  LinTerms out;
  out.L = j.hessian;
  out.L.diagonal().array() += 0.5;
  out.M = -0.5 * j.score - 0.5 * (j.hessian * x) - j.hessian * j.score;
  out.score = std::move(j.score);
  return out;
}

GaussianTarget ou_marginal_gaussian(const GaussianTarget& target, double t) {
  if (t < 0.0) throw std::invalid_argument("ou_marginal_gaussian: t < 0");
  const double decay = std::exp(-t);
  const int d = target.dim();
  Mat cov = decay * target.sigma() + (1.0 - decay) * Mat::Identity(d, d);
  return GaussianTarget(std::exp(-0.5 * t) * target.mu(), std::move(cov));
}

GaussianScoreOracle::GaussianScoreOracle(GaussianTarget target)
    : target_(std::move(target)), sigma_eig_(sym_eigendecompose(target_.sigma())) {
  const double lo = sigma_eig_.eigenvalues.minCoeff();
  const double hi = sigma_eig_.eigenvalues.maxCoeff();
  const Mat& sigma = target_.sigma();
  const bool diagonal =
      (sigma - sigma.diagonal().asDiagonal().toDenseMatrix()).norm() == 0.0;
  if (diagonal && hi - lo <= 1e-14 * hi) iso_var_ = 0.5 * (lo + hi);
}

Mat GaussianScoreOracle::precision_at(double t) const {
  const double decay = std::exp(-t);
  if (iso_var_ > 0.0) {
    const double p = 1.0 / (decay * iso_var_ + (1.0 - decay));
    return p * Mat::Identity(dim(), dim());
  }
  Vec inv = (decay * sigma_eig_.eigenvalues.array() + (1.0 - decay)).inverse();
  Mat P = sigma_eig_.eigenvectors * inv.asDiagonal() *
          sigma_eig_.eigenvectors.transpose();
  return 0.5 * (P + P.transpose());
}

Vec GaussianScoreOracle::score(double t, const Vec& x, OracleCtx&) const {
  const double mean_decay = std::exp(-0.5 * t);
  if (iso_var_ > 0.0) {
    const double decay = mean_decay * mean_decay;
    const double p = 1.0 / (decay * iso_var_ + (1.0 - decay));
    if (target_.mu().isZero(0.0)) return (-p) * x;
    return (-p) * (x - mean_decay * target_.mu());
  }
  const Vec mu_t = mean_decay * target_.mu();
  return -(precision_at(t) * (x - mu_t));
}

ScoreJet GaussianScoreOracle::jet(double t, const Vec& x, OracleCtx& ctx) const {
  if (iso_var_ > 0.0) {
    const double decay = std::exp(-t);
    const double p = 1.0 / (decay * iso_var_ + (1.0 - decay));
    return {score(t, x, ctx), (-p) * Mat::Identity(dim(), dim())};
  }
  const Vec mu_t = std::exp(-0.5 * t) * target_.mu();
  Mat P = precision_at(t);
  Vec s = -(P * (x - mu_t));
  return {std::move(s), -P};
}

LinTerms GaussianScoreOracle::lin_terms(double t, const Vec& x,
                                        OracleCtx& ctx) const {
  if (iso_var_ > 0.0) {
    // H = -p I makes all three terms scalar multiples:
    //   L = (1/2 - p) I,  M = (p - 1/2) s + (p/2) x
    const double decay = std::exp(-t);
    const double p = 1.0 / (decay * iso_var_ + (1.0 - decay));
    LinTerms out;
    out.score = score(t, x, ctx);
    out.L = (0.5 - p) * Mat::Identity(dim(), dim());
    out.M = (p - 0.5) * out.score + (0.5 * p) * x;
    return out;
  }
  return ScoreOracle::lin_terms(t, x, ctx);
}

GaussianMarginalDerivatives gaussian_marginal_derivatives(
    const GaussianTarget& target, double t, const Vec& x) {
  const SymEig eig = sym_eigendecompose(target.sigma());
  const double decay = std::exp(-t);
  const Eigen::ArrayXd denom =
      decay * eig.eigenvalues.array() + (1.0 - decay);
  Mat P = eig.eigenvectors * denom.inverse().matrix().asDiagonal() *
          eig.eigenvectors.transpose();
  P = 0.5 * (P + P.transpose());

  const Vec mu_t = std::exp(-0.5 * t) * target.mu();
  const Vec r = x - mu_t;

  // d/dt Sigma_t = e^{-t} (I - Sigma); in the Sigma eigenbasis the precision
  // derivative is -e^{-t}(1 - lambda_i)/denom_i^2.
  const Eigen::ArrayXd dprec =
      -decay * (1.0 - eig.eigenvalues.array()) / (denom * denom);
  Mat Pdot = eig.eigenvectors * dprec.matrix().asDiagonal() *
             eig.eigenvectors.transpose();
  const Vec mu_dot = -0.5 * std::exp(-0.5 * t) * target.mu();

  GaussianMarginalDerivatives out;
  out.score = -(P * r);
  out.hessian = -P;
  out.dt_score = -(Pdot * r) + P * mu_dot;
  return out;
}

McScoreOracle::McScoreOracle(Mat particles, McOracleConfig cfg)
    : pool_(std::move(particles)), cfg_(cfg) {
  if (pool_.rows() < 1 || pool_.cols() < 1) {
    throw std::invalid_argument("McScoreOracle: empty particle set");
  }
  if (cfg_.n_particles < 100) {
    throw std::invalid_argument("McScoreOracle: n_particles must be >= 100");
  }
  if (!cfg_.resample_each_call && pool_.rows() < cfg_.n_particles) {
    throw std::invalid_argument(
        "McScoreOracle: particle pool smaller than n_particles");
  }
  pool_sqn_ = pool_.rowwise().squaredNorm();
}

namespace {

// Scratch shared across calls on one thread; the oracle itself stays
// immutable and concurrently usable.
struct McScratch {
  Eigen::ArrayXd lw;
  Eigen::ArrayXd w;
  Mat resampled;
  Vec resampled_sqn;
};

thread_local McScratch mc_scratch;

}  // namespace

void McScoreOracle::eval(double t, const Vec& x, const OracleCtx& ctx,
                         bool need_hessian, Vec& score_out,
                         Mat* hess_out) const {
  t = std::max(t, cfg_.t_min);
  const double a = std::exp(-0.5 * t);
  const double v = -std::expm1(-t);  // 1 - e^{-t}
  const int d = dim();
  const Eigen::Index n = cfg_.n_particles;
  auto& scratch = mc_scratch;

  const Mat* parts = &pool_;
  const Vec* sqn = &pool_sqn_;
  if (cfg_.resample_each_call) {
    RngStream rng(SeedSpec{derive_seed(cfg_.seed, ctx.seed.stream_id),
                           ctx.calls});
    scratch.resampled.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto idx = static_cast<Eigen::Index>(rng.uniform() * pool_.rows());
      scratch.resampled.row(i) =
          pool_.row(std::min<Eigen::Index>(idx, pool_.rows() - 1));
    }
    scratch.resampled_sqn = scratch.resampled.rowwise().squaredNorm();
    parts = &scratch.resampled;
    sqn = &scratch.resampled_sqn;
  }
  const auto theta = parts->topRows(n);

  auto& lw = scratch.lw;
  auto& w = scratch.w;
  lw.resize(n);
  w.resize(n);

  // log w_j = -(||x||^2 - 2 a <x, theta_j> + a^2 ||theta_j||^2) / (2v),
  // computed as one matrix-vector product plus one fused pass.
  lw.matrix().noalias() = theta * x;
  const double inv2v = 1.0 / (2.0 * v);
  lw = ((2.0 * a * inv2v) * lw - (a * a * inv2v) * sqn->head(n).array()) -
       x.squaredNorm() * inv2v;

  const double m = lw.maxCoeff();
  w = (lw - m).exp();
  const double W = w.sum();
  const double ess = W * W / w.matrix().squaredNorm();
  if (ess < cfg_.min_ess) {
    throw McOracleError("McScoreOracle: effective sample size " +
                        std::to_string(ess) + " < " +
                        std::to_string(cfg_.min_ess) + " at t=" +
                        std::to_string(t));
  }

  score_out.resize(d);
  score_out.noalias() = theta.transpose() * w.matrix();
  score_out /= W;
  const Vec theta_bar = score_out;  // weighted particle mean
  score_out = -(x - a * theta_bar) / v;

  if (!need_hessian) return;

  // E_w[theta theta^T] entry by entry, avoiding an n x d temporary.
  Mat second(d, d);
  for (int p = 0; p < d; ++p) {
    for (int q = p; q < d; ++q) {
      const double s =
          (theta.col(p).array() * theta.col(q).array() * w).sum() / W;
      second(p, q) = s;
      second(q, p) = s;
    }
  }
  // E_w[r r^T]/v^2 - I/v - s s^T with r = x - a theta.
  Mat err = x * x.transpose() - a * x * theta_bar.transpose() -
            a * theta_bar * x.transpose() + (a * a) * second;
  Mat H = err / (v * v) - Mat::Identity(d, d) / v -
          score_out * score_out.transpose();
  *hess_out = 0.5 * (H + H.transpose());
}

Vec McScoreOracle::score(double t, const Vec& x, OracleCtx& ctx) const {
  Vec s;
  eval(t, x, ctx, false, s, nullptr);
  return s;
}

ScoreJet McScoreOracle::jet(double t, const Vec& x, OracleCtx& ctx) const {
  ScoreJet out;
  eval(t, x, ctx, true, out.score, &out.hessian);
  return out;
}

ScoreJet mc_marginal_derivatives(const Mat& particles, double t, const Vec& x,
                                 const McOracleConfig& cfg) {
  McScoreOracle oracle(particles, cfg);
  OracleCtx ctx{cfg.seed, 0};
  return oracle.jet(t, x, ctx);
}

namespace {

class CorruptedOracle : public ScoreOracle {
 public:
  CorruptedOracle(std::shared_ptr<const ScoreOracle> inner,
                  const CorruptionSpec& spec, const SeedSpec& seed)
      : inner_(std::move(inner)), spec_(spec) {
    if (spec_.eps_sc < 0 || spec_.eps_L < 0 || spec_.eps_M < 0) {
      throw std::invalid_argument("corrupt_oracle: negative radius");
    }
    const int d = inner_->dim();
    RngStream rng(SeedSpec{derive_seed(seed, 0x5c0e5ULL), 0});
    dir_sc_ = unit_vector(d, rng);
    dir_L_ = unit_symmetric(d, rng);
    dir_M_ = unit_vector(d, rng);
  }

  int dim() const override { return inner_->dim(); }
  bool has_hessian() const override { return inner_->has_hessian(); }
  bool has_m_term() const override { return inner_->has_m_term(); }

  Vec score(double t, const Vec& x, OracleCtx& ctx) const override {
    Vec s = inner_->score(t, x, ctx);
    if (spec_.eps_sc > 0.0) s += spec_.eps_sc * dir_sc_;
    return s;
  }

  ScoreJet jet(double t, const Vec& x, OracleCtx& ctx) const override {
    ScoreJet j = inner_->jet(t, x, ctx);
    if (spec_.eps_sc > 0.0) j.score += spec_.eps_sc * dir_sc_;
    if (spec_.eps_L > 0.0) j.hessian += spec_.eps_L * dir_L_;
    return j;
  }

  LinTerms lin_terms(double t, const Vec& x, OracleCtx& ctx) const override {
    LinTerms lt = inner_->lin_terms(t, x, ctx);
    if (spec_.eps_sc > 0.0) lt.score += spec_.eps_sc * dir_sc_;
    if (spec_.eps_L > 0.0) lt.L += spec_.eps_L * dir_L_;
    if (spec_.eps_M > 0.0) lt.M += spec_.eps_M * dir_M_;
    return lt;
  }

 private:
  static Vec unit_vector(int d, RngStream& rng) {
    Vec v = rng.normal_vec(d);
    double n = v.norm();
    while (n == 0.0) {
      v = rng.normal_vec(d);
      n = v.norm();
    }
    return v / n;
  }

  static Mat unit_symmetric(int d, RngStream& rng) {
    Mat G(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) G(i, j) = rng.normal();
    }
    Mat S = 0.5 * (G + G.transpose());
    return S / S.norm();
  }

  std::shared_ptr<const ScoreOracle> inner_;
  CorruptionSpec spec_;
  Vec dir_sc_;
  Mat dir_L_;
  Vec dir_M_;
};

}  // namespace

std::shared_ptr<const ScoreOracle> corrupt_oracle(
    std::shared_ptr<const ScoreOracle> inner, const CorruptionSpec& spec,
    const SeedSpec& seed) {
  return std::make_shared<CorruptedOracle>(std::move(inner), spec, seed);
}

LinTerms linearization_terms(const ScoreOracle& oracle, double t, const Vec& x,
                             OracleCtx& ctx) {
  return oracle.lin_terms(t, x, ctx);
}

double score_norm_diagnostic(const ScoreOracle& oracle, double t,
                             const Mat& samples_from_pt) {
  if (samples_from_pt.rows() == 0) {
    throw std::invalid_argument("score_norm_diagnostic: empty sample");
  }
  OracleCtx ctx;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < samples_from_pt.rows(); ++k) {
    ++ctx.calls;
    acc += oracle.score(t, samples_from_pt.row(k).transpose(), ctx).squaredNorm();
  }
  return std::sqrt(acc / samples_from_pt.rows());
}

}  // namespace diffbench
