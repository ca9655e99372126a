#include "diffbench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace diffbench {

double lipschitz_L(double t, double L0) {
  if (t < 0.0 || !(L0 > 0.0)) {
    throw std::invalid_argument("lipschitz_L: need t >= 0 and L0 > 0");
  }
  if (t == 0.0) return L0;
  return std::min(1.0 / (-std::expm1(-t)), std::exp(t) * L0);
}

double convexity_m(double t, double m0) {
  if (t < 0.0 || !(m0 > 0.0)) {
    throw std::invalid_argument("convexity_m: need t >= 0 and m0 > 0");
  }
  const double decay = std::exp(-t);
  return 1.0 / (decay / m0 + (1.0 - decay));
}

BoundReport theorem_bound(SchemeKind scheme, const RegularityConstants& rc,
                          int d, double h, double T, double eps_sc,
                          double eps_L, double eps_M, double X0_norm) {
  if (!(rc.m0 > 0.0) || rc.L0 < rc.m0) {
    throw std::invalid_argument("theorem_bound: need 0 < m0 <= L0");
  }
  const double m_min = rc.m_min();
  const double L_max = rc.L_max();
  if (!(m_min > 0.5)) {
    throw std::invalid_argument(
        "theorem_bound: m_min = min(1, m0) must exceed 1/2; every constant "
        "divides by m_min - 1/2 and the bounds are vacuous otherwise");
  }
  if (d < 1 || !(h > 0.0) || !(T > 0.0) || eps_sc < 0 || eps_L < 0 ||
      eps_M < 0 || X0_norm < 0) {
    throw std::invalid_argument("theorem_bound: bad argument");
  }
  const double gap = m_min - 0.5;

  BoundReport rep;
  rep.scheme = scheme;
  rep.init_term = std::exp(-m_min * T) * X0_norm;

  switch (scheme) {
    case SchemeKind::EM:
      rep.C1 = (L_max + 0.5) / gap;
      rep.C2 = 1.0 / gap;
      rep.disc_term = rep.C1 * std::sqrt(d * h);
      rep.score_term = rep.C2 * eps_sc;
      break;
    case SchemeKind::EI:
      rep.C1 = L_max / gap;
      rep.C2 = 1.0 / gap;
      rep.disc_term = rep.C1 * std::sqrt(d * h);
      rep.score_term = rep.C2 * eps_sc;
      break;
    case SchemeKind::REM:
      rep.C1 = (std::sqrt(d / 3.0) * L_max + 0.5 / std::sqrt(3.0)) / gap;
      rep.C2 = 3.0 / gap;
      rep.disc_term = rep.C1 * std::sqrt(h);  // d already inside C1
      rep.score_term = rep.C2 * eps_sc;
      break;
    case SchemeKind::REI:
      rep.C1 = L_max / (std::sqrt(3.0) * gap);
      rep.C2 = 3.0 / gap;
      rep.disc_term = rep.C1 * std::sqrt(d * h);
      rep.score_term = rep.C2 * eps_sc;
      break;
    case SchemeKind::SO: {
      const double amp = std::exp((L_max - 0.5) * h);
      rep.C1 = amp * (std::sqrt(double(d)) * std::pow(L_max, 1.5) +
                      1.5 * d * rc.L_F) / gap;
      rep.C2 = amp / gap;
      rep.disc_term = rep.C1 * h;
      rep.score_term = rep.C2 * (eps_sc + (2.0 / 3.0) * std::sqrt(h) * eps_L +
                                 0.5 * h * eps_M);
      break;
    }
  }

  // Iterations needed at the accuracy this very bound evaluates to: a third
  // of the budget goes to each term, T from the initialization decay and h
  // from the discretization term (eps^2 scaling except for SO's eps).
  const double eps = rep.total();
  if (eps > 0.0) {
    const double eps3 = eps / 3.0;
    const double T_req =
        X0_norm > 0.0
            ? std::max(std::log(std::max(X0_norm / eps3, 1.0)) / m_min, 0.0)
            : 0.0;
    double h_req;
    switch (scheme) {
      case SchemeKind::EM:
      case SchemeKind::EI:
      case SchemeKind::REI:
        h_req = (eps3 / rep.C1) * (eps3 / rep.C1) / d;
        break;
      case SchemeKind::REM:
        h_req = (eps3 / rep.C1) * (eps3 / rep.C1);
        break;
      case SchemeKind::SO:
        h_req = eps3 / rep.C1;
        break;
      default:
        h_req = h;
    }
    rep.N_for_eps = static_cast<long long>(
        std::ceil(std::max(T_req, h_req) / h_req));
  }
  return rep;
}

double w2_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument("w2_1d: empty input");
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const size_t n = a.size(), m = b.size();
  if (n == m) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double diff = a[i] - b[i];
      acc += diff * diff;
    }
    return std::sqrt(acc / n);
  }
  // Quantile coupling: integrate (Fa^{-1}(u) - Fb^{-1}(u))^2 du exactly over
  // the merged grid {i/n} U {j/m}.  Segment boundaries are compared as
  // rationals so no float ties are mishandled.
  double acc = 0.0;
  size_t ia = 0, ib = 0;
  double prev = 0.0;
  while (ia < n && ib < m) {
    const unsigned long long lhs = (ia + 1) * static_cast<unsigned long long>(m);
    const unsigned long long rhs = (ib + 1) * static_cast<unsigned long long>(n);
    const double q = lhs <= rhs ? static_cast<double>(ia + 1) / n
                                : static_cast<double>(ib + 1) / m;
    const double diff = a[ia] - b[ib];
    acc += diff * diff * (q - prev);
    prev = q;
    if (lhs <= rhs) ++ia;
    if (rhs <= lhs) ++ib;
  }
  return std::sqrt(std::max(acc, 0.0));
}

double w2_1d(const Eigen::Ref<const Eigen::VectorXd>& a,
             const Eigen::Ref<const Eigen::VectorXd>& b) {
  return w2_1d(std::vector<double>(a.data(), a.data() + a.size()),
               std::vector<double>(b.data(), b.data() + b.size()));
}

namespace {

Mat psd_sqrt(const Mat& S) {
  const SymEig eig = sym_eigendecompose(S);
  Vec r = eig.eigenvalues.cwiseMax(0.0).cwiseSqrt();
  Mat out = eig.eigenvectors * r.asDiagonal() * eig.eigenvectors.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace

double w2_gaussian(const GaussianLaw& a, const GaussianLaw& b) {
  if (a.mean.size() != b.mean.size()) {
    throw std::invalid_argument("w2_gaussian: dimension mismatch");
  }
  const Mat rb = psd_sqrt(b.cov);
  Mat inner = rb * a.cov * rb;
  inner = 0.5 * (inner + inner.transpose());
  const SymEig eig = sym_eigendecompose(inner);
  const double tr_cross = eig.eigenvalues.cwiseMax(0.0).cwiseSqrt().sum();
  const double bures =
      std::max(a.cov.trace() + b.cov.trace() - 2.0 * tr_cross, 0.0);
  return std::sqrt((a.mean - b.mean).squaredNorm() + bures);
}

double sliced_w2(const Mat& a, const Mat& b, int n_proj, const SeedSpec& seed) {
  if (n_proj < 1) throw std::invalid_argument("sliced_w2: n_proj must be >= 1");
  if (a.rows() == 0 || b.rows() == 0) {
    throw std::invalid_argument("sliced_w2: empty sample");
  }
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("sliced_w2: dimension mismatch");
  }
  RngStream rng(SeedSpec{derive_seed(seed, 0x51cedULL), 0});
  const auto d = a.cols();
  double acc = 0.0;
  for (int k = 0; k < n_proj; ++k) {
    Vec u = rng.normal_vec(d);
    double nrm = u.norm();
    while (nrm == 0.0) {
      u = rng.normal_vec(d);
      nrm = u.norm();
    }
    u /= nrm;
    const double w = w2_1d(Eigen::VectorXd(a * u), Eigen::VectorXd(b * u));
    acc += w * w;
  }
  return std::sqrt(acc / n_proj);
}

LinearFit linear_fit(const std::vector<double>& x,
                     const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("linear_fit: need >= 2 matching points");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("linear_fit: degenerate x");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    ss_res += r * r;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

OrderFit fit_order(const std::vector<double>& h_list,
                   const std::vector<double>& err_list, double floor) {
  if (h_list.size() != err_list.size()) {
    throw std::invalid_argument("fit_order: size mismatch");
  }
  if (floor < 0.0) throw std::invalid_argument("fit_order: negative floor");
  std::vector<double> lx, ly;
  for (size_t i = 0; i < h_list.size(); ++i) {
    if (err_list[i] > 2.0 * floor && h_list[i] > 0.0) {
      lx.push_back(std::log(h_list[i]));
      ly.push_back(std::log(err_list[i] - floor));
    }
  }
  if (lx.size() < 3) {
    throw std::invalid_argument(
        "fit_order: fewer than 3 points above twice the error floor");
  }
  const LinearFit f = linear_fit(lx, ly);
  return {f.slope, f.intercept, f.r2, static_cast<int>(lx.size())};
}

}  // namespace diffbench
