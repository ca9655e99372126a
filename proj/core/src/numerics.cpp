#include "diffbench/numerics.hpp"

#include <cmath>
#include <functional>

namespace diffbench {

TimeGrid build_time_grid(double T, double h, double* adjusted_from) {
  if (!(T > 0.0) || !(h > 0.0)) {
    throw std::invalid_argument("build_time_grid: T and h must be positive");
  }
  if (h > T) {
    throw std::invalid_argument("build_time_grid: step h exceeds horizon T");
  }
  const double ratio = T / h;
  const double rounded = std::round(ratio);
  TimeGrid grid;
  grid.h = h;
  if (std::abs(T - rounded * h) <= 1e-9 * T) {
    grid.N = static_cast<int>(rounded);
    grid.T = T;
  } else {
    grid.N = static_cast<int>(std::floor(ratio));
    grid.T = grid.N * h;
    if (adjusted_from != nullptr) *adjusted_from = T;
  }
  return grid;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(const SeedSpec& s, std::uint64_t salt_a,
                          std::uint64_t salt_b) {
  std::uint64_t z = mix64(s.master_seed);
  z = mix64(z ^ s.stream_id);
  z = mix64(z ^ salt_a);
  z = mix64(z ^ salt_b);
  return z;
}

double RngStream::uniform() {
  // 53-bit mantissa; in [0, 1)
  return (eng_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  // Box-Muller; u1 strictly positive.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

Vec RngStream::normal_vec(Eigen::Index d) {
  Vec v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = normal();
  return v;
}

PhiPair phi_functions(double z) {
  if (!std::isfinite(z)) {
    throw std::invalid_argument("phi_functions: non-finite argument");
  }
  if (std::abs(z) < 1e-4) {
    // phi1 = 1 + z/2 + z^2/6 + z^3/24 + z^4/120
    // phi2 = 1/2 + z/6 + z^2/24 + z^3/120 + z^4/720
    const double z2 = z * z;
    const double z3 = z2 * z;
    const double z4 = z2 * z2;
    return {1.0 + z / 2 + z2 / 6 + z3 / 24 + z4 / 120,
            0.5 + z / 6 + z2 / 24 + z3 / 120 + z4 / 720};
  }
  const double em1 = std::expm1(z);
  return {em1 / z, (em1 - z) / (z * z)};
}

namespace {

void check_symmetric(const Mat& A, const char* who) {
  if (A.rows() != A.cols()) {
    throw std::invalid_argument(std::string(who) + ": matrix is not square");
  }
  const double asym = (A - A.transpose()).norm();
  if (asym > 1e-8 * std::max(A.norm(), 1e-300)) {
    throw std::invalid_argument(
        std::string(who) +
        ": matrix is not symmetric (was the Hessian estimate symmetrized?)");
  }
}

}  // namespace

SymEig sym_eigendecompose(const Mat& A) {
  Eigen::SelfAdjointEigenSolver<Mat> es;
  if (A.rows() <= 3) {
    es.computeDirect(A);
  } else {
    es.compute(A);
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

Mat sym_matrix_function(const Mat& A, const std::function<double(double)>& f) {
  check_symmetric(A, "sym_matrix_function");
  const SymEig eig = sym_eigendecompose(A);
  Vec fd(eig.eigenvalues.size());
  for (Eigen::Index i = 0; i < fd.size(); ++i) fd[i] = f(eig.eigenvalues[i]);
  Mat R = eig.eigenvectors * fd.asDiagonal() * eig.eigenvectors.transpose();
  return 0.5 * (R + R.transpose());
}

Vec sample_gaussian_from_eig(const SymEig& eig, RngStream& rng) {
  const Eigen::Index d = eig.eigenvalues.size();
  Vec z = rng.normal_vec(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double lam = std::max(eig.eigenvalues[i], 0.0);
    z[i] *= std::sqrt(lam);
  }
  return eig.eigenvectors * z;
}

Vec sample_gaussian_with_cov(const Mat& C, RngStream& rng) {
  check_symmetric(C, "sample_gaussian_with_cov");
  SymEig eig = sym_eigendecompose(C);
  const double max_ev = eig.eigenvalues.size() > 0
                            ? eig.eigenvalues.maxCoeff()
                            : 0.0;
  const double floor = -1e-10 * std::max(max_ev, 0.0);
  for (Eigen::Index i = 0; i < eig.eigenvalues.size(); ++i) {
    if (eig.eigenvalues[i] < floor) {
      throw std::invalid_argument(
          "sample_gaussian_with_cov: covariance is not PSD");
    }
  }
  return sample_gaussian_from_eig(eig, rng);
}

}  // namespace diffbench
