// Shared numeric kernels: time grid, seeded RNG streams, phi-functions and
// symmetric matrix-function evaluation.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>

namespace diffbench {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Uniform step grid over [0, T] with T = N*h.
struct TimeGrid {
  double T = 0.0;
  double h = 0.0;
  int N = 0;
};

// Builds the grid for horizon T and step h.  When T/h is an integer up to
// 1e-9 relative slack, N = round(T/h); otherwise N = floor(T/h) and the
// horizon is shortened to N*h (the requested value is written to
// *adjusted_from when given, and left untouched if no adjustment happened).
TimeGrid build_time_grid(double T, double h, double* adjusted_from = nullptr);

// Identifies one reproducible random stream.  Equal (master_seed, stream_id)
// pairs always yield identical draw sequences; distinct stream_ids yield
// streams that never share draws, so trajectories can fan out in parallel.
struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;
};

// SplitMix64 mixing step; used to derive engine seeds and substreams.
std::uint64_t mix64(std::uint64_t x);

// Collapses (master_seed, stream_id) plus extra salts into a single seed.
std::uint64_t derive_seed(const SeedSpec& s, std::uint64_t salt_a = 0,
                          std::uint64_t salt_b = 0);

// A seeded stream with explicit normal/uniform draw semantics.  Normal
// variates come from the Box-Muller pair transform (cached second value), so
// the draw sequence is pinned by this code rather than by the standard
// library's unspecified std::normal_distribution algorithm.
class RngStream {
 public:
  explicit RngStream(const SeedSpec& spec)
      : eng_(derive_seed(spec)), spec_(spec) {}

  double uniform();                 // Unif[0,1)
  double normal();                  // N(0,1)
  Vec normal_vec(Eigen::Index d);   // i.i.d. N(0,1) entries

  const SeedSpec& spec() const { return spec_; }

 private:
  std::mt19937_64 eng_;
  SeedSpec spec_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

// phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2, with a truncated
// Taylor series below |z| = 1e-4 to avoid cancellation at z ~ 0.
struct PhiPair {
  double phi1;
  double phi2;
};
PhiPair phi_functions(double z);

// Q f(Lambda) Q^T for symmetric A = Q Lambda Q^T.  Rejects input whose
// asymmetry exceeds 1e-8 relative in Frobenius norm; the result is exactly
// symmetrized.
Mat sym_matrix_function(const Mat& A, const std::function<double(double)>& f);

// Eigendecomposition of a symmetric matrix, reusable for several matrix
// functions of the same argument (e.g. e^{Lh}, phi1(Lh), the noise
// covariance of the second-order step).
struct SymEig {
  Vec eigenvalues;
  Mat eigenvectors;
};
SymEig sym_eigendecompose(const Mat& A);

// Draw from N(0, C) given the (clamped) eigendecomposition of C.
Vec sample_gaussian_from_eig(const SymEig& eig, RngStream& rng);

// Draw from N(0, C) for symmetric PSD C.  Eigenvalues down to
// -1e-10 * lambda_max are clamped to zero; anything lower is rejected.
Vec sample_gaussian_with_cov(const Mat& C, RngStream& rng);

}  // namespace diffbench
