// Target distributions: analytic Gaussians for exact testing and the
// penalized logistic-regression posterior, plus MALA reference sampling.
#pragma once

#include "diffbench/numerics.hpp"

#include <string>
#include <vector>

namespace diffbench {

// Common interface for a data distribution p0: unnormalized log-density with
// first and second derivatives and the regularity constants (m0, L0).
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;
  virtual int dim() const = 0;
  virtual double log_density(const Vec& x) const = 0;  // up to a constant
  virtual Vec grad_log(const Vec& x) const = 0;
  virtual Mat hess_log(const Vec& x) const = 0;
  virtual double m0() const = 0;
  virtual double L0() const = 0;
};

class GaussianTarget : public TargetDensity {
 public:
  GaussianTarget(Vec mu, Mat sigma);

  int dim() const override { return static_cast<int>(mu_.size()); }
  double log_density(const Vec& x) const override;
  Vec grad_log(const Vec& x) const override;
  Mat hess_log(const Vec&) const override { return -precision_; }
  double m0() const override { return m0_; }
  double L0() const override { return L0_; }

  const Vec& mu() const { return mu_; }
  const Mat& sigma() const { return sigma_; }
  const Mat& precision() const { return precision_; }
  // sqrt(E||X||^2) = sqrt(||mu||^2 + tr Sigma); the X0 moment in the bounds.
  double l2_norm() const;
  Vec sample(RngStream& rng) const;

 private:
  Vec mu_;
  Mat sigma_;
  Mat precision_;
  Mat sqrt_sigma_;
  double m0_ = 0.0;
  double L0_ = 0.0;
};

// Binary-label regression data; labels are +-1.
struct Dataset {
  Mat features;             // n_data x d
  Eigen::VectorXd labels;   // entries in {-1, +1}
  int n_data() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
};

// Features x_{i,j} ~ N(0, sigma2); labels Bernoulli-logistic around the
// planted coefficient vector theta_star (y = +1 w.p. sigmoid(x^T theta*)).
Dataset generate_dataset(int n_data, int d, double sigma2,
                         const Vec& theta_star, const SeedSpec& seed);

// Columns: y, x_1..x_d.
void write_dataset_csv(const Dataset& data, const std::string& path);
Dataset read_dataset_csv(const std::string& path);

// Posterior p0(theta) ~ exp(-f(theta)) with
// f = (lambda/2)||theta||^2 + (1/n) sum log(1 + exp(-y_i x_i^T theta)).
class LogisticPosterior : public TargetDensity {
 public:
  LogisticPosterior(Dataset data, double lambda);

  int dim() const override { return data_.dim(); }
  double log_density(const Vec& x) const override { return -potential(x); }
  Vec grad_log(const Vec& x) const override;
  Mat hess_log(const Vec& x) const override;
  double m0() const override { return lambda_; }
  double L0() const override { return L0_; }

  double potential(const Vec& theta) const;  // f(theta)
  double lambda() const { return lambda_; }
  const Dataset& data() const { return data_; }

 private:
  Dataset data_;
  double lambda_;
  double L0_;
};

struct LogisticDerivatives {
  double f;
  Vec grad_logp0;
  Mat hess_logp0;
};
LogisticDerivatives logistic_derivatives(const LogisticPosterior& target,
                                         const Vec& theta);

struct RegularityPair {
  double m0;
  double L0;
};
// m0 = lambda, L0 = lambda + lambda_max(sum x_i x_i^T)/n.
RegularityPair logistic_regularity(const LogisticPosterior& target);

struct MalaConfig {
  double step = 0.1;      // initial proposal step, adapted during burn-in
  int burn_in = 5000;
  int thinning = 5;
  int n_samples = 10000;
};

// Metropolis-adjusted Langevin chain targeting `target`; the step size is
// adapted during burn-in towards acceptance ~0.57 (kept within (0.3, 0.8)).
// Returns n_samples rows after burn-in and thinning.
Mat mala_reference_sampler(const TargetDensity& target, const MalaConfig& cfg,
                           const SeedSpec& seed);

}  // namespace diffbench
