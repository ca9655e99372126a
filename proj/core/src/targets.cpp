#include "diffbench/targets.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace diffbench {

namespace {

// log(1 + e^u) without overflow.
double softplus(double u) {
  return std::log1p(std::exp(-std::abs(u))) + std::max(u, 0.0);
}

double sigmoid(double u) {
  if (u >= 0.0) {
    return 1.0 / (1.0 + std::exp(-u));
  }
  const double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace

GaussianTarget::GaussianTarget(Vec mu, Mat sigma)
    : mu_(std::move(mu)), sigma_(std::move(sigma)) {
  if (sigma_.rows() != sigma_.cols() || sigma_.rows() != mu_.size()) {
    throw std::invalid_argument("GaussianTarget: dimension mismatch");
  }
  const SymEig eig = sym_eigendecompose(sigma_);
  const double lo = eig.eigenvalues.minCoeff();
  if (!(lo > 0.0)) {
    throw std::invalid_argument("GaussianTarget: Sigma must be positive definite");
  }
  const double hi = eig.eigenvalues.maxCoeff();
  precision_ = eig.eigenvectors *
               eig.eigenvalues.cwiseInverse().asDiagonal() *
               eig.eigenvectors.transpose();
  precision_ = 0.5 * (precision_ + precision_.transpose());
  sqrt_sigma_ = eig.eigenvectors * eig.eigenvalues.cwiseSqrt().asDiagonal() *
                eig.eigenvectors.transpose();
  m0_ = 1.0 / hi;  // smallest precision eigenvalue
  L0_ = 1.0 / lo;  // largest precision eigenvalue
}

double GaussianTarget::log_density(const Vec& x) const {
  const Vec r = x - mu_;
  return -0.5 * r.dot(precision_ * r);
}

Vec GaussianTarget::grad_log(const Vec& x) const {
  return -(precision_ * (x - mu_));
}

double GaussianTarget::l2_norm() const {
  return std::sqrt(mu_.squaredNorm() + sigma_.trace());
}

Vec GaussianTarget::sample(RngStream& rng) const {
  return mu_ + sqrt_sigma_ * rng.normal_vec(mu_.size());
}

Dataset generate_dataset(int n_data, int d, double sigma2,
                         const Vec& theta_star, const SeedSpec& seed) {
  if (n_data < 1 || d < 1 || !(sigma2 > 0.0)) {
    throw std::invalid_argument("generate_dataset: bad sizes");
  }
  if (theta_star.size() != d) {
    throw std::invalid_argument("generate_dataset: theta_star dimension");
  }
  RngStream rng(seed);
  Dataset data;
  data.features.resize(n_data, d);
  data.labels.resize(n_data);
  const double sd = std::sqrt(sigma2);
  for (int i = 0; i < n_data; ++i) {
    for (int j = 0; j < d; ++j) data.features(i, j) = sd * rng.normal();
  }
  // Labels drawn after all features so the feature block is seed-stable
  // under changes to the label rule.
  for (int i = 0; i < n_data; ++i) {
    const double p = sigmoid(data.features.row(i).dot(theta_star));
    data.labels[i] = rng.uniform() < p ? 1.0 : -1.0;
  }
  return data;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);
  out << "y";
  for (int j = 0; j < data.dim(); ++j) out << ",x_" << (j + 1);
  out << "\n";
  out.precision(17);
  for (int i = 0; i < data.n_data(); ++i) {
    out << (data.labels[i] > 0 ? 1 : -1);
    for (int j = 0; j < data.dim(); ++j) out << "," << data.features(i, j);
    out << "\n";
  }
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("read_dataset_csv: empty file " + path);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("read_dataset_csv: no rows");
  const int d = static_cast<int>(rows[0].size()) - 1;
  Dataset data;
  data.features.resize(static_cast<int>(rows.size()), d);
  data.labels.resize(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    data.labels[static_cast<int>(i)] = rows[i][0];
    for (int j = 0; j < d; ++j) {
      data.features(static_cast<int>(i), j) = rows[i][j + 1];
    }
  }
  return data;
}

LogisticPosterior::LogisticPosterior(Dataset data, double lambda)
    : data_(std::move(data)), lambda_(lambda) {
  if (!(lambda_ > 0.0)) {
    throw std::invalid_argument("LogisticPosterior: lambda must be positive");
  }
  for (int i = 0; i < data_.n_data(); ++i) {
    const double y = data_.labels[i];
    if (y != 1.0 && y != -1.0) {
      throw std::invalid_argument("LogisticPosterior: labels must be +-1");
    }
  }
  const Mat gram = data_.features.transpose() * data_.features;
  const SymEig eig = sym_eigendecompose(gram);
  L0_ = lambda_ + eig.eigenvalues.maxCoeff() / data_.n_data();
}

double LogisticPosterior::potential(const Vec& theta) const {
  double loss = 0.0;
  const Vec u = data_.labels.cwiseProduct(data_.features * theta);
  for (int i = 0; i < data_.n_data(); ++i) loss += softplus(-u[i]);
  return 0.5 * lambda_ * theta.squaredNorm() + loss / data_.n_data();
}

Vec LogisticPosterior::grad_log(const Vec& x) const {
  const Vec u = data_.labels.cwiseProduct(data_.features * x);
  Vec acc = Vec::Zero(dim());
  for (int i = 0; i < data_.n_data(); ++i) {
    // d/dtheta softplus(-u_i) = -y_i x_i sigma(-u_i)
    acc += data_.labels[i] * sigmoid(-u[i]) * data_.features.row(i).transpose();
  }
  return -(lambda_ * x - acc / data_.n_data());
}

Mat LogisticPosterior::hess_log(const Vec& x) const {
  const Vec u = data_.labels.cwiseProduct(data_.features * x);
  Mat acc = Mat::Zero(dim(), dim());
  for (int i = 0; i < data_.n_data(); ++i) {
    const double s = sigmoid(-u[i]);
    acc += s * (1.0 - s) * data_.features.row(i).transpose() *
           data_.features.row(i);
  }
  Mat H = -(lambda_ * Mat::Identity(dim(), dim()) + acc / data_.n_data());
  return 0.5 * (H + H.transpose());
}

LogisticDerivatives logistic_derivatives(const LogisticPosterior& target,
                                         const Vec& theta) {
  return {target.potential(theta), target.grad_log(theta),
          target.hess_log(theta)};
}

RegularityPair logistic_regularity(const LogisticPosterior& target) {
  return {target.m0(), target.L0()};
}

Mat mala_reference_sampler(const TargetDensity& target, const MalaConfig& cfg,
                           const SeedSpec& seed) {
  if (cfg.step <= 0.0 || cfg.burn_in < 0 || cfg.thinning < 1 ||
      cfg.n_samples < 1) {
    throw std::invalid_argument("mala_reference_sampler: bad config");
  }
  const int d = target.dim();
  RngStream rng(seed);

  double step = cfg.step;
  Vec x = Vec::Zero(d);
  double lp = target.log_density(x);
  Vec g = target.grad_log(x);
  if (!std::isfinite(lp)) {
    throw std::runtime_error("mala_reference_sampler: non-finite log-density");
  }

  Mat out(cfg.n_samples, d);
  int kept = 0;
  long long it = 0;
  int window_acc = 0, window_tot = 0;
  const double target_acc = 0.574;

  while (kept < cfg.n_samples) {
    ++it;
    const Vec prop = x + 0.5 * step * g + std::sqrt(step) * rng.normal_vec(d);
    const double lp_prop = target.log_density(prop);
    if (!std::isfinite(lp_prop)) {
      throw std::runtime_error(
          "mala_reference_sampler: non-finite log-density at proposal");
    }
    const Vec g_prop = target.grad_log(prop);
    const double fwd = (prop - x - 0.5 * step * g).squaredNorm();
    const double bwd = (x - prop - 0.5 * step * g_prop).squaredNorm();
    const double log_alpha = lp_prop - lp - (bwd - fwd) / (2.0 * step);
    ++window_tot;
    if (std::log(rng.uniform() + 1e-300) < log_alpha) {
      x = prop;
      lp = lp_prop;
      g = g_prop;
      ++window_acc;
    }
    if (it <= cfg.burn_in) {
      // Multiplicative adaptation towards ~0.57 acceptance, frozen after
      // burn-in so the kept chain is exact in stationarity.
      if (window_tot >= 100) {
        const double rate = static_cast<double>(window_acc) / window_tot;
        if (rate < 0.3) {
          step *= 0.5;
        } else if (rate < target_acc - 0.05) {
          step *= 0.85;
        } else if (rate > 0.8) {
          step *= 1.8;
        } else if (rate > target_acc + 0.05) {
          step *= 1.15;
        }
        window_acc = 0;
        window_tot = 0;
      }
    } else if ((it - cfg.burn_in) % cfg.thinning == 0) {
      out.row(kept++) = x.transpose();
    }
  }
  return out;
}

}  // namespace diffbench
