#include "diffbench/harness.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

namespace diffbench {

namespace {

// Stream salts for the independent random streams of one experiment.
constexpr std::uint64_t kSaltDataset = 0x01;
constexpr std::uint64_t kSaltMalaReference = 0x02;
constexpr std::uint64_t kSaltMalaParticles = 0x03;
constexpr std::uint64_t kSaltBatch = 0x04;
constexpr std::uint64_t kSaltSliced = 0x05;
constexpr std::uint64_t kSaltCorruption = 0x06;
constexpr std::uint64_t kSaltOrderReference = 0x07;

constexpr int kSlicedProjections = 64;

SeedSpec stream_seed(const ExperimentConfig& cfg, std::uint64_t salt,
                     std::uint64_t index = 0) {
  return SeedSpec{cfg.master_seed, mix64((salt << 32) ^ index)};
}

Dataset figure1_dataset(const ExperimentConfig& cfg) {
  Vec theta_star = Vec::Ones(cfg.d) / std::sqrt(double(cfg.d));
  return generate_dataset(cfg.n_data, cfg.d, cfg.sigma2, theta_star,
                          stream_seed(cfg, kSaltDataset));
}

// Simple job pool over a fixed job list; results land in preassigned slots
// so the output is independent of scheduling.
void run_jobs(const std::vector<std::function<void()>>& jobs, int threads) {
  const int n_workers =
      std::min<int>(threads, static_cast<int>(jobs.size()));
  if (n_workers <= 1) {
    for (const auto& job : jobs) job();
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      jobs[i]();
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(n_workers));
  for (int k = 0; k < n_workers; ++k) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

void sort_rows(std::vector<ResultRow>& rows) {
  auto scheme_rank = [](const std::string& s) {
    return static_cast<int>(scheme_from_name(s));
  };
  std::sort(rows.begin(), rows.end(),
            [&](const ResultRow& a, const ResultRow& b) {
              if (a.lambda != b.lambda) return a.lambda < b.lambda;
              const int ra = scheme_rank(a.scheme), rb = scheme_rank(b.scheme);
              if (ra != rb) return ra < rb;
              return a.h < b.h;
            });
}

// W2 between 1-d Gaussian marginals along coordinate 0.
double w2_gauss_dim1(const GaussianLaw& a, const GaussianLaw& b) {
  const double dm = a.mean[0] - b.mean[0];
  const double ds = std::sqrt(a.cov(0, 0)) - std::sqrt(b.cov(0, 0));
  return std::sqrt(dm * dm + ds * ds);
}

// Sliced W2 between Gaussian laws: exact 1-d W2 of the projections, RMS over
// seed-deterministic directions (analogue of sliced_w2 for closed-form laws).
double sliced_w2_gauss(const GaussianLaw& a, const GaussianLaw& b, int n_proj,
                       const SeedSpec& seed) {
  RngStream rng(SeedSpec{derive_seed(seed, 0x51cedULL), 0});
  double acc = 0.0;
  for (int k = 0; k < n_proj; ++k) {
    Vec u = rng.normal_vec(a.mean.size());
    u.normalize();
    const double dm = u.dot(a.mean - b.mean);
    const double ds = std::sqrt(std::max(0.0, u.dot(a.cov * u))) -
                      std::sqrt(std::max(0.0, u.dot(b.cov * u)));
    acc += dm * dm + ds * ds;
  }
  return std::sqrt(acc / n_proj);
}

}  // namespace

ExperimentResult run_figure1(const ExperimentConfig& cfg) {
  ExperimentResult result;
  const Dataset dataset = figure1_dataset(cfg);

  struct LambdaContext {
    double lambda;
    Mat reference;
    std::shared_ptr<const ScoreOracle> oracle;
  };
  std::vector<LambdaContext> contexts;
  contexts.reserve(cfg.lambda_list.size());

  for (size_t li = 0; li < cfg.lambda_list.size(); ++li) {
    const double lambda = cfg.lambda_list[li];
    auto posterior = std::make_shared<LogisticPosterior>(dataset, lambda);

    MalaConfig mala;
    mala.step = 1.0 / posterior->L0();
    mala.burn_in = 5000;
    mala.thinning = 5;

    mala.n_samples = cfg.n_reference;
    Mat reference = mala_reference_sampler(
        *posterior, mala, stream_seed(cfg, kSaltMalaReference, li));

    mala.n_samples = cfg.mc_particles;
    Mat particles = mala_reference_sampler(
        *posterior, mala, stream_seed(cfg, kSaltMalaParticles, li));

    McOracleConfig mc;
    mc.n_particles = cfg.mc_particles;
    mc.seed = stream_seed(cfg, kSaltMalaParticles, li);
    std::shared_ptr<const ScoreOracle> oracle =
        std::make_shared<McScoreOracle>(std::move(particles), mc);
    if (cfg.corruption.eps_sc > 0 || cfg.corruption.eps_L > 0 ||
        cfg.corruption.eps_M > 0) {
      oracle = corrupt_oracle(oracle, cfg.corruption,
                              stream_seed(cfg, kSaltCorruption, li));
    }
    contexts.push_back({lambda, std::move(reference), std::move(oracle)});
  }

  struct Cell {
    size_t li, si, hi;
  };
  std::vector<Cell> cells;
  for (size_t li = 0; li < contexts.size(); ++li) {
    for (size_t si = 0; si < cfg.schemes.size(); ++si) {
      for (size_t hi = 0; hi < cfg.h_list.size(); ++hi) {
        cells.push_back({li, si, hi});
      }
    }
  }

  std::vector<ResultRow> rows(cells.size());
  std::vector<std::function<void()>> jobs;
  jobs.reserve(cells.size());
  for (size_t ci = 0; ci < cells.size(); ++ci) {
    jobs.emplace_back([&, ci] {
      const Cell& cell = cells[ci];
      const LambdaContext& lc = contexts[cell.li];
      const SchemeKind scheme = cfg.schemes[cell.si];
      const double h = cfg.h_list[cell.hi];
      const TimeGrid grid = build_time_grid(cfg.T, h);

      ResultRow row;
      row.experiment = experiment_name(cfg.experiment);
      row.scheme = scheme_name(scheme);
      row.lambda = lc.lambda;
      row.h = h;
      row.N = grid.N;
      row.n_traj = cfg.n_traj;
      row.seed = cfg.master_seed;
      try {
        // One seed per (lambda, h) shared by all schemes: common random
        // numbers keep the scheme comparison free of init/reference noise.
        const SeedSpec batch_seed =
            stream_seed(cfg, kSaltBatch, (cell.li << 16) ^ cell.hi);
        const ChainResult chain =
            run_batch(scheme, *lc.oracle, grid, cfg.n_traj, batch_seed,
                      /*threads=*/1);
        if (chain.n_failed > 0) {
          std::cerr << "[figure1] lambda=" << lc.lambda << " scheme="
                    << scheme_name(scheme) << " h=" << h << ": dropped "
                    << chain.n_failed << "/" << chain.n_requested
                    << " trajectories (" << chain.failure_note << ")\n";
        }
        row.n_traj = static_cast<int>(chain.finals.rows());
        row.w2_dim1 = w2_1d(chain.finals.col(0), lc.reference.col(0));
        row.w2_sliced = sliced_w2(chain.finals, lc.reference,
                                  kSlicedProjections,
                                  stream_seed(cfg, kSaltSliced));
        row.wall_ms = cfg.record_wall_ms ? chain.wall_ms : 0.0;
        row.oracle_calls = chain.oracle_calls;
      } catch (const std::exception& e) {
        std::cerr << "[figure1] cell lambda=" << lc.lambda << " scheme="
                  << scheme_name(scheme) << " h=" << h
                  << " failed: " << e.what() << "\n";
        row.w2_dim1 = std::numeric_limits<double>::quiet_NaN();
        row.w2_sliced = std::numeric_limits<double>::quiet_NaN();
      }
      rows[ci] = std::move(row);
    });
  }
  run_jobs(jobs, resolve_threads(cfg.threads));

  result.rows = std::move(rows);
  sort_rows(result.rows);
  return result;
}

ExperimentResult run_order_study(const ExperimentConfig& cfg) {
  ExperimentResult result;

  // Non-stationary target: a stationary one would make several schemes exact
  // and leave nothing to fit.
  const GaussianTarget target(2.0 * Vec::Ones(cfg.d),
                              0.25 * Mat::Identity(cfg.d, cfg.d));
  const GaussianLaw target_law{target.mu(), target.sigma()};
  const GaussianScoreOracle oracle(target);

  RngStream ref_rng(stream_seed(cfg, kSaltOrderReference));
  Mat reference(cfg.n_reference, cfg.d);
  for (int i = 0; i < cfg.n_reference; ++i) {
    reference.row(i) = target.sample(ref_rng).transpose();
  }

  const double m_min = std::min(1.0, target.m0());
  const double floor = std::exp(-m_min * cfg.T) * target.l2_norm();

  std::vector<ResultRow> rows;
  for (const SchemeKind scheme : cfg.schemes) {
    for (size_t hi = 0; hi < cfg.h_list.size(); ++hi) {
      const double h = cfg.h_list[hi];
      const TimeGrid grid = build_time_grid(cfg.T, h);
      ResultRow row;
      row.experiment = experiment_name(cfg.experiment);
      row.scheme = scheme_name(scheme);
      row.lambda = 0.0;
      row.h = h;
      row.N = grid.N;
      row.seed = cfg.master_seed;

      if (scheme == SchemeKind::REM || scheme == SchemeKind::REI) {
        const SeedSpec batch_seed = stream_seed(
            cfg, kSaltBatch,
            (static_cast<std::uint64_t>(static_cast<int>(scheme)) << 16) ^
                static_cast<std::uint64_t>(hi));
        const ChainResult chain = run_batch(scheme, oracle, grid, cfg.n_traj,
                                            batch_seed, cfg.threads);
        row.n_traj = static_cast<int>(chain.finals.rows());
        row.w2_dim1 = w2_1d(chain.finals.col(0), reference.col(0));
        row.w2_sliced = sliced_w2(chain.finals, reference, kSlicedProjections,
                                  stream_seed(cfg, kSaltSliced));
        row.wall_ms = cfg.record_wall_ms ? chain.wall_ms : 0.0;
        row.oracle_calls = chain.oracle_calls;
      } else {
        const auto t0 = std::chrono::steady_clock::now();
        const GaussianLaw law = gaussian_pushforward_exact(scheme, target, grid);
        row.n_traj = 0;  // law computed exactly, no trajectories
        row.w2_gauss = w2_gaussian(law, target_law);
        row.w2_dim1 = w2_gauss_dim1(law, target_law);
        row.w2_sliced = sliced_w2_gauss(law, target_law, kSlicedProjections,
                                        stream_seed(cfg, kSaltSliced));
        row.oracle_calls = static_cast<std::uint64_t>(grid.N);
        if (cfg.record_wall_ms) {
          row.wall_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
        }
      }
      rows.push_back(std::move(row));
    }
  }

  // Per-scheme order fit: exact-law schemes on the full-space W2, sampled
  // schemes on the first-dimension W2.
  for (const SchemeKind scheme : cfg.schemes) {
    std::vector<double> hs, errs;
    for (const ResultRow& row : rows) {
      if (row.scheme != scheme_name(scheme)) continue;
      hs.push_back(row.h);
      errs.push_back(row.w2_gauss ? *row.w2_gauss : row.w2_dim1);
    }
    const OrderFit fit = fit_order(hs, errs, floor);
    result.slopes.push_back({scheme_name(scheme), fit.slope, fit.intercept,
                             fit.r2, fit.n_used});
  }

  result.rows = std::move(rows);
  sort_rows(result.rows);
  return result;
}

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, p);
}

void write_results_csv(const std::vector<ResultRow>& rows,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_results_csv: cannot open " + path);
  out << "experiment,scheme,lambda,h,N,n_traj,seed,w2_dim1,w2_sliced,"
         "w2_gauss,wall_ms,oracle_calls\n";
  for (const ResultRow& r : rows) {
    out << r.experiment << ',' << r.scheme << ',' << format_double(r.lambda)
        << ',' << format_double(r.h) << ',' << r.N << ',' << r.n_traj << ','
        << r.seed << ',' << format_double(r.w2_dim1) << ','
        << format_double(r.w2_sliced) << ','
        << (r.w2_gauss ? format_double(*r.w2_gauss) : std::string()) << ','
        << format_double(r.wall_ms) << ',' << r.oracle_calls << '\n';
  }
  if (!out) throw std::runtime_error("write_results_csv: write failed: " + path);
}

namespace {

double parse_csv_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::runtime_error("results.csv: bad number '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_results_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (cells.size() != 12) {
      throw std::runtime_error("read_results_csv: expected 12 columns");
    }
    ResultRow r;
    r.experiment = cells[0];
    r.scheme = cells[1];
    r.lambda = parse_csv_double(cells[2]);
    r.h = parse_csv_double(cells[3]);
    r.N = std::stoi(cells[4]);
    r.n_traj = std::stoi(cells[5]);
    r.seed = std::stoull(cells[6]);
    r.w2_dim1 = parse_csv_double(cells[7]);
    r.w2_sliced = parse_csv_double(cells[8]);
    if (!cells[9].empty()) r.w2_gauss = parse_csv_double(cells[9]);
    r.wall_ms = parse_csv_double(cells[10]);
    r.oracle_calls = std::stoull(cells[11]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_slopes_csv(const std::vector<SlopeRow>& slopes,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_slopes_csv: cannot open " + path);
  out << "scheme,slope,intercept,r2,n_used\n";
  for (const SlopeRow& s : slopes) {
    out << s.scheme << ',' << format_double(s.slope) << ','
        << format_double(s.intercept) << ',' << format_double(s.r2) << ','
        << s.n_used << '\n';
  }
}

// implemented in svg.cpp
void write_w2_svg(const std::vector<ResultRow>& rows, const std::string& path);

void emit_outputs(const ExperimentResult& result,
                  const ExperimentConfig& cfg) {
  if (result.rows.empty()) {
    throw std::invalid_argument("emit_outputs: no rows to write");
  }
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) {
    throw std::runtime_error("emit_outputs: cannot create directory '" +
                             cfg.out_dir + "': " + ec.message());
  }
  const fs::path dir(cfg.out_dir);
  write_results_csv(result.rows, (dir / "results.csv").string());
  write_slopes_csv(result.slopes, (dir / "slopes.csv").string());
  write_w2_svg(result.rows, (dir / "figure1.svg").string());
  if (cfg.experiment == ExperimentKind::Figure1) {
    write_dataset_csv(figure1_dataset(cfg), (dir / "dataset.csv").string());
  }
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::Figure1: return run_figure1(cfg);
    case ExperimentKind::OrderStudy: return run_order_study(cfg);
    case ExperimentKind::SelfTest:
      throw std::invalid_argument("run_experiment: self_test has no rows; "
                                  "call self_test() instead");
  }
  throw std::logic_error("run_experiment: bad experiment");
}

}  // namespace diffbench
