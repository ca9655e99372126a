// Experiment configuration and orchestration: the logistic-regression study
// (figure1), the Gaussian convergence-order study, CSV/SVG emission and the
// self-test entry point.
#pragma once

#include "diffbench/metrics.hpp"
#include "diffbench/oracles.hpp"
#include "diffbench/samplers.hpp"
#include "diffbench/targets.hpp"

#include <optional>
#include <string>
#include <vector>

namespace diffbench {

enum class ExperimentKind { Figure1, OrderStudy, SelfTest };

const char* experiment_name(ExperimentKind k);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::Figure1;
  std::vector<double> lambda_list = {10.0, 50.0, 100.0};
  int d = 2;
  int n_data = 100;
  double sigma2 = 100.0;
  double T = 10.0;
  std::vector<double> h_list = {0.4, 0.2, 0.1, 0.05, 0.025};
  std::vector<SchemeKind> schemes = {SchemeKind::EM, SchemeKind::EI,
                                     SchemeKind::REM, SchemeKind::REI,
                                     SchemeKind::SO};
  int n_traj = 2000;
  int n_reference = 10000;
  int mc_particles = 10000;
  CorruptionSpec corruption;
  std::uint64_t master_seed = 20250115;
  std::string out_dir = "out";
  // Wall-clock readings make the CSV non-reproducible; off by default so two
  // runs with one seed emit identical bytes.
  bool record_wall_ms = false;
  int threads = 0;  // 0 = DIFFBENCH_THREADS / hardware
};

// Unset fields fall back to the config file / defaults.
struct CliOverrides {
  std::optional<ExperimentKind> experiment;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::vector<double>> h_list;
  std::optional<std::vector<double>> lambda_list;
  std::optional<std::vector<SchemeKind>> schemes;
  std::optional<int> n_traj;
};

// Flat key-value config (TOML-compatible subset; keys match the
// ExperimentConfig field names, corruption radii as corruption.eps_*).
// An empty path or empty file yields the defaults above.  Unknown keys and
// invariant violations are rejected with a per-field message.
ExperimentConfig parse_config(const std::string& path,
                              const CliOverrides& overrides);

struct ResultRow {
  std::string experiment;
  std::string scheme;
  double lambda = 0.0;  // 0 for the Gaussian order study
  double h = 0.0;
  int N = 0;
  int n_traj = 0;
  std::uint64_t seed = 0;
  double w2_dim1 = 0.0;
  double w2_sliced = 0.0;
  std::optional<double> w2_gauss;  // only for exact-law rows
  double wall_ms = 0.0;
  std::uint64_t oracle_calls = 0;
};

struct SlopeRow {
  std::string scheme;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int n_used = 0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<SlopeRow> slopes;
};

// Logistic-posterior study: per lambda, one shared dataset, MALA
// ground-truth samples, one MC score oracle shared by every scheme, then a
// (scheme, h) grid of sampling runs scored by first-dimension and sliced W2.
// A cell whose batch fails yields a NaN-valued error row instead of
// aborting the run.
ExperimentResult run_figure1(const ExperimentConfig& cfg);

// Gaussian-target order study with exact analytic oracles: EM/EI/SO through
// the closed-form pushforward laws (zero MC error), REM/REI through sampling
// batches, then per-scheme log-log order fits with the initialization floor.
ExperimentResult run_order_study(const ExperimentConfig& cfg);

// Writes results.csv, slopes.csv and figure1.svg under cfg.out_dir (plus
// dataset.csv for the logistic study).  Rejects empty input before touching
// any file; identical inputs produce byte-identical outputs.
void emit_outputs(const ExperimentResult& result, const ExperimentConfig& cfg);

// Runs every module's invariant suite and prints one line per check.
// Returns the number of failed checks (0 = all good).
int self_test(const ExperimentConfig& cfg);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// CSV helpers (schema: experiment,scheme,lambda,h,N,n_traj,seed,w2_dim1,
// w2_sliced,w2_gauss,wall_ms,oracle_calls; w2_gauss blank when undefined).
void write_results_csv(const std::vector<ResultRow>& rows,
                       const std::string& path);
std::vector<ResultRow> read_results_csv(const std::string& path);
void write_slopes_csv(const std::vector<SlopeRow>& slopes,
                      const std::string& path);

// The number with the shortest round-trip decimal representation.
std::string format_double(double v);

namespace selfcheck {
// Exact 1-d W2 by exhaustive assignment (n <= 8); the independent oracle for
// the sort-based path.
double w2_1d_bruteforce(std::vector<double> a, std::vector<double> b);
}  // namespace selfcheck

}  // namespace diffbench
