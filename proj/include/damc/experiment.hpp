#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "damc/config.hpp"
#include "damc/diagnostics.hpp"
#include "damc/samplers.hpp"
#include "damc/surrogate.hpp"

namespace damc {

Dataset load_dataset(const DataConfig& data);

/// Resolved sizes of one run. Fractions are taken of n; m is rounded to a
/// multiple of G (at least max(G, 2)).
struct RunSizes {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t n_exact = 0;
  std::size_t K = 0;
  std::size_t K1 = 0;
  std::size_t m = 0;
  std::size_t G = 1;
  std::size_t prediction_cost = 0;
  std::uint64_t n_train = 0;
  std::uint64_t burn_in = 0;  // post-training draws discarded
};

std::size_t m_from_fraction(double fraction, std::size_t n, std::size_t G);

/// Smallest m on a doubling grid (multiples of G) whose mean sigma2_hat over
/// `reps` draws of u at theta stays at or below the target.
std::size_t calibrate_m(const ControlVariate& cv, const Theta& theta, std::size_t G, double target, Rng& rng,
                        EvalLedger* ledger, int reps = 10);

struct RunResult {
  RunConfig config;
  RunSizes sizes;
  std::uint64_t data_fingerprint = 0;
  Theta theta_star;
  double final_step_scale = 0.0;
  std::uint64_t setup_evals = 0;
  Matrix draws;  // post-burn-in draws used for inference, one row per iteration
  std::vector<double> alpha2_values;  // conditional alpha2, post-training
  std::vector<double> sigma_r_values;  // post-burn-in
  DiagnosticsReport report;
  TimingReport timing;
  CostLedger ledger;
  EvalCost closed_form;
  std::optional<SurrogateModel> surrogate;
  std::string chain_csv;
};

/// Runs one chain end to end in-process. Deterministic given the config
/// (except for the timing fields).
RunResult execute_run(const RunConfig& config, const Dataset& data);

/// Fills red_* of `result` against `baseline` (both cost models).
void apply_baseline(RunResult& result, const RunResult& baseline);

/// Writes chain.csv, report.json, timing.json, manifest.json (and
/// surrogate.bin) into dir.
void write_run(const RunResult& result, const std::filesystem::path& dir);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> output_dir;
  unsigned jobs = 1;
};

/// Executes every run (up to `jobs` concurrently), writes the per-run
/// artifacts and, with a baseline, comparison.csv and density_grid.csv.
std::vector<RunResult> run_experiment(ExperimentConfig config, const RunOptions& options);

std::string comparison_csv(const std::vector<RunResult>& runs, const RunResult* baseline);
std::string density_grid_csv(const std::vector<RunResult>& runs, std::size_t points = 256);

/// Parsed artifacts of a run directory.
struct LoadedRun {
  std::filesystem::path dir;
  std::string name;
  std::string algorithm;
  std::uint64_t fingerprint = 0;
  Matrix draws;
  DiagnosticsReport report;
  std::optional<double> ed_time;
};

LoadedRun load_run(const std::filesystem::path& dir);

/// RED table (both cost models) and posterior agreement of every run against
/// the first. Throws ConfigError for mismatched datasets.
std::string compare_runs(const std::vector<std::filesystem::path>& dirs);

struct AuditCheck {
  std::string name;
  bool ok = false;
  std::string detail;
};

/// Recomputes the report numbers from chain.csv and the manifest counters.
std::vector<AuditCheck> audit_run(const std::filesystem::path& dir);

}  // namespace damc
