#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "damc/core.hpp"
#include "damc/samplers.hpp"

namespace damc {

enum class IfWarning { none, constant_chain, antithetic };

struct InefficiencyFactor {
  double value = 1.0;  // max(1, raw); +inf for a constant chain
  double raw = 1.0;    // truncated 1 + 2 sum rho before clamping
  IfWarning warning = IfWarning::none;
};

/// IF = 1 + 2 sum rho_l with Geyer's initial monotone sequence truncation.
/// Autocorrelations via FFT. Requires at least 100 draws.
InefficiencyFactor inefficiency_factor(std::span<const double> chain);

/// Sample autocorrelations rho_0..rho_max_lag (FFT based).
std::vector<double> autocorrelation(std::span<const double> chain, std::size_t max_lag);

double effective_draws(double n, double inefficiency, double cost);
double relative_efficiency(double ed_algorithm, double ed_mh);

/// Run counters and wall-clock samples for both cost models.
struct CostLedger {
  EvalLedger evals;                  // every charged evaluation of the N iterations, init included
  std::uint64_t n_iters = 0;         // N
  std::uint64_t n_train = 0;         // training iterations inside N
  std::uint64_t full_evals = 0;      // FullEval: stage-2 entries that cost extra work
  std::uint64_t refreshes = 0;       // DA-MH u redraws
  std::vector<double> stage1_times;
  std::vector<double> stage2_times;
  std::vector<double> training_times;   // whole-iteration times during DA-(B)PMMH training
  std::vector<double> full_eval_times;  // start-up calibration of one full log-likelihood
  double fit_seconds = 0.0;
};

struct CpuCost {
  double algorithm = 0.0;    // CPU model of the run
  double mh_baseline = 0.0;  // N x median full-evaluation time
};

/// Median-based CPU model: MH N med(s2); DA-MH N med(s1) + F med(s2);
/// (B)PMMH N med(s1); DA-(B)PMMH adds the training iterations and fit time.
CpuCost cpu_cost_model(const CostLedger& ledger, Algorithm algorithm);

struct EvalCostInputs {
  Algorithm algorithm = Algorithm::mh;
  std::uint64_t n = 0;
  std::uint64_t n_exact = 0;  // rows summed exactly in every estimate
  std::uint64_t K = 0;        // dense clusters (0 without control variates)
  std::uint64_t K1 = 0;       // first-stage clusters
  std::uint64_t m = 0;
  std::uint64_t prediction_cost = 0;
  std::uint64_t n_iters = 0;
  std::uint64_t n_train = 0;
  std::uint64_t full_evals = 0;
  std::uint64_t refreshes = 0;
};

struct EvalCost {
  std::uint64_t init = 0;      // caches at the starting point
  std::uint64_t training = 0;  // DA-(B)PMMH training iterations plus the stage-1 re-evaluation
  std::uint64_t sampling = 0;  // remaining iterations
  [[nodiscard]] std::uint64_t total() const noexcept { return init + training + sampling; }
};

/// Closed-form evaluation count. The surrogate fit (T times the cost of one
/// training iteration) is time based and reported separately.
EvalCost eval_cost_model(const EvalCostInputs& in);

/// exp(s^2/2) (1 - Phi(s)) + 1/2, stable for large s.
double expected_alpha2(double sigma_r);
/// exp(s^2/2) (1 - Phi(s)) without overflow.
double scaled_normal_tail(double s);
/// d/ds of expected_alpha2: exp(s^2/2)(s(1 - Phi(s)) - phi(s)).
double expected_alpha2_derivative(double sigma_r);

struct NormalityCheck {
  double statistic = 0.0;
  double p_value = 1.0;
  bool pass = true;
};

/// KS against N(0, 1) for already standardized replicates (at least 1000).
NormalityCheck normality_check(std::span<const double> samples, double significance = 0.01);

struct ParameterAgreement {
  double mean_diff_pooled_sd = 0.0;  // (mean_a - mean_b) / sqrt((var_a + var_b) / 2)
  double mean_diff_mcse = 0.0;       // same difference over the combined MC standard error
  double ks_distance = 0.0;
  double ks_p_value = 1.0;           // effective sizes N / IF
  double overlap = 1.0;              // KDE overlap coefficient
};

/// Columns of the draw matrices are parameters. Per-column IFs feed the MC
/// standard errors and the effective KS sizes.
std::vector<ParameterAgreement> posterior_agreement(const Matrix& chain_a, const Matrix& chain_b);

struct DiagnosticsReport {
  std::vector<double> if_per_param;
  double if_max = 1.0;
  double ed_evals = 0.0;
  std::optional<double> red_evals;       // vs the baseline, max-IF aggregation
  std::optional<double> red_evals_mean;  // mean over coordinates of per-coordinate RED
  double alpha1 = 0.0;
  std::optional<double> alpha2_cond;
  std::optional<double> sigma_r_bar;
  std::uint64_t fulleval = 0;
  std::uint64_t n_iters = 0;
  std::uint64_t n_used = 0;  // post-training, post-burn-in draws used for IF
  std::uint64_t eval_count = 0;
  std::vector<double> posterior_mean;
  std::vector<double> posterior_sd;
  std::uint64_t surrogate_extrapolations = 0;
};

struct TimingReport {
  double cpu_algorithm = 0.0;
  double cpu_mh_baseline = 0.0;
  double ed_time = 0.0;
  std::optional<double> red_time;
  std::optional<double> red_time_mean;
  double fit_cost_T = 0.0;
  double fit_evals = 0.0;  // T (K1 + K + m)
  double ed_evals_incl_fit = 0.0;
  double wall_seconds = 0.0;
};

/// JSON with shortest round-trip doubles and null for absent values.
std::string to_json(const DiagnosticsReport& report);
std::string to_json(const TimingReport& report);
DiagnosticsReport report_from_json(const std::string& text);

}  // namespace damc
