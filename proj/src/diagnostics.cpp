#include "damc/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include "json.hpp"

#include "damc/stats.hpp"

namespace damc {

namespace {

// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

std::vector<double> autocorrelation(std::span<const double> chain, std::size_t max_lag) {
  const std::size_t n = chain.size();
  if (n < 2) throw ConfigError("autocorrelation: need at least two draws");
  max_lag = std::min(max_lag, n - 1);
  const double mu = stats::mean(chain);
  const std::size_t size = next_pow2(2 * n);
  const std::size_t bins = size / 2 + 1;

  double* in = fftw_alloc_real(size);
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan forward;
  fftw_plan backward;
  {
    std::lock_guard lock(fftw_planner_mutex());
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(size), in, out, FFTW_ESTIMATE);
    backward = fftw_plan_dft_c2r_1d(static_cast<int>(size), out, in, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < size; ++i) in[i] = i < n ? chain[i] - mu : 0.0;
  fftw_execute(forward);
  for (std::size_t k = 0; k < bins; ++k) {
    out[k][0] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    out[k][1] = 0.0;
  }
  fftw_execute(backward);

  std::vector<double> rho(max_lag + 1, 0.0);
  const double c0 = in[0];
  if (c0 > 0.0)
    for (std::size_t l = 0; l <= max_lag; ++l) rho[l] = in[l] / c0;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
  }
  fftw_free(in);
  fftw_free(out);
  return rho;
}

InefficiencyFactor inefficiency_factor(std::span<const double> chain) {
  if (chain.size() < 100) throw ConfigError("inefficiency_factor: need at least 100 draws");
  InefficiencyFactor out;
  const auto [lo, hi] = std::minmax_element(chain.begin(), chain.end());
  if (*lo == *hi) {
    out.value = out.raw = std::numeric_limits<double>::infinity();
    out.warning = IfWarning::constant_chain;
    return out;
  }
  const std::vector<double> rho = autocorrelation(chain, chain.size() - 1);
  double sum = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  std::size_t pairs = 0;
  for (std::size_t k = 0; 2 * k + 1 < rho.size(); ++k) {
    double gamma = rho[2 * k] + rho[2 * k + 1];
    if (gamma <= 0.0) break;
    gamma = std::min(gamma, previous);
    previous = gamma;
    sum += gamma;
    ++pairs;
  }
  out.raw = pairs == 0 ? 1.0 + 2.0 * rho[1] : -1.0 + 2.0 * sum;
  out.value = std::max(1.0, out.raw);
  if (out.raw < 1.0) out.warning = IfWarning::antithetic;
  return out;
}

double effective_draws(double n, double inefficiency, double cost) {
  if (!(cost > 0.0)) throw ConfigError("effective_draws: cost must be > 0");
  if (!(inefficiency >= 1.0)) throw ConfigError("effective_draws: IF must be >= 1");
  return n / (inefficiency * cost);
}

double relative_efficiency(double ed_algorithm, double ed_mh) {
  if (!(ed_mh > 0.0)) throw ConfigError("relative_efficiency: baseline ED must be > 0");
  return ed_algorithm / ed_mh;
}

namespace {

double median_or_zero(const std::vector<double>& x) { return x.empty() ? 0.0 : stats::median(x); }

}  // namespace

CpuCost cpu_cost_model(const CostLedger& ledger, Algorithm algorithm) {
  const auto N = static_cast<double>(ledger.n_iters);
  const auto F = static_cast<double>(ledger.full_evals);
  CpuCost cost;
  const std::vector<double>& full = ledger.full_eval_times.empty() ? ledger.stage2_times : ledger.full_eval_times;
  if (full.empty()) throw ConfigError("cpu_cost_model: no full-evaluation timings collected");
  cost.mh_baseline = N * stats::median(full);
  switch (algorithm) {
    case Algorithm::mh:
      cost.algorithm = N * median_or_zero(ledger.stage2_times);
      break;
    case Algorithm::da_mh:
      cost.algorithm = N * median_or_zero(ledger.stage1_times) + F * median_or_zero(ledger.stage2_times);
      break;
    case Algorithm::pmmh:
    case Algorithm::bpmmh:
      cost.algorithm = N * median_or_zero(ledger.stage1_times);
      break;
    case Algorithm::da_pmmh:
    case Algorithm::da_bpmmh: {
      const auto train = static_cast<double>(ledger.n_train);
      cost.algorithm = train * median_or_zero(ledger.training_times) + ledger.fit_seconds +
                       (N - train) * median_or_zero(ledger.stage1_times) + F * median_or_zero(ledger.stage2_times);
      break;
    }
  }
  return cost;
}

EvalCost eval_cost_model(const EvalCostInputs& in) {
  EvalCost c;
  const std::uint64_t E = in.n_exact;
  const std::uint64_t S = in.n - in.n_exact;
  const std::uint64_t stage1 = in.K + in.m + E;
  switch (in.algorithm) {
    case Algorithm::mh:
      c.init = in.n;
      c.sampling = in.n_iters * in.n;
      break;
    case Algorithm::da_mh:
      c.init = stage1 + S;
      c.sampling = (in.n_iters + in.refreshes) * stage1 + in.full_evals * S;
      break;
    case Algorithm::pmmh:
    case Algorithm::bpmmh:
      c.init = stage1;
      c.sampling = in.n_iters * stage1;
      break;
    case Algorithm::da_pmmh:
    case Algorithm::da_bpmmh: {
      const std::uint64_t training_step = in.K1 + in.K + in.m + E;
      c.init = training_step;
      c.training = in.n_train * training_step + (in.n_train < in.n_iters ? in.prediction_cost : 0);
      c.sampling = (in.n_iters - in.n_train) * (in.K1 + in.m + E + in.prediction_cost) + in.full_evals * in.K;
      break;
    }
  }
  return c;
}

double scaled_normal_tail(double s) {
  if (s <= 8.0) return std::exp(0.5 * s * s) * 0.5 * std::erfc(s / std::numbers::sqrt2);
  // Mills ratio R(s) = 1/(s + 1/(s + 2/(s + 3/(s + ...)))), evaluated bottom-up.
  double tail = s;
  for (int k = 200; k >= 1; --k) tail = s + k / tail;
  return 1.0 / (tail * std::sqrt(2.0 * std::numbers::pi));
}

double expected_alpha2(double sigma_r) {
  if (!(sigma_r >= 0.0) || !std::isfinite(sigma_r)) throw ConfigError("expected_alpha2: sigma_R must be finite and >= 0");
  return scaled_normal_tail(sigma_r) + 0.5;
}

double expected_alpha2_derivative(double sigma_r) {
  return sigma_r * scaled_normal_tail(sigma_r) - 1.0 / std::sqrt(2.0 * std::numbers::pi);
}

NormalityCheck normality_check(std::span<const double> samples, double significance) {
  if (samples.size() < 1000) throw ConfigError("normality_check: need at least 1000 replicates");
  const stats::KsResult ks = stats::ks_normal(samples);
  return {ks.statistic, ks.p_value, ks.p_value >= significance};
}

std::vector<ParameterAgreement> posterior_agreement(const Matrix& chain_a, const Matrix& chain_b) {
  if (chain_a.cols() != chain_b.cols()) throw ConfigError("posterior_agreement: dimension mismatch");
  std::vector<ParameterAgreement> out(static_cast<std::size_t>(chain_a.cols()));
  for (Eigen::Index j = 0; j < chain_a.cols(); ++j) {
    const Vector a = chain_a.col(j);
    const Vector b = chain_b.col(j);
    const std::span<const double> sa(a.data(), static_cast<std::size_t>(a.size()));
    const std::span<const double> sb(b.data(), static_cast<std::size_t>(b.size()));
    const double va = stats::variance(sa);
    const double vb = stats::variance(sb);
    const double diff = stats::mean(sa) - stats::mean(sb);
    const double if_a = inefficiency_factor(sa).value;
    const double if_b = inefficiency_factor(sb).value;
    const auto na = static_cast<double>(a.size());
    const auto nb = static_cast<double>(b.size());
    ParameterAgreement& r = out[static_cast<std::size_t>(j)];
    const double pooled = std::sqrt(0.5 * (va + vb));
    r.mean_diff_pooled_sd = pooled > 0.0 ? diff / pooled : 0.0;
    const double mcse = std::sqrt(va * if_a / na + vb * if_b / nb);
    r.mean_diff_mcse = mcse > 0.0 && std::isfinite(mcse) ? diff / mcse : 0.0;
    const stats::KsResult ks = stats::ks_two_sample(sa, sb, std::isfinite(if_a) ? na / if_a : na,
                                                    std::isfinite(if_b) ? nb / if_b : nb);
    r.ks_distance = ks.statistic;
    r.ks_p_value = ks.p_value;
    if (va > 0.0 && vb > 0.0) {
      const auto grid = stats::common_grid(sa, sb);
      const auto fa = stats::kde(sa, grid, stats::silverman_bandwidth(sa));
      const auto fb = stats::kde(sb, grid, stats::silverman_bandwidth(sb));
      r.overlap = stats::overlap_coefficient(fa, fb, grid);
    } else {
      r.overlap = diff == 0.0 ? 1.0 : 0.0;
    }
  }
  return out;
}

namespace {

using nlohmann::json;

json optional_value(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

// JSON has no infinity; a constant chain's IF is written as null.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string to_json(const DiagnosticsReport& r) {
  json j;
  json ifs = json::array();
  for (double v : r.if_per_param) ifs.push_back(finite_or_null(v));
  j["if"] = ifs;
  j["if_max"] = finite_or_null(r.if_max);
  j["ed_evals"] = r.ed_evals;
  j["red_evals"] = optional_value(r.red_evals);
  j["red_evals_mean"] = optional_value(r.red_evals_mean);
  j["alpha1"] = r.alpha1;
  j["alpha2_cond"] = optional_value(r.alpha2_cond);
  j["sigma_r_bar"] = optional_value(r.sigma_r_bar);
  j["fulleval"] = r.fulleval;
  j["n_iters"] = r.n_iters;
  j["n_used"] = r.n_used;
  j["eval_count"] = r.eval_count;
  j["posterior_mean"] = r.posterior_mean;
  j["posterior_sd"] = r.posterior_sd;
  j["surrogate_extrapolations"] = r.surrogate_extrapolations;
  return j.dump(2) + "\n";
}

std::string to_json(const TimingReport& r) {
  json j;
  j["cpu_algorithm"] = r.cpu_algorithm;
  j["cpu_mh_baseline"] = r.cpu_mh_baseline;
  j["ed_time"] = r.ed_time;
  j["red_time"] = optional_value(r.red_time);
  j["red_time_mean"] = optional_value(r.red_time_mean);
  j["fit_cost_T"] = r.fit_cost_T;
  j["fit_evals"] = r.fit_evals;
  j["ed_evals_incl_fit"] = r.ed_evals_incl_fit;
  j["wall_seconds"] = r.wall_seconds;
  return j.dump(2) + "\n";
}

DiagnosticsReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  DiagnosticsReport r;
  for (const auto& v : j.at("if"))
    r.if_per_param.push_back(v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>());
  r.if_max = j.at("if_max").is_null() ? std::numeric_limits<double>::infinity() : j.at("if_max").get<double>();
  r.ed_evals = j.at("ed_evals").get<double>();
  r.red_evals = read_optional(j, "red_evals");
  r.red_evals_mean = read_optional(j, "red_evals_mean");
  r.alpha1 = j.at("alpha1").get<double>();
  r.alpha2_cond = read_optional(j, "alpha2_cond");
  r.sigma_r_bar = read_optional(j, "sigma_r_bar");
  r.fulleval = j.at("fulleval").get<std::uint64_t>();
  r.n_iters = j.at("n_iters").get<std::uint64_t>();
  r.n_used = j.value("n_used", std::uint64_t{0});
  r.eval_count = j.value("eval_count", std::uint64_t{0});
  r.posterior_mean = j.value("posterior_mean", std::vector<double>{});
  r.posterior_sd = j.value("posterior_sd", std::vector<double>{});
  r.surrogate_extrapolations = j.value("surrogate_extrapolations", std::uint64_t{0});
  return r;
}

}  // namespace damc
