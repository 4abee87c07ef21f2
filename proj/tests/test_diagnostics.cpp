#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "helpers.hpp"

#include "damc/diagnostics.hpp"
#include "damc/stats.hpp"

using namespace damc;

namespace {

std::vector<double> ar1(double phi, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> x(n);
  double v = z(rng) / std::sqrt(1 - phi * phi);
  for (auto& e : x) {
    v = phi * v + z(rng);
    e = v;
  }
  return x;
}

// Direct O(n L) autocorrelation with the same normalization.
double acf_direct(const std::vector<double>& x, std::size_t lag) {
  const double mu = testing_util::mean(x);
  double c0 = 0.0, cl = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) c0 += (x[i] - mu) * (x[i] - mu);
  for (std::size_t i = 0; i + lag < x.size(); ++i) cl += (x[i] - mu) * (x[i + lag] - mu);
  return cl / c0;
}

double phi_bar(double s) { return 0.5 * std::erfc(s / std::numbers::sqrt2); }

}  // namespace

TEST_CASE("autocorrelation via FFT matches the direct sum") {
  const auto x = ar1(0.7, 5000, 1);
  const auto rho = autocorrelation(x, 20);
  CHECK(rho[0] == doctest::Approx(1.0));
  for (std::size_t l = 1; l <= 20; ++l) CHECK(rho[l] == doctest::Approx(acf_direct(x, l)).epsilon(1e-10));
}

TEST_CASE("inefficiency factor: iid, AR(1), antithetic, constant") {
  const auto iid = ar1(0.0, 100000, 2);
  CHECK(std::abs(inefficiency_factor(iid).value - 1.0) < 0.05);

  std::vector<double> ifs;
  for (std::uint64_t s = 0; s < 5; ++s) ifs.push_back(inefficiency_factor(ar1(0.9, 100000, 10 + s)).value);
  for (double v : ifs) CHECK(std::abs(v - 19.0) < 0.15 * 19.0);

  std::vector<double> alt(1000);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = i % 2 == 0 ? 1.0 : -1.0;
  const InefficiencyFactor a = inefficiency_factor(alt);
  CHECK(a.value == 1.0);
  CHECK(a.raw < 1.0);
  CHECK(a.warning == IfWarning::antithetic);

  const std::vector<double> flat(500, 3.0);
  const InefficiencyFactor c = inefficiency_factor(flat);
  CHECK(std::isinf(c.value));
  CHECK(c.warning == IfWarning::constant_chain);

  CHECK_THROWS_AS(inefficiency_factor(std::vector<double>(50, 1.0)), ConfigError);
}

TEST_CASE("effective draws and relative efficiency") {
  CHECK(effective_draws(1000, 1.0, 1000) == 1.0);
  CHECK(effective_draws(1000, 2.0, 400) == doctest::Approx(0.5 * effective_draws(1000, 2.0, 200)));
  const double ed_mh = effective_draws(5000, 10.0, 5000.0 * 20000);
  CHECK(relative_efficiency(ed_mh, ed_mh) == 1.0);
  CHECK(relative_efficiency(effective_draws(5000, 10.0, 2500.0 * 20000), ed_mh) == doctest::Approx(2.0));
  CHECK_THROWS_AS(effective_draws(10, 0.5, 1), ConfigError);
  CHECK_THROWS_AS(effective_draws(10, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(relative_efficiency(1.0, 0.0), ConfigError);
}

TEST_CASE("evaluation-count closed forms") {
  EvalCostInputs in;
  in.algorithm = Algorithm::mh;
  in.n = 1000;
  in.n_iters = 100;
  CHECK(eval_cost_model(in).sampling == 100000);
  CHECK(eval_cost_model(in).init == 1000);

  in.algorithm = Algorithm::da_mh;
  in.K = 10;
  in.m = 50;
  in.full_evals = 20;
  CHECK(eval_cost_model(in).sampling == 100 * 60 + 20 * 1000);
  CHECK(eval_cost_model(in).sampling == 26000);
  in.K = 0;
  CHECK(eval_cost_model(in).sampling == 100 * 50 + 20 * 1000);
  in.refreshes = 3;
  in.n_exact = 40;
  CHECK(eval_cost_model(in).sampling == 103 * (50 + 40) + 20 * 960);

  in = EvalCostInputs{};
  in.algorithm = Algorithm::bpmmh;
  in.n = 1000;
  in.n_iters = 100;
  in.K = 10;
  in.m = 50;
  CHECK(eval_cost_model(in).sampling == 100 * 60);

  // Post-training DA-BPMMH with a linear surrogate: stage 1 K1 + m + 1, stage 2 adds K.
  in.algorithm = Algorithm::da_bpmmh;
  in.K1 = 5;
  in.prediction_cost = 1;
  in.full_evals = 30;
  in.n_train = 0;
  CHECK(eval_cost_model(in).sampling == 100 * (5 + 50 + 1) + 30 * 10);
  in.n_iters = 150;
  in.n_train = 50;
  const EvalCost c = eval_cost_model(in);
  CHECK(c.training == 50 * (5 + 10 + 50) + 1);
  CHECK(c.init == 65);
  CHECK(c.total() == 65 + 50 * 65 + 1 + 100 * 56 + 300);
}

TEST_CASE("CPU model: exact medians and outlier robustness") {
  CostLedger led;
  led.n_iters = 1000;
  led.full_evals = 150;
  led.stage1_times.assign(1000, 2e-4);
  led.stage2_times.assign(150, 5e-3);
  led.full_eval_times.assign(5, 6e-3);
  CpuCost c = cpu_cost_model(led, Algorithm::da_mh);
  CHECK(c.algorithm == doctest::Approx(1000 * 2e-4 + 150 * 5e-3));
  CHECK(c.mh_baseline == doctest::Approx(1000 * 6e-3));
  CHECK(cpu_cost_model(led, Algorithm::mh).algorithm == doctest::Approx(1000 * 5e-3));

  Rng rng(3);
  std::uniform_real_distribution<double> jitter(0.9, 1.1);
  for (auto& t : led.stage1_times) t *= jitter(rng);
  for (auto& t : led.stage2_times) t *= jitter(rng);
  const double base = cpu_cost_model(led, Algorithm::da_mh).algorithm;
  led.stage1_times[17] *= 100.0;
  led.stage2_times[3] *= 100.0;
  const double shifted = cpu_cost_model(led, Algorithm::da_mh).algorithm;
  CHECK(std::abs(shifted - base) < 0.01 * base);

  CostLedger empty;
  empty.n_iters = 10;
  CHECK_THROWS_AS(cpu_cost_model(empty, Algorithm::da_mh), ConfigError);
}

TEST_CASE("expected second-stage acceptance closed form") {
  CHECK(expected_alpha2(0.0) == 1.0);
  // exp(1/2) (1 - Phi(1)) + 1/2 from erfc directly.
  CHECK(expected_alpha2(1.0) == doctest::Approx(std::exp(0.5) * phi_bar(1.0) + 0.5).epsilon(1e-14));
  CHECK(expected_alpha2(1.0) == doctest::Approx(0.761578).epsilon(1e-6));
  const double big = expected_alpha2(40.0);
  CHECK(big > 0.5);
  CHECK(big < 0.52);
  CHECK(big - 0.5 == doctest::Approx(1.0 / (40.0 * std::sqrt(2 * std::numbers::pi))).epsilon(1e-3));
  // Continuity across the branch switch at 8.
  CHECK(scaled_normal_tail(8.0 - 1e-9) == doctest::Approx(scaled_normal_tail(8.0 + 1e-9)).epsilon(1e-9));
  CHECK_THROWS_AS(expected_alpha2(-1.0), ConfigError);

  double prev = 2.0;
  for (int i = 0; i <= 5000; ++i) {
    const double v = expected_alpha2(i * 0.01);
    CHECK(v < prev);
    CHECK(v > 0.5);
    CHECK(v <= 1.0);
    prev = v;
  }
}

TEST_CASE("expected second-stage acceptance derivative and the bracket maximum") {
  for (const double s : {0.5, 1.0, 2.0}) {
    const double h = 1e-5;
    const double fd = (expected_alpha2(s + h) - expected_alpha2(s - h)) / (2 * h);
    const double corrected = std::exp(0.5 * s * s) * (s * phi_bar(s)) - 1.0 / std::sqrt(2 * std::numbers::pi);
    CHECK(std::abs(fd - corrected) < 1e-6);
    CHECK(std::abs(expected_alpha2_derivative(s) - corrected) < 1e-12);
  }
  double best = -1e300;
  for (int i = 0; i <= 100000; ++i) {
    const double s = i * 1e-4;
    best = std::max(best, s - s * (1.0 - phi_bar(s)) - 1.0 / std::sqrt(2 * std::numbers::pi));
  }
  CHECK(std::abs(best + 0.23) <= 0.01);
}

TEST_CASE("normality check") {
  Rng rng(5);
  std::normal_distribution<double> z;
  std::vector<double> normal(5000), lognormal(5000);
  for (auto& v : normal) v = z(rng);
  for (auto& v : lognormal) v = std::exp(z(rng));
  CHECK(normality_check(normal).pass);
  const NormalityCheck bad = normality_check(lognormal);
  CHECK(!bad.pass);
  CHECK(bad.statistic > 0.2);
  CHECK_THROWS_AS(normality_check(std::vector<double>(999, 0.0)), ConfigError);
}

TEST_CASE("KS machinery against reference values") {
  // Asymptotic Kolmogorov tail at the 5% and 1% critical points.
  CHECK(stats::kolmogorov_tail(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(stats::kolmogorov_tail(1.6276) == doctest::Approx(0.01).epsilon(1e-3));
  const std::vector<double> a{0.1, 0.4, 0.7};
  const std::vector<double> b{0.2, 0.3, 0.9, 1.5};
  // ECDF gap at x = 0.7: 3/3 - 2/4
  CHECK(stats::ks_two_sample(a, b).statistic == doctest::Approx(0.5));
  CHECK(stats::normal_cdf(1.96) == doctest::Approx(0.9750021).epsilon(1e-7));
}

TEST_CASE("KDE, overlap, Spearman") {
  Rng rng(9);
  std::normal_distribution<double> z;
  std::vector<double> a(4000), b(4000), c(4000);
  for (auto& v : a) v = z(rng);
  for (auto& v : b) v = z(rng);
  for (auto& v : c) v = z(rng) + 3.0;
  const auto grid = stats::common_grid(a, b);
  const auto fa = stats::kde(a, grid, stats::silverman_bandwidth(a));
  const auto fb = stats::kde(b, grid, stats::silverman_bandwidth(b));
  CHECK(stats::overlap_coefficient(fa, fa, grid) == doctest::Approx(1.0).epsilon(2e-3));
  CHECK(stats::overlap_coefficient(fa, fb, grid) > 0.95);
  const auto grid2 = stats::common_grid(a, c);
  const double ov = stats::overlap_coefficient(stats::kde(a, grid2, stats::silverman_bandwidth(a)),
                                               stats::kde(c, grid2, stats::silverman_bandwidth(c)), grid2);
  // Two unit normals 3 apart overlap by 2 Phi(-1.5).
  CHECK(ov == doctest::Approx(2.0 * phi_bar(1.5)).epsilon(0.1));
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{5, 6, 7, 8, 7};
  CHECK(stats::spearman(x, y) == doctest::Approx(0.8207826816681233).epsilon(1e-9));
}

TEST_CASE("posterior agreement: self and independent chains") {
  const auto x = ar1(0.5, 20000, 21);
  const auto y = ar1(0.5, 20000, 22);
  Matrix a(20000, 1), b(20000, 1);
  for (Eigen::Index i = 0; i < 20000; ++i) {
    a(i, 0) = x[static_cast<std::size_t>(i)];
    b(i, 0) = y[static_cast<std::size_t>(i)];
  }
  const auto self = posterior_agreement(a, a);
  CHECK(self[0].mean_diff_pooled_sd == 0.0);
  CHECK(self[0].ks_distance == 0.0);
  const auto two = posterior_agreement(a, b);
  CHECK(std::abs(two[0].mean_diff_mcse) < 3.0);
  CHECK(two[0].ks_p_value > 0.01);
  CHECK(two[0].overlap > 0.95);
}

TEST_CASE("report JSON: stable keys, nulls, round trip") {
  DiagnosticsReport r;
  r.if_per_param = {1.5, 2.25};
  r.if_max = 2.25;
  r.ed_evals = 1e-5;
  r.alpha1 = 0.23;
  r.fulleval = 77;
  r.n_iters = 1000;
  r.eval_count = 123456;
  const std::string text = to_json(r);
  for (const char* key : {"\"if\"", "\"ed_evals\"", "\"red_evals\"", "\"alpha1\"",
                          "\"alpha2_cond\"", "\"sigma_r_bar\"", "\"fulleval\"", "\"n_iters\""})
    CHECK(text.find(key) != std::string::npos);
  CHECK(text.find("\"alpha2_cond\": null") != std::string::npos);
  const DiagnosticsReport back = report_from_json(text);
  CHECK(back.if_per_param == r.if_per_param);
  CHECK(back.ed_evals == r.ed_evals);
  CHECK(back.fulleval == 77);
  CHECK(!back.alpha2_cond.has_value());
  CHECK(to_json(back) == text);
  TimingReport t;
  t.ed_time = 12.5;
  const std::string timing = to_json(t);
  CHECK(timing.find("\"ed_time\"") != std::string::npos);
  CHECK(timing.find("\"red_time\": null") != std::string::npos);
}
