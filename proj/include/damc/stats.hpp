#pragma once

#include <span>
#include <vector>

namespace damc::stats {

double mean(std::span<const double> x);
/// Sample variance with divisor n - 1.
double variance(std::span<const double> x);
double median(std::span<const double> x);
/// Linear-interpolation quantile, q in [0, 1].
double quantile(std::span<const double> x, double q);

double normal_cdf(double x);
double normal_pdf(double x);

/// Asymptotic Kolmogorov distribution tail P(K > lambda).
double kolmogorov_tail(double lambda);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample test against N(0, 1).
KsResult ks_normal(std::span<const double> x);

/// Two-sample test. The p-value uses the supplied effective sizes (for
/// autocorrelated chains pass N / IF); zero means the raw sizes.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b, double n_eff_a = 0.0,
                       double n_eff_b = 0.0);

/// Silverman's rule: 0.9 min(sd, IQR / 1.34) n^(-1/5).
double silverman_bandwidth(std::span<const double> x);

/// Gaussian-kernel density estimate on the given grid.
std::vector<double> kde(std::span<const double> x, std::span<const double> grid, double bandwidth);

/// Evenly spaced grid covering both samples with a margin of 3 bandwidths.
std::vector<double> common_grid(std::span<const double> a, std::span<const double> b, std::size_t points = 512);

/// Integral of min(f, g) by the trapezoid rule on a uniform grid.
double overlap_coefficient(std::span<const double> f, std::span<const double> g, std::span<const double> grid);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace damc::stats
