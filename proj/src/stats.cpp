#include "damc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "damc/core.hpp"

namespace damc::stats {

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double mu = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - mu) * (v - mu);
  return ss / static_cast<double>(x.size() - 1);
}

double quantile(std::span<const double> x, double q) {
  if (x.empty()) throw ConfigError("quantile of an empty sample");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

double median(std::span<const double> x) { return quantile(x, 0.5); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double kolmogorov_tail(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {

double stephens(double n_eff, double d) {
  const double rn = std::sqrt(n_eff);
  return kolmogorov_tail((rn + 0.12 + 0.11 / rn) * d);
}

}  // namespace

KsResult ks_normal(std::span<const double> x) {
  if (x.empty()) throw ConfigError("ks_normal: empty sample");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const auto n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = normal_cdf(s[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return {d, stephens(n, d)};
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b, double n_eff_a, double n_eff_b) {
  if (a.empty() || b.empty()) throw ConfigError("ks_two_sample: empty sample");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  const auto na = static_cast<double>(sa.size());
  const auto nb = static_cast<double>(sb.size());
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ea = n_eff_a > 0.0 ? n_eff_a : na;
  const double eb = n_eff_b > 0.0 ? n_eff_b : nb;
  return {d, stephens(ea * eb / (ea + eb), d)};
}

double silverman_bandwidth(std::span<const double> x) {
  if (x.size() < 2) throw ConfigError("silverman_bandwidth: need at least two points");
  const double sd = std::sqrt(variance(x));
  const double iqr = quantile(x, 0.75) - quantile(x, 0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  if (!(spread > 0.0)) spread = 1e-12;
  return 0.9 * spread * std::pow(static_cast<double>(x.size()), -0.2);
}

std::vector<double> kde(std::span<const double> x, std::span<const double> grid, double bandwidth) {
  if (x.empty() || !(bandwidth > 0.0)) throw ConfigError("kde: empty sample or non-positive bandwidth");
  std::vector<double> out(grid.size(), 0.0);
  const double norm = 1.0 / (static_cast<double>(x.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  const auto g = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < g; ++i) {
    double acc = 0.0;
    for (double v : x) {
      const double z = (grid[static_cast<std::size_t>(i)] - v) / bandwidth;
      acc += std::exp(-0.5 * z * z);
    }
    out[static_cast<std::size_t>(i)] = acc * norm;
  }
  return out;
}

std::vector<double> common_grid(std::span<const double> a, std::span<const double> b, std::size_t points) {
  const double h = std::max(silverman_bandwidth(a), silverman_bandwidth(b));
  const double lo = std::min(*std::min_element(a.begin(), a.end()), *std::min_element(b.begin(), b.end())) - 3 * h;
  const double hi = std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end())) + 3 * h;
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i)
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return grid;
}

double overlap_coefficient(std::span<const double> f, std::span<const double> g, std::span<const double> grid) {
  if (f.size() != grid.size() || g.size() != grid.size() || grid.size() < 2)
    throw ConfigError("overlap_coefficient: size mismatch");
  double total = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double left = std::min(f[i - 1], g[i - 1]);
    const double right = std::min(f[i], g[i]);
    total += 0.5 * (left + right) * (grid[i] - grid[i - 1]);
  }
  return total;
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ConfigError("spearman: need two equal-length samples");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double ma = mean(ra);
  const double mb = mean(rb);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace damc::stats
