#pragma once

#include <cmath>
#include <vector>

#include "damc/core.hpp"
#include "damc/dataset.hpp"

namespace testing_util {

inline damc::Dataset logistic_data(std::size_t n, std::size_t p, double intercept, std::uint64_t seed,
                                   double slope = 0.5) {
  damc::SyntheticSpec spec;
  spec.n = n;
  spec.p = p;
  spec.true_beta = damc::Vector::Constant(static_cast<Eigen::Index>(p), slope);
  spec.true_beta[0] = intercept;
  spec.seed = seed;
  return damc::generate_synthetic(spec);
}

/// Rows with varying covariates and one shared response value.
inline damc::Dataset constant_response_data(std::size_t n, std::size_t p, double y, std::uint64_t seed) {
  damc::Rng rng(seed);
  std::normal_distribution<double> z;
  damc::Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < x.cols(); ++j) x(i, j) = z(rng);
  }
  return damc::Dataset(x, damc::Vector::Constant(static_cast<Eigen::Index>(n), y));
}

inline std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

/// Batch-means standard error of the mean.
inline double batch_se(const std::vector<double>& x, std::size_t batches = 50) {
  const std::size_t len = x.size() / batches;
  std::vector<double> means(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < len; ++i) means[b] += x[b * len + i];
    means[b] /= static_cast<double>(len);
  }
  double mu = 0.0;
  for (double m : means) mu += m / static_cast<double>(batches);
  double var = 0.0;
  for (double m : means) var += (m - mu) * (m - mu) / static_cast<double>(batches - 1);
  return std::sqrt(var / static_cast<double>(batches));
}

inline double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

}  // namespace testing_util
