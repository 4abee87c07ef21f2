#pragma once

#include <span>
#include <vector>

#include "damc/core.hpp"
#include "damc/dataset.hpp"
#include "damc/model.hpp"

// Data-parallel hot loops. The default namespace holds the OpenMP versions;
// kernels::serial keeps straightforward single-threaded references that the
// tests and the benchmark compare against. Parallel reductions go through
// fixed-size chunks summed in chunk order, so results do not depend on the
// thread count.

namespace damc::kernels {

inline constexpr std::size_t kChunk = 4096;

/// Sum over all rows of h(x_k' theta, y_k).
double log_density_sum(const PredictorModel& model, const Dataset& data, const Theta& theta);

/// Sum over the listed rows.
double log_density_sum(const PredictorModel& model, const Dataset& data, const Theta& theta,
                       std::span<const std::size_t> rows);

/// Gradient and Hessian of sum_k h(x_k' theta, y_k) over all rows.
void log_density_gradient_hessian(const PredictorModel& model, const Dataset& data,
                                  const Theta& theta, Vector& gradient, Matrix& hessian);

/// Nearest centroid (squared Euclidean) for every row of `points`. Ties go to
/// the lower centroid index.
void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> assignment,
                    std::span<double> distance2);

/// Per-cluster first and second moments of deviations from the centroids.
void cluster_moments(const Matrix& rows_by_member, const std::vector<std::vector<std::size_t>>& members,
                     const Matrix& centroids, Matrix& dev_sums, std::vector<Matrix>& dev_outer_sums);

namespace serial {

double log_density_sum(const PredictorModel& model, const Dataset& data, const Theta& theta);
double log_density_sum(const PredictorModel& model, const Dataset& data, const Theta& theta,
                       std::span<const std::size_t> rows);
void assign_nearest(const Matrix& points, const Matrix& centroids, std::span<int> assignment,
                    std::span<double> distance2);
void cluster_moments(const Matrix& rows_by_member, const std::vector<std::vector<std::size_t>>& members,
                     const Matrix& centroids, Matrix& dev_sums, std::vector<Matrix>& dev_outer_sums);

}  // namespace serial

}  // namespace damc::kernels
