#pragma once

#include <span>
#include <vector>

#include "damc/core.hpp"
#include "damc/dataset.hpp"

namespace damc {

struct KMeansOptions {
  int max_iterations = 50;
};

/// Partition of a response-homogeneous index set (the scope) into K clusters
/// with the per-cluster moments that make the control-variate sum O(K p^2).
/// Centroids are the member means, so dev_sums vanish up to rounding.
class ClusterModel {
 public:
  ClusterModel() = default;

  [[nodiscard]] std::size_t cluster_count() const noexcept { return counts_.size(); }
  [[nodiscard]] const Matrix& centroids() const noexcept { return centroids_; }
  [[nodiscard]] const std::vector<std::size_t>& counts() const noexcept { return counts_; }
  [[nodiscard]] const Matrix& dev_sums() const noexcept { return dev_sums_; }
  [[nodiscard]] const std::vector<Matrix>& dev_outer_sums() const noexcept { return dev_outer_; }
  [[nodiscard]] const std::vector<std::vector<std::size_t>>& members() const noexcept { return members_; }
  [[nodiscard]] const std::vector<std::size_t>& scope() const noexcept { return scope_; }
  /// Common response value of every row in the scope.
  [[nodiscard]] double scope_response() const noexcept { return scope_response_; }
  [[nodiscard]] int lloyd_iterations() const noexcept { return iterations_; }

  /// Cluster id of dataset row k, or -1 when k is outside the scope.
  [[nodiscard]] int cluster_of(std::size_t k) const noexcept {
    return k < member_cluster_.size() ? member_cluster_[k] : -1;
  }
  [[nodiscard]] const std::vector<int>& member_cluster() const noexcept { return member_cluster_; }

  friend ClusterModel build_clusters(const Dataset&, std::size_t, std::span<const std::size_t>,
                                     std::uint64_t, const KMeansOptions&);

 private:
  Matrix centroids_;
  std::vector<std::size_t> counts_;
  Matrix dev_sums_;
  std::vector<Matrix> dev_outer_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<int> member_cluster_;
  std::vector<std::size_t> scope_;
  double scope_response_ = 0.0;
  int iterations_ = 0;
};

/// k-means (Lloyd, k-means++ seeding) on column-standardized covariate rows of
/// the scope, then one exact moment pass. Deterministic given the seed.
/// Throws ConfigError for an empty scope, K outside [1, |scope|], or a scope
/// with mixed responses.
ClusterModel build_clusters(const Dataset& data, std::size_t K, std::span<const std::size_t> scope,
                            std::uint64_t seed, const KMeansOptions& options = {});

}  // namespace damc
