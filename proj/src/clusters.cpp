#include "damc/clusters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "damc/kernels.hpp"

namespace damc {

namespace {

Matrix standardized_rows(const Dataset& data, std::span<const std::size_t> scope) {
  const auto n = static_cast<Eigen::Index>(scope.size());
  const auto p = static_cast<Eigen::Index>(data.p());
  Matrix z(n, p);
  for (Eigen::Index i = 0; i < n; ++i) z.row(i) = data.row(scope[static_cast<std::size_t>(i)]);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mean = z.col(j).mean();
    z.col(j).array() -= mean;
    const double sd = std::sqrt(z.col(j).squaredNorm() / static_cast<double>(n));
    if (sd > 0.0) z.col(j) /= sd;
  }
  return z;
}

Matrix seed_centroids(const Matrix& z, std::size_t K, Rng& rng) {
  const auto n = static_cast<std::size_t>(z.rows());
  Matrix centroids(static_cast<Eigen::Index>(K), z.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);

  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < K; ++c) {
    chosen[pick] = 1;
    centroids.row(static_cast<Eigen::Index>(c)) = z.row(static_cast<Eigen::Index>(pick));
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (z.row(static_cast<Eigen::Index>(i)) - z.row(static_cast<Eigen::Index>(pick))).squaredNorm();
      d2[i] = std::min(d2[i], d);
      if (!chosen[i]) total += d2[i];
    }
    if (c + 1 == K) break;
    if (total > 0.0) {
      double target = uniform01(rng) * total;
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        target -= d2[i];
        pick = i;
        if (target <= 0.0) break;
      }
    } else {
      // Remaining points coincide with chosen seeds: draw uniformly among them.
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) rest.push_back(i);
      pick = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
    }
  }
  return centroids;
}

}  // namespace

ClusterModel build_clusters(const Dataset& data, std::size_t K, std::span<const std::size_t> scope,
                            std::uint64_t seed, const KMeansOptions& options) {
  if (scope.empty()) throw ConfigError("build_clusters: empty scope");
  if (K < 1 || K > scope.size())
    throw ConfigError("build_clusters: K=" + std::to_string(K) + " outside [1, " +
                      std::to_string(scope.size()) + "]");
  const double response = data.response(scope.front());
  for (std::size_t k : scope) {
    if (k >= data.n()) throw ConfigError("build_clusters: scope index out of range");
    if (data.response(k) != response)
      throw ConfigError("build_clusters: scope must share a single response value");
  }

  const Matrix z = standardized_rows(data, scope);
  const auto n = static_cast<std::size_t>(z.rows());
  const auto p = z.cols();
  Rng rng = make_rng(seed, 0x6b6d);
  Matrix centroids = seed_centroids(z, K, rng);

  std::vector<int> assignment(n, -1);
  std::vector<int> next(n, 0);
  std::vector<double> d2(n, 0.0);
  std::vector<std::size_t> counts(K, 0);
  int iterations = 0;
  for (int it = 1; it <= std::max(1, options.max_iterations); ++it) {
    iterations = it;
    kernels::assign_nearest(z, centroids, next, d2);

    std::fill(counts.begin(), counts.end(), 0);
    for (int c : next) ++counts[static_cast<std::size_t>(c)];
    // Empty cluster: move the farthest point of a multi-member cluster into it.
    for (std::size_t c = 0; c < K; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(next[i])] < 2) continue;
        if (d2[i] > far_d) {
          far_d = d2[i];
          far = i;
        }
      }
      --counts[static_cast<std::size_t>(next[far])];
      next[far] = static_cast<int>(c);
      counts[c] = 1;
      d2[far] = 0.0;
    }

    const bool changed = next != assignment;
    assignment = next;
    centroids.setZero();
    for (std::size_t i = 0; i < n; ++i)
      centroids.row(assignment[i]) += z.row(static_cast<Eigen::Index>(i));
    for (std::size_t c = 0; c < K; ++c)
      centroids.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(counts[c]);
    if (!changed) break;
  }

  ClusterModel model;
  model.scope_.assign(scope.begin(), scope.end());
  model.scope_response_ = response;
  model.iterations_ = iterations;
  model.counts_ = counts;
  model.members_.assign(K, {});
  model.member_cluster_.assign(data.n(), -1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(assignment[i]);
    model.members_[c].push_back(scope[i]);
    model.member_cluster_[scope[i]] = static_cast<int>(c);
  }

  model.centroids_ = Matrix::Zero(static_cast<Eigen::Index>(K), p);
  for (std::size_t c = 0; c < K; ++c) {
    for (std::size_t k : model.members_[c]) model.centroids_.row(static_cast<Eigen::Index>(c)) += data.row(k);
    model.centroids_.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(model.counts_[c]);
  }
  kernels::cluster_moments(data.covariates(), model.members_, model.centroids_, model.dev_sums_,
                           model.dev_outer_);
  return model;
}

}  // namespace damc
