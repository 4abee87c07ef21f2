#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "damc/clusters.hpp"
#include "damc/core.hpp"
#include "damc/dataset.hpp"
#include "damc/model.hpp"

namespace damc {

/// dynamic: curvature evaluated at the current theta; static: curvature fixed
/// at theta_star; none: q_k = 0 (plain subsampling estimator).
enum class CvMode { none, fixed_curvature, dynamic };

CvMode parse_cv_mode(std::string_view text);
std::string_view to_string(CvMode mode);

/// Second-order expansion of each l_k around its cluster centroid, summed in
/// O(K p^2) via the cluster moments. The scope is the sampled population;
/// rows outside it form the exactly-summed part of the log-likelihood.
class ControlVariate {
 public:
  /// Control variate backed by clusters. Static mode requires theta_star.
  ControlVariate(const Dataset& data, const PredictorModel& model, const ClusterModel& clusters,
                 CvMode mode, std::optional<Theta> theta_star = std::nullopt);

  /// q_k = 0 over the given scope.
  static ControlVariate none(const Dataset& data, const PredictorModel& model,
                             std::vector<std::size_t> scope);

  [[nodiscard]] CvMode mode() const noexcept { return mode_; }
  /// Number of centroid evaluations in q(theta); 0 in mode none.
  [[nodiscard]] std::size_t cluster_count() const noexcept;
  [[nodiscard]] std::span<const std::size_t> scope() const noexcept { return scope_; }
  [[nodiscard]] std::span<const std::size_t> exact_index() const noexcept { return exact_; }
  [[nodiscard]] const Dataset& data() const noexcept { return *data_; }
  [[nodiscard]] const PredictorModel& model() const noexcept { return *model_; }
  [[nodiscard]] const ClusterModel* clusters() const noexcept { return clusters_; }

  /// q_k(theta); throws ConfigError for k outside the scope.
  [[nodiscard]] double point(const Theta& theta, std::size_t k) const;

  /// q(theta) = sum over the scope of q_k(theta). Charges K evaluations.
  [[nodiscard]] double sum(const Theta& theta, EvalLedger* ledger = nullptr) const;

  /// l_k(theta) - q_k(theta) for scope row k.
  [[nodiscard]] double residual(const Theta& theta, std::size_t k) const;

 private:
  ControlVariate() = default;

  const Dataset* data_ = nullptr;
  const PredictorModel* model_ = nullptr;
  const ClusterModel* clusters_ = nullptr;
  CvMode mode_ = CvMode::none;
  std::optional<Theta> theta_star_;
  std::vector<std::size_t> scope_;
  std::vector<std::size_t> exact_;
  std::vector<char> in_scope_;
};

/// Auxiliary index vector u: m rows of the scope drawn with replacement,
/// split into G contiguous blocks of m/G.
class SubsampleIndices {
 public:
  SubsampleIndices() = default;
  SubsampleIndices(std::vector<std::size_t> rows, std::size_t blocks);

  /// Throws ConfigError unless 1 <= G, G divides m, and the scope is non-empty.
  static SubsampleIndices draw(std::span<const std::size_t> scope, std::size_t m, std::size_t blocks,
                               Rng& rng);

  [[nodiscard]] std::size_t size() const noexcept { return rows_.size(); }
  [[nodiscard]] std::size_t block_count() const noexcept { return blocks_; }
  [[nodiscard]] std::size_t block_size() const noexcept { return blocks_ ? rows_.size() / blocks_ : 0; }
  [[nodiscard]] std::span<const std::size_t> rows() const noexcept { return rows_; }
  [[nodiscard]] std::span<const std::size_t> block(std::size_t g) const;
  [[nodiscard]] std::span<std::size_t> block(std::size_t g);

  friend bool operator==(const SubsampleIndices&, const SubsampleIndices&) = default;

 private:
  std::vector<std::size_t> rows_;
  std::size_t blocks_ = 1;
};

/// One uniformly chosen block redrawn with replacement; the others are kept.
SubsampleIndices block_refresh(const SubsampleIndices& u, std::span<const std::size_t> scope, Rng& rng);

struct LogLikEstimate {
  double q_sum = 0.0;
  double d_hat = 0.0;
  double sigma2_hat = 0.0;  // estimated variance of `value`
  double exact_part = 0.0;  // rows outside the scope, summed exactly
  double value = 0.0;       // q_sum + d_hat + exact_part
  double corrected_value = 0.0;
};

/// Hansen-Hurwitz estimate of the residual total from the sampled rows.
struct ResidualEstimate {
  double d_hat = 0.0;
  double sigma2_hat = 0.0;           // n_scope^2 * sample variance / m; 0 when m < 2
  std::vector<double> residuals;     // d_{u_i}
};

/// Charges m evaluations.
ResidualEstimate residual_estimate(const ControlVariate& cv, const Theta& theta,
                                   const SubsampleIndices& u, EvalLedger* ledger = nullptr);

/// Exact log-likelihood over rows outside the scope. Charges their count.
double exact_part(const ControlVariate& cv, const Theta& theta, EvalLedger* ledger = nullptr);

/// l_hat = q(theta) + d_hat + exact part. Charges K + m + |exact|. With
/// `require_variance`, m < 2 is rejected.
LogLikEstimate difference_estimate(const ControlVariate& cv, const Theta& theta,
                                   const SubsampleIndices& u, EvalLedger* ledger = nullptr,
                                   bool require_variance = true);

LogLikEstimate assemble_estimate(double q_sum, const ResidualEstimate& residual, double exact);

/// Log of the approximately bias-corrected likelihood, value - sigma2_hat / 2.
/// With `corrected` false the raw value is returned.
double bias_corrected_likelihood_log(const LogLikEstimate& est, bool corrected = true);

struct LogRatioEstimate {
  double value = 0.0;     // estimate of l(theta_c) - l(theta_p)
  double variance = 0.0;  // plug-in sigma_zeta^2 / m
};

/// Shared-u estimate of l(theta_c) - l(theta_p). Throws for m < 2.
LogRatioEstimate log_ratio_estimate(const ControlVariate& cv, const Theta& theta_c,
                                    const Theta& theta_p, const SubsampleIndices& u,
                                    EvalLedger* ledger = nullptr);

/// sigma_R estimate from residual vectors already computed at theta_c and
/// theta_p on the same u: sqrt(n_scope^2 * var(d_c - d_p) / m).
double sigma_r_from_residuals(std::span<const double> residuals_c, std::span<const double> residuals_p,
                              std::size_t scope_size);

}  // namespace damc
