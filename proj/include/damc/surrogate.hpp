#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "damc/core.hpp"

namespace damc {

/// A proposed theta seen during training and the discrepancy q(theta) -
/// q1(theta) between the dense and sparse control-variate sums there.
struct DiscrepancySample {
  Theta theta;
  double e_value = 0.0;
};

enum class SurrogateBackend { linear, gp };

SurrogateBackend parse_surrogate_backend(std::string_view text);
std::string_view to_string(SurrogateBackend backend);

struct DiscrepancyPrediction {
  double e_hat = 0.0;
  std::uint64_t cost = 0;     // evaluation-equivalents charged for this prediction
  bool extrapolating = false;  // theta lies outside the training cloud
};

/// Fitted regression for the discrepancy. Inputs are standardized per
/// coordinate with the training mean and spread.
///
/// linear: least squares on [1, z, vech(z z')], minimum-norm when the design
///         is rank deficient. Prediction cost 1.
/// gp:     noise-free squared-exponential interpolation around the training
///         mean of e; length-scale = median pairwise distance, signal
///         variance = sample variance of e, jitter 1e-10 of the signal
///         variance. Prediction cost n_train.
class SurrogateModel {
 public:
  SurrogateModel() = default;

  [[nodiscard]] SurrogateBackend backend() const noexcept { return backend_; }
  [[nodiscard]] std::size_t n_train() const noexcept { return n_train_; }
  [[nodiscard]] std::size_t dimension() const noexcept { return static_cast<std::size_t>(mean_.size()); }
  [[nodiscard]] std::size_t feature_count() const noexcept;
  /// Fit wall-time over mean training-iteration wall-time; set by the caller.
  [[nodiscard]] double fit_cost_T() const noexcept { return fit_cost_T_; }
  void set_fit_cost_T(double t) noexcept { fit_cost_T_ = t; }
  [[nodiscard]] double fit_seconds() const noexcept { return fit_seconds_; }
  [[nodiscard]] bool rank_deficient() const noexcept { return rank_deficient_; }
  [[nodiscard]] double residual_rms() const noexcept { return residual_rms_; }
  [[nodiscard]] double length_scale() const noexcept { return length_scale_; }

  [[nodiscard]] DiscrepancyPrediction predict(const Theta& theta) const;

  /// Self-describing little-endian blob ("DSUR", version, backend, sizes,
  /// coefficients). Not a stable interchange format.
  [[nodiscard]] std::string serialize() const;
  static SurrogateModel deserialize(std::string_view blob);

  friend SurrogateModel fit_surrogate(std::span<const DiscrepancySample>, SurrogateBackend);

 private:
  [[nodiscard]] Vector standardize(const Theta& theta) const;

  SurrogateBackend backend_ = SurrogateBackend::linear;
  std::size_t n_train_ = 0;
  Vector mean_;
  Vector scale_;
  double extrapolation_radius_ = 0.0;
  // linear
  Vector weights_;
  // gp
  Matrix inputs_;   // n_train x d, standardized
  Vector alpha_;    // K^-1 (e - e_mean)
  double e_mean_ = 0.0;
  double signal_variance_ = 0.0;
  double length_scale_ = 0.0;

  double fit_cost_T_ = 0.0;
  double fit_seconds_ = 0.0;
  bool rank_deficient_ = false;
  double residual_rms_ = 0.0;
};

/// Quadratic basis [1, z, vech(z z')].
Vector quadratic_features(const Vector& z);

/// Throws ConfigError with fewer than max(10, features + 1) samples or when
/// all inputs coincide; NumericalError when the GP kernel matrix is not
/// positive definite even with jitter.
SurrogateModel fit_surrogate(std::span<const DiscrepancySample> samples, SurrogateBackend backend);

DiscrepancyPrediction predict_discrepancy(const SurrogateModel& model, const Theta& theta);

}  // namespace damc
