#pragma once

#include <span>
#include <string_view>

#include "damc/core.hpp"
#include "damc/dataset.hpp"

namespace damc {

/// h, h' and h'' of the log-density as a function of the linear predictor.
struct Derivatives {
  double value = 0.0;
  double first = 0.0;
  double second = 0.0;
};

/// A model whose per-observation log-density depends on theta only through
/// the scalar linear predictor t = x_k' theta. Anything implementing this
/// plugs into the control-variate and estimator stack.
class PredictorModel {
 public:
  virtual ~PredictorModel() = default;

  [[nodiscard]] virtual std::string_view name() const noexcept = 0;
  [[nodiscard]] virtual double log_density(double t, double y) const noexcept = 0;
  [[nodiscard]] virtual Derivatives derivatives(double t, double y) const noexcept = 0;

  /// Sum of log_density over aligned spans.
  [[nodiscard]] virtual double log_density_sum(std::span<const double> t,
                                               std::span<const double> y) const noexcept = 0;
};

/// Bernoulli response with logistic link. Stable for |t| well beyond 700.
class LogisticModel final : public PredictorModel {
 public:
  [[nodiscard]] std::string_view name() const noexcept override { return "logistic"; }
  [[nodiscard]] double log_density(double t, double y) const noexcept override;
  [[nodiscard]] Derivatives derivatives(double t, double y) const noexcept override;
  [[nodiscard]] double log_density_sum(std::span<const double> t,
                                       std::span<const double> y) const noexcept override;
};

/// Gaussian response with identity link; h is exactly quadratic in t.
class GaussianModel final : public PredictorModel {
 public:
  explicit GaussianModel(double noise_variance = 1.0);

  [[nodiscard]] std::string_view name() const noexcept override { return "gaussian"; }
  [[nodiscard]] double log_density(double t, double y) const noexcept override;
  [[nodiscard]] Derivatives derivatives(double t, double y) const noexcept override;
  [[nodiscard]] double log_density_sum(std::span<const double> t,
                                       std::span<const double> y) const noexcept override;

 private:
  double variance_;
  double log_norm_;
};

/// log(1 + exp(x)) without overflow.
double softplus(double x) noexcept;
double logistic(double x) noexcept;

/// Independent N(0, variance_scale * I) prior on every coefficient.
struct Prior {
  double variance_scale = 10.0;
  void validate() const;
};

double log_density_point(const PredictorModel& model, const Dataset& data, const Theta& theta,
                         std::size_t k);

Derivatives predictor_derivatives(const PredictorModel& model, double t, double y);

/// Exact sum over all n rows (OpenMP kernel). Charges n evaluations.
double full_log_likelihood(const PredictorModel& model, const Dataset& data, const Theta& theta,
                           EvalLedger* ledger = nullptr);

double log_prior(const Theta& theta, const Prior& prior);
Vector log_prior_gradient(const Theta& theta, const Prior& prior);

struct PosteriorMode {
  Theta theta;
  Matrix covariance;  // inverse negative Hessian at the mode
  int iterations = 0;
};

/// Newton iterations on log-likelihood + log-prior from theta = 0. Charges n
/// evaluations per iteration.
PosteriorMode posterior_mode(const PredictorModel& model, const Dataset& data, const Prior& prior,
                             EvalLedger* ledger = nullptr, int max_iterations = 100);

}  // namespace damc
