#include "damc/model.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "damc/kernels.hpp"

namespace damc {

double softplus(double x) noexcept {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double LogisticModel::log_density(double t, double y) const noexcept { return y * t - softplus(t); }

Derivatives LogisticModel::derivatives(double t, double y) const noexcept {
  const double s = logistic(t);
  return {y * t - softplus(t), y - s, -s * logistic(-t)};
}

double LogisticModel::log_density_sum(std::span<const double> t,
                                      std::span<const double> y) const noexcept {
  double sum = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) sum += y[i] * t[i] - softplus(t[i]);
  return sum;
}

GaussianModel::GaussianModel(double noise_variance)
    : variance_(noise_variance), log_norm_(-0.5 * std::log(2.0 * std::numbers::pi * noise_variance)) {
  if (!(noise_variance > 0.0)) throw ConfigError("gaussian model: noise variance must be > 0");
}

double GaussianModel::log_density(double t, double y) const noexcept {
  const double r = y - t;
  return log_norm_ - 0.5 * r * r / variance_;
}

Derivatives GaussianModel::derivatives(double t, double y) const noexcept {
  const double r = y - t;
  return {log_norm_ - 0.5 * r * r / variance_, r / variance_, -1.0 / variance_};
}

double GaussianModel::log_density_sum(std::span<const double> t,
                                      std::span<const double> y) const noexcept {
  double sq = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double r = y[i] - t[i];
    sq += r * r;
  }
  return static_cast<double>(t.size()) * log_norm_ - 0.5 * sq / variance_;
}

void Prior::validate() const {
  if (!(variance_scale > 0.0) || !std::isfinite(variance_scale))
    throw ConfigError("prior variance scale must be positive and finite");
}

double log_density_point(const PredictorModel& model, const Dataset& data, const Theta& theta,
                         std::size_t k) {
  if (k >= data.n()) throw ConfigError("log_density_point: index out of range");
  return model.log_density(data.row(k).dot(theta), data.response(k));
}

Derivatives predictor_derivatives(const PredictorModel& model, double t, double y) {
  return model.derivatives(t, y);
}

double full_log_likelihood(const PredictorModel& model, const Dataset& data, const Theta& theta,
                           EvalLedger* ledger) {
  charge(ledger, data.n());
  return kernels::log_density_sum(model, data, theta);
}

double log_prior(const Theta& theta, const Prior& prior) {
  const double tau2 = prior.variance_scale;
  const auto p = static_cast<double>(theta.size());
  return -0.5 * p * std::log(2.0 * std::numbers::pi * tau2) - 0.5 * theta.squaredNorm() / tau2;
}

Vector log_prior_gradient(const Theta& theta, const Prior& prior) {
  return -theta / prior.variance_scale;
}

PosteriorMode posterior_mode(const PredictorModel& model, const Dataset& data, const Prior& prior,
                             EvalLedger* ledger, int max_iterations) {
  prior.validate();
  const auto p = static_cast<Eigen::Index>(data.p());
  Theta theta = Theta::Zero(p);
  Vector gradient(p);
  Matrix hessian(p, p);
  PosteriorMode mode;
  for (int it = 1; it <= max_iterations; ++it) {
    kernels::log_density_gradient_hessian(model, data, theta, gradient, hessian);
    charge(ledger, data.n());
    gradient += log_prior_gradient(theta, prior);
    hessian.diagonal().array() -= 1.0 / prior.variance_scale;
    Eigen::LDLT<Matrix> ldlt(-hessian);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw NumericalError("posterior_mode: negative Hessian is not positive definite");
    const Vector step = ldlt.solve(gradient);
    theta += step;
    mode.iterations = it;
    if (!theta.allFinite()) throw NumericalError("posterior_mode: Newton iterate diverged");
    if (step.norm() < 1e-10 * (1.0 + theta.norm())) break;
  }
  kernels::log_density_gradient_hessian(model, data, theta, gradient, hessian);
  charge(ledger, data.n());
  hessian.diagonal().array() -= 1.0 / prior.variance_scale;
  mode.theta = theta;
  mode.covariance = (-hessian).inverse();
  mode.covariance = 0.5 * (mode.covariance + mode.covariance.transpose()).eval();
  return mode;
}

}  // namespace damc
