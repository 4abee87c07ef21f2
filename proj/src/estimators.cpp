#include "damc/estimators.hpp"

#include <cmath>
#include <string>

#include "damc/kernels.hpp"

namespace damc {

CvMode parse_cv_mode(std::string_view text) {
  if (text == "none") return CvMode::none;
  if (text == "static") return CvMode::fixed_curvature;
  if (text == "dynamic") return CvMode::dynamic;
  throw ConfigError("unknown cv_mode '" + std::string(text) + "' (none|static|dynamic)");
}

std::string_view to_string(CvMode mode) {
  switch (mode) {
    case CvMode::none: return "none";
    case CvMode::fixed_curvature: return "static";
    case CvMode::dynamic: return "dynamic";
  }
  return "?";
}

namespace {

std::vector<std::size_t> complement(std::size_t n, const std::vector<char>& in_scope) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < n; ++k)
    if (!in_scope[k]) out.push_back(k);
  return out;
}

}  // namespace

ControlVariate::ControlVariate(const Dataset& data, const PredictorModel& model,
                               const ClusterModel& clusters, CvMode mode,
                               std::optional<Theta> theta_star)
    : data_(&data), model_(&model), clusters_(&clusters), mode_(mode), theta_star_(std::move(theta_star)) {
  if (mode_ == CvMode::fixed_curvature) {
    if (!theta_star_ || !theta_star_->allFinite())
      throw ConfigError("static control variates need a finite theta_star");
    if (static_cast<std::size_t>(theta_star_->size()) != data.p())
      throw ConfigError("theta_star has the wrong dimension");
  }
  scope_ = clusters.scope();
  in_scope_.assign(data.n(), 0);
  for (std::size_t k : scope_) in_scope_[k] = 1;
  exact_ = complement(data.n(), in_scope_);
}

ControlVariate ControlVariate::none(const Dataset& data, const PredictorModel& model,
                                    std::vector<std::size_t> scope) {
  if (scope.empty()) throw ConfigError("control variate scope is empty");
  ControlVariate cv;
  cv.data_ = &data;
  cv.model_ = &model;
  cv.mode_ = CvMode::none;
  cv.scope_ = std::move(scope);
  cv.in_scope_.assign(data.n(), 0);
  for (std::size_t k : cv.scope_) {
    if (k >= data.n()) throw ConfigError("control variate scope index out of range");
    cv.in_scope_[k] = 1;
  }
  cv.exact_ = complement(data.n(), cv.in_scope_);
  return cv;
}

std::size_t ControlVariate::cluster_count() const noexcept {
  return mode_ == CvMode::none || clusters_ == nullptr ? 0 : clusters_->cluster_count();
}

double ControlVariate::point(const Theta& theta, std::size_t k) const {
  if (k >= in_scope_.size() || !in_scope_[k])
    throw ConfigError("control_variate_point: row " + std::to_string(k) + " is outside the scope");
  if (mode_ == CvMode::none) return 0.0;
  const int c = clusters_->cluster_of(k);
  const auto centroid = clusters_->centroids().row(c);
  const double y = clusters_->scope_response();
  const double t_c = centroid.dot(theta);
  const Derivatives d = model_->derivatives(t_c, y);
  const double curvature =
      mode_ == CvMode::dynamic ? d.second : model_->derivatives(centroid.dot(*theta_star_), y).second;
  const double delta = data_->row(k).dot(theta) - t_c;
  return d.value + d.first * delta + 0.5 * curvature * delta * delta;
}

double ControlVariate::sum(const Theta& theta, EvalLedger* ledger) const {
  if (mode_ == CvMode::none) return 0.0;
  const std::size_t K = clusters_->cluster_count();
  charge(ledger, K);
  const double y = clusters_->scope_response();
  const Matrix& centroids = clusters_->centroids();
  const Vector t = centroids * theta;
  const Vector first_moment = clusters_->dev_sums() * theta;
  double total = 0.0;
  for (std::size_t c = 0; c < K; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    const Derivatives d = model_->derivatives(t[ci], y);
    const double curvature =
        mode_ == CvMode::dynamic ? d.second
                                 : model_->derivatives(centroids.row(ci).dot(*theta_star_), y).second;
    const double quad = theta.dot(clusters_->dev_outer_sums()[c] * theta);
    total += static_cast<double>(clusters_->counts()[c]) * d.value + d.first * first_moment[ci] +
             0.5 * curvature * quad;
  }
  return total;
}

double ControlVariate::residual(const Theta& theta, std::size_t k) const {
  return model_->log_density(data_->row(k).dot(theta), data_->response(k)) - point(theta, k);
}

SubsampleIndices::SubsampleIndices(std::vector<std::size_t> rows, std::size_t blocks)
    : rows_(std::move(rows)), blocks_(blocks) {
  if (blocks_ < 1 || rows_.empty() || rows_.size() % blocks_ != 0)
    throw ConfigError("subsample: block count must divide m (m=" + std::to_string(rows_.size()) +
                      ", G=" + std::to_string(blocks_) + ")");
}

SubsampleIndices SubsampleIndices::draw(std::span<const std::size_t> scope, std::size_t m,
                                        std::size_t blocks, Rng& rng) {
  if (scope.empty()) throw ConfigError("subsample: empty scope");
  if (m < 1) throw ConfigError("subsample: m must be >= 1");
  std::uniform_int_distribution<std::size_t> pick(0, scope.size() - 1);
  std::vector<std::size_t> rows(m);
  for (auto& r : rows) r = scope[pick(rng)];
  return SubsampleIndices(std::move(rows), blocks);
}

std::span<const std::size_t> SubsampleIndices::block(std::size_t g) const {
  return std::span<const std::size_t>(rows_).subspan(g * block_size(), block_size());
}

std::span<std::size_t> SubsampleIndices::block(std::size_t g) {
  return std::span<std::size_t>(rows_).subspan(g * block_size(), block_size());
}

SubsampleIndices block_refresh(const SubsampleIndices& u, std::span<const std::size_t> scope, Rng& rng) {
  SubsampleIndices next = u;
  const std::size_t g = std::uniform_int_distribution<std::size_t>(0, u.block_count() - 1)(rng);
  std::uniform_int_distribution<std::size_t> pick(0, scope.size() - 1);
  for (auto& r : next.block(g)) r = scope[pick(rng)];
  return next;
}

ResidualEstimate residual_estimate(const ControlVariate& cv, const Theta& theta,
                                   const SubsampleIndices& u, EvalLedger* ledger) {
  const std::size_t m = u.size();
  charge(ledger, m);
  ResidualEstimate est;
  est.residuals.resize(m);
  double mean = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    est.residuals[i] = cv.residual(theta, u.rows()[i]);
    mean += est.residuals[i];
  }
  mean /= static_cast<double>(m);
  const auto n_scope = static_cast<double>(cv.scope().size());
  est.d_hat = n_scope * mean;
  if (m >= 2) {
    double ss = 0.0;
    for (double d : est.residuals) ss += (d - mean) * (d - mean);
    const double sample_var = ss / static_cast<double>(m - 1);
    est.sigma2_hat = n_scope * n_scope * sample_var / static_cast<double>(m);
  }
  return est;
}

double exact_part(const ControlVariate& cv, const Theta& theta, EvalLedger* ledger) {
  charge(ledger, cv.exact_index().size());
  if (cv.exact_index().empty()) return 0.0;
  return kernels::log_density_sum(cv.model(), cv.data(), theta, cv.exact_index());
}

LogLikEstimate assemble_estimate(double q_sum, const ResidualEstimate& residual, double exact) {
  LogLikEstimate est;
  est.q_sum = q_sum;
  est.d_hat = residual.d_hat;
  est.sigma2_hat = residual.sigma2_hat;
  est.exact_part = exact;
  est.value = q_sum + residual.d_hat + exact;
  est.corrected_value = est.value - 0.5 * est.sigma2_hat;
  return est;
}

LogLikEstimate difference_estimate(const ControlVariate& cv, const Theta& theta,
                                   const SubsampleIndices& u, EvalLedger* ledger,
                                   bool require_variance) {
  if (require_variance && u.size() < 2)
    throw ConfigError("difference_estimate: the variance estimator needs m >= 2");
  const double q = cv.sum(theta, ledger);
  const ResidualEstimate r = residual_estimate(cv, theta, u, ledger);
  const double exact = exact_part(cv, theta, ledger);
  return assemble_estimate(q, r, exact);
}

double bias_corrected_likelihood_log(const LogLikEstimate& est, bool corrected) {
  return corrected ? est.value - 0.5 * est.sigma2_hat : est.value;
}

double sigma_r_from_residuals(std::span<const double> residuals_c, std::span<const double> residuals_p,
                              std::size_t scope_size) {
  const std::size_t m = residuals_c.size();
  if (m < 2 || residuals_p.size() != m) return 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < m; ++i) mean += residuals_c[i] - residuals_p[i];
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dev = residuals_c[i] - residuals_p[i] - mean;
    ss += dev * dev;
  }
  const auto n = static_cast<double>(scope_size);
  return std::sqrt(n * n * ss / static_cast<double>(m - 1) / static_cast<double>(m));
}

LogRatioEstimate log_ratio_estimate(const ControlVariate& cv, const Theta& theta_c,
                                    const Theta& theta_p, const SubsampleIndices& u,
                                    EvalLedger* ledger) {
  if (u.size() < 2) throw ConfigError("log_ratio_estimate: needs m >= 2");
  const double q_c = cv.sum(theta_c, ledger);
  const double q_p = cv.sum(theta_p, ledger);
  const ResidualEstimate r_c = residual_estimate(cv, theta_c, u, ledger);
  const ResidualEstimate r_p = residual_estimate(cv, theta_p, u, ledger);
  const double exact_diff = exact_part(cv, theta_c, ledger) - exact_part(cv, theta_p, ledger);

  const double sigma_r = sigma_r_from_residuals(r_c.residuals, r_p.residuals, cv.scope().size());
  LogRatioEstimate out;
  out.value = (q_c - q_p) + (r_c.d_hat - r_p.d_hat) + exact_diff;
  out.variance = sigma_r * sigma_r;
  return out;
}

}  // namespace damc
