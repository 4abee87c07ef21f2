#include "damc/proposal.hpp"

#include <cmath>

#include <Eigen/Cholesky>

namespace damc {

void ProposalConfig::prepare() {
  if (!(step_scale > 0.0) || !std::isfinite(step_scale)) throw ConfigError("proposal: step_scale must be > 0");
  if (!(target_alpha1 > 0.0 && target_alpha1 < 1.0)) throw ConfigError("proposal: target_alpha1 must lie in (0, 1)");
  if (adapt_until < 0) throw ConfigError("proposal: adapt_until must be >= 0");
  if (!(adapt_rate > 0.5 && adapt_rate <= 1.0)) throw ConfigError("proposal: adapt_rate must lie in (0.5, 1]");
  if (covariance.rows() == 0 || covariance.rows() != covariance.cols())
    throw ConfigError("proposal: covariance must be square and non-empty");
  if (!covariance.isApprox(covariance.transpose(), 1e-10) || !covariance.allFinite())
    throw ConfigError("proposal: covariance must be symmetric and finite");
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) throw ConfigError("proposal: covariance is not positive definite");
  chol_ = llt.matrixL();
}

ProposalConfig make_proposal(const Matrix& covariance, double target_alpha1, int adapt_until) {
  ProposalConfig cfg;
  cfg.covariance = covariance;
  cfg.step_scale = 2.38 / std::sqrt(static_cast<double>(covariance.rows()));
  cfg.target_alpha1 = target_alpha1;
  cfg.adapt_until = adapt_until;
  cfg.prepare();
  return cfg;
}

Theta rw_propose(const Theta& theta, const ProposalConfig& cfg, Rng& rng) {
  std::normal_distribution<double> normal;
  Vector z(theta.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = normal(rng);
  return theta + cfg.step_scale * (cfg.cholesky() * z);
}

void adapt_scale(ProposalConfig& cfg, double alpha1, std::uint64_t iteration) {
  if (iteration == 0 || iteration > static_cast<std::uint64_t>(cfg.adapt_until)) return;
  const double gain = std::pow(static_cast<double>(iteration), -cfg.adapt_rate);
  cfg.step_scale *= std::exp(gain * (alpha1 - cfg.target_alpha1));
}

}  // namespace damc
