#pragma once

#include "damc/core.hpp"

namespace damc {

/// Gaussian random-walk proposal theta' = theta + step_scale * L z.
struct ProposalConfig {
  double step_scale = 1.0;
  Matrix covariance;  // SPD, p x p
  double target_alpha1 = 0.23;
  int adapt_until = 5000;
  double adapt_rate = 0.6;

  /// Validates and factors the covariance. Must be called after changing it.
  void prepare();
  [[nodiscard]] const Matrix& cholesky() const noexcept { return chol_; }

 private:
  Matrix chol_;
};

/// Covariance defaults to the identity, step to 2.38 / sqrt(p).
ProposalConfig make_proposal(const Matrix& covariance, double target_alpha1, int adapt_until);

Theta rw_propose(const Theta& theta, const ProposalConfig& cfg, Rng& rng);

/// Robbins-Monro step on log(step_scale) toward target_alpha1. No-op once
/// iteration > adapt_until.
void adapt_scale(ProposalConfig& cfg, double alpha1, std::uint64_t iteration);

}  // namespace damc
