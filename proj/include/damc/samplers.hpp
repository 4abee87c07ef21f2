#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "damc/core.hpp"
#include "damc/dataset.hpp"
#include "damc/estimators.hpp"
#include "damc/model.hpp"
#include "damc/proposal.hpp"
#include "damc/surrogate.hpp"

namespace damc {

enum class Algorithm { mh, da_mh, pmmh, bpmmh, da_pmmh, da_bpmmh };

Algorithm parse_algorithm(std::string_view text);
std::string_view to_string(Algorithm algorithm);
[[nodiscard]] bool is_delayed(Algorithm algorithm) noexcept;
[[nodiscard]] bool is_pseudo_marginal(Algorithm algorithm) noexcept;
/// DA-PMMH / DA-BPMMH: sparse first-stage control variate plus surrogate.
[[nodiscard]] bool uses_surrogate(Algorithm algorithm) noexcept;

/// Everything a transition needs besides the chain state. The pointers must
/// outlive every step.
struct SamplerContext {
  const Dataset* data = nullptr;
  const PredictorModel* model = nullptr;
  Prior prior;
  const ControlVariate* cv = nullptr;         // dense control variate (all subsampling algorithms)
  const ControlVariate* cv_sparse = nullptr;  // first-stage control variate, DA-(B)PMMH
  const SurrogateModel* surrogate = nullptr;  // null during training
  std::size_t m = 0;
  std::size_t blocks = 1;  // G
  double u_refresh_prob = 0.01;
  bool corrected = false;  // DA-MH first stage; the PMMH family is always corrected
  bool training = false;   // DA-(B)PMMH: use the true discrepancy and collect pairs
  EvalLedger* ledger = nullptr;

  void validate(Algorithm algorithm) const;
};

/// Current point of the (augmented) chain with the cached log-targets.
struct ChainState {
  Theta theta;
  SubsampleIndices u;
  double log_second_stage = 0.0;  // l(theta) or corrected l_hat, plus log prior
  double log_first_stage = 0.0;   // stage-1 approximation plus log prior; equals second for MH/PMMH
  std::uint64_t iteration = 0;
  std::vector<double> residuals;  // DA-MH: d_k at (theta, u), reused for sigma_R
  double exact = 0.0;             // exactly-summed part at theta
  double discrepancy = 0.0;       // DA-(B)PMMH: true e(theta) = q(theta) - q1(theta)
};

struct StepRecord {
  double alpha1 = 0.0;
  std::optional<double> alpha2;  // present only when stage 2 ran
  bool stage2_entered = false;
  bool accepted = false;
  bool u_refreshed = false;
  std::optional<double> sigma_r;  // DA-MH: plug-in sd of the log ratio estimate
  bool surrogate_extrapolated = false;
  std::optional<DiscrepancySample> training_pair;  // DA-(B)PMMH training phase
  double stage1_seconds = 0.0;
  double stage2_seconds = 0.0;
};

/// Builds a state at theta0 with consistent caches. Charges the initial
/// evaluations. `aux` drives the draws of u.
ChainState init_chain(Algorithm algorithm, const SamplerContext& ctx, const Theta& theta0, Rng& aux);

/// Recomputes (log_first_stage, log_second_stage) for the state from scratch
/// without touching any ledger.
std::pair<double, double> recompute_caches(Algorithm algorithm, const SamplerContext& ctx,
                                           const ChainState& state);

/// Random-walk MH on the exact posterior.
StepRecord mh_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng);

/// Delayed-acceptance MH: subsampled first stage with a shared u, exact second
/// stage. u is redrawn with probability u_refresh_prob at iteration start.
StepRecord da_mh_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng,
                      Rng& aux);

/// Pseudo-marginal MH with a full redraw of u.
StepRecord pmmh_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng,
                     Rng& aux);

/// Block pseudo-marginal MH: one of G blocks of u redrawn per iteration.
StepRecord bpmmh_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng,
                      Rng& aux);

/// Delayed-acceptance block PMMH with the surrogate-assisted first stage.
StepRecord da_bpmmh_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng,
                         Rng& aux);

/// As da_bpmmh_step with u fully redrawn.
StepRecord da_pmmh_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng,
                        Rng& aux);

StepRecord step(Algorithm algorithm, ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg,
                Rng& rng, Rng& aux);

/// DA-(B)PMMH: after the surrogate is installed in ctx, re-evaluates the
/// stage-1 cache at the current state. Charges the prediction cost.
void refresh_first_stage(ChainState& state, const SamplerContext& ctx);

}  // namespace damc
