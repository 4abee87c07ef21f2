#include "damc/samplers.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>

#include "damc/kernels.hpp"

namespace damc {

Algorithm parse_algorithm(std::string_view text) {
  if (text == "mh") return Algorithm::mh;
  if (text == "da-mh") return Algorithm::da_mh;
  if (text == "pmmh") return Algorithm::pmmh;
  if (text == "bpmmh") return Algorithm::bpmmh;
  if (text == "da-pmmh") return Algorithm::da_pmmh;
  if (text == "da-bpmmh") return Algorithm::da_bpmmh;
  throw ConfigError("unknown algorithm '" + std::string(text) +
                    "' (mh|da-mh|pmmh|bpmmh|da-pmmh|da-bpmmh)");
}

std::string_view to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::mh: return "mh";
    case Algorithm::da_mh: return "da-mh";
    case Algorithm::pmmh: return "pmmh";
    case Algorithm::bpmmh: return "bpmmh";
    case Algorithm::da_pmmh: return "da-pmmh";
    case Algorithm::da_bpmmh: return "da-bpmmh";
  }
  return "?";
}

bool is_delayed(Algorithm a) noexcept {
  return a == Algorithm::da_mh || a == Algorithm::da_pmmh || a == Algorithm::da_bpmmh;
}

bool is_pseudo_marginal(Algorithm a) noexcept {
  return a == Algorithm::pmmh || a == Algorithm::bpmmh || a == Algorithm::da_pmmh || a == Algorithm::da_bpmmh;
}

bool uses_surrogate(Algorithm a) noexcept { return a == Algorithm::da_pmmh || a == Algorithm::da_bpmmh; }

void SamplerContext::validate(Algorithm algorithm) const {
  if (data == nullptr || model == nullptr) throw ConfigError("sampler: data and model are required");
  prior.validate();
  if (algorithm == Algorithm::mh) return;
  if (cv == nullptr) throw ConfigError("sampler: a control variate (possibly mode none) is required");
  if (m < 2) throw ConfigError("sampler: m must be >= 2");
  if (blocks < 1 || m % blocks != 0) throw ConfigError("sampler: G must divide m");
  if (!(u_refresh_prob >= 0.0 && u_refresh_prob <= 1.0)) throw ConfigError("sampler: u_refresh_prob outside [0, 1]");
  if (uses_surrogate(algorithm)) {
    if (cv_sparse == nullptr) throw ConfigError("sampler: DA-PMMH family needs a first-stage control variate");
    if (cv_sparse->scope().size() != cv->scope().size())
      throw ConfigError("sampler: both control variates must cover the same scope");
    if (!training && surrogate == nullptr)
      throw ConfigError("sampler: surrogate missing after the training phase");
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_finite(double value, const char* what, const Theta& theta) {
  if (std::isnan(value)) {
    std::ostringstream os;
    os << what << " is NaN at theta = [" << theta.transpose() << "]";
    throw NumericalError(os.str());
  }
}

/// Accept with probability min(1, exp(log_alpha)). Draws a uniform only when
/// log_alpha < 0.
bool accept(double log_alpha, Rng& rng) {
  if (log_alpha >= 0.0) return true;
  return std::log(uniform01(rng)) < log_alpha;
}

double clamp_alpha(double log_alpha) { return log_alpha >= 0.0 ? 1.0 : std::exp(log_alpha); }

struct StageOne {
  double log_target = 0.0;
  std::vector<double> residuals;
  double exact = 0.0;
};

// DA-MH first stage: subsampled estimate (optionally corrected) + log prior.
StageOne da_mh_first(const SamplerContext& ctx, const Theta& theta, const SubsampleIndices& u,
                     EvalLedger* ledger) {
  const double q = ctx.cv->sum(theta, ledger);
  ResidualEstimate r = residual_estimate(*ctx.cv, theta, u, ledger);
  const double exact = exact_part(*ctx.cv, theta, ledger);
  const LogLikEstimate est = assemble_estimate(q, r, exact);
  return {bias_corrected_likelihood_log(est, ctx.corrected) + log_prior(theta, ctx.prior), std::move(r.residuals),
          exact};
}

// Full log-likelihood given the exactly-summed part already evaluated at theta.
double scope_total(const SamplerContext& ctx, const Theta& theta, EvalLedger* ledger) {
  charge(ledger, ctx.cv->scope().size());
  return kernels::log_density_sum(*ctx.model, *ctx.data, theta, ctx.cv->scope());
}

double pm_target(const SamplerContext& ctx, const Theta& theta, const SubsampleIndices& u, EvalLedger* ledger) {
  const LogLikEstimate est = difference_estimate(*ctx.cv, theta, u, ledger);
  return est.corrected_value + log_prior(theta, ctx.prior);
}

struct SurrogateStages {
  double first = 0.0;   // s_hat + log prior
  double second = 0.0;  // p_hat + log prior (only when computed)
  double e_true = 0.0;
  bool have_second = false;
  bool extrapolated = false;
};

// Stage-1 pieces shared by both stages of DA-(B)PMMH: the dense residuals on u
// and the exact part, plus the sparse control-variate sum.
struct SharedPieces {
  double q1 = 0.0;
  double d_hat = 0.0;
  double sigma2 = 0.0;
  double exact = 0.0;
  double prior = 0.0;
};

SharedPieces shared_pieces(const SamplerContext& ctx, const Theta& theta, const SubsampleIndices& u,
                           EvalLedger* ledger) {
  SharedPieces s;
  s.q1 = ctx.cv_sparse->sum(theta, ledger);
  const ResidualEstimate r = residual_estimate(*ctx.cv, theta, u, ledger);
  s.d_hat = r.d_hat;
  s.sigma2 = r.sigma2_hat;
  s.exact = exact_part(*ctx.cv, theta, ledger);
  s.prior = log_prior(theta, ctx.prior);
  return s;
}

double assemble(const SharedPieces& s, double q_like) {
  return q_like + s.d_hat + s.exact - 0.5 * s.sigma2 + s.prior;
}

StepRecord surrogate_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng,
                          Rng& aux, bool block) {
  const auto start = Clock::now();
  StepRecord rec;
  const Theta proposal = rw_propose(state.theta, cfg, rng);
  SubsampleIndices u_prop = block ? block_refresh(state.u, ctx.cv->scope(), aux)
                                  : SubsampleIndices::draw(ctx.cv->scope(), ctx.m, state.u.block_count(), aux);
  const SharedPieces s = shared_pieces(ctx, proposal, u_prop, ctx.ledger);

  if (ctx.training) {
    // True discrepancy: stage 1 equals stage 2, so alpha2 = 1.
    const double q = ctx.cv->sum(proposal, ctx.ledger);
    const double e = q - s.q1;
    const double target = assemble(s, q);
    check_finite(target, "training-phase estimate", proposal);
    rec.training_pair = DiscrepancySample{proposal, e};
    const double log_alpha1 = target - state.log_first_stage;
    rec.alpha1 = clamp_alpha(log_alpha1);
    if (accept(log_alpha1, rng)) {
      rec.stage2_entered = true;
      rec.alpha2 = 1.0;
      rec.accepted = true;
      state.theta = proposal;
      state.u = std::move(u_prop);
      state.log_first_stage = target;
      state.log_second_stage = target;
      state.exact = s.exact;
      state.discrepancy = e;
    }
    rec.stage1_seconds = seconds_since(start);
    ++state.iteration;
    return rec;
  }

  if (ctx.surrogate == nullptr) throw ConfigError("DA-PMMH family: surrogate missing after training");
  const DiscrepancyPrediction pred = ctx.surrogate->predict(proposal);
  charge(ctx.ledger, pred.cost);
  rec.surrogate_extrapolated = pred.extrapolating;
  const double first = assemble(s, s.q1 + pred.e_hat);
  check_finite(first, "first-stage estimate", proposal);
  const double log_alpha1 = first - state.log_first_stage;
  rec.alpha1 = clamp_alpha(log_alpha1);
  const bool pass = accept(log_alpha1, rng);
  rec.stage1_seconds = seconds_since(start);
  if (pass) {
    const auto start2 = Clock::now();
    rec.stage2_entered = true;
    const double q = ctx.cv->sum(proposal, ctx.ledger);
    const double second = assemble(s, q);
    check_finite(second, "second-stage estimate", proposal);
    const double log_alpha2 = (second - first) - (state.log_second_stage - state.log_first_stage);
    rec.alpha2 = clamp_alpha(log_alpha2);
    if (accept(log_alpha2, rng)) {
      rec.accepted = true;
      state.theta = proposal;
      state.u = std::move(u_prop);
      state.log_first_stage = first;
      state.log_second_stage = second;
      state.exact = s.exact;
      state.discrepancy = q - s.q1;
    }
    rec.stage2_seconds = seconds_since(start2);
  }
  ++state.iteration;
  return rec;
}

StepRecord pm_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng, Rng& aux,
                   bool block) {
  const auto start = Clock::now();
  StepRecord rec;
  const Theta proposal = rw_propose(state.theta, cfg, rng);
  SubsampleIndices u_prop = block ? block_refresh(state.u, ctx.cv->scope(), aux)
                                  : SubsampleIndices::draw(ctx.cv->scope(), ctx.m, state.u.block_count(), aux);
  const double target = pm_target(ctx, proposal, u_prop, ctx.ledger);
  check_finite(target, "pseudo-marginal estimate", proposal);
  const double log_alpha = target - state.log_second_stage;
  rec.alpha1 = clamp_alpha(log_alpha);
  rec.stage2_entered = true;
  if (accept(log_alpha, rng)) {
    rec.accepted = true;
    state.theta = proposal;
    state.u = std::move(u_prop);
    state.log_second_stage = target;
    state.log_first_stage = target;
  }
  rec.stage1_seconds = seconds_since(start);
  ++state.iteration;
  return rec;
}

}  // namespace

ChainState init_chain(Algorithm algorithm, const SamplerContext& ctx, const Theta& theta0, Rng& aux) {
  ctx.validate(algorithm);
  if (static_cast<std::size_t>(theta0.size()) != ctx.data->p() || !theta0.allFinite())
    throw ConfigError("init_chain: theta0 must be finite with dimension p");
  ChainState state;
  state.theta = theta0;
  if (algorithm == Algorithm::mh) {
    state.log_second_stage = full_log_likelihood(*ctx.model, *ctx.data, theta0, ctx.ledger) +
                             log_prior(theta0, ctx.prior);
    state.log_first_stage = state.log_second_stage;
    return state;
  }
  state.u = SubsampleIndices::draw(ctx.cv->scope(), ctx.m, ctx.blocks, aux);
  switch (algorithm) {
    case Algorithm::da_mh: {
      StageOne s1 = da_mh_first(ctx, theta0, state.u, ctx.ledger);
      state.log_first_stage = s1.log_target;
      state.residuals = std::move(s1.residuals);
      state.exact = s1.exact;
      state.log_second_stage = s1.exact + scope_total(ctx, theta0, ctx.ledger) + log_prior(theta0, ctx.prior);
      break;
    }
    case Algorithm::pmmh:
    case Algorithm::bpmmh:
      state.log_second_stage = pm_target(ctx, theta0, state.u, ctx.ledger);
      state.log_first_stage = state.log_second_stage;
      break;
    case Algorithm::da_pmmh:
    case Algorithm::da_bpmmh: {
      const SharedPieces s = shared_pieces(ctx, theta0, state.u, ctx.ledger);
      const double q = ctx.cv->sum(theta0, ctx.ledger);
      state.discrepancy = q - s.q1;
      state.exact = s.exact;
      state.log_second_stage = assemble(s, q);
      if (ctx.training || ctx.surrogate == nullptr) {
        state.log_first_stage = state.log_second_stage;
      } else {
        const DiscrepancyPrediction pred = ctx.surrogate->predict(theta0);
        charge(ctx.ledger, pred.cost);
        state.log_first_stage = assemble(s, s.q1 + pred.e_hat);
      }
      break;
    }
    case Algorithm::mh: break;
  }
  check_finite(state.log_first_stage, "initial first-stage target", theta0);
  check_finite(state.log_second_stage, "initial second-stage target", theta0);
  return state;
}

std::pair<double, double> recompute_caches(Algorithm algorithm, const SamplerContext& ctx, const ChainState& state) {
  const Theta& theta = state.theta;
  switch (algorithm) {
    case Algorithm::mh: {
      const double v = full_log_likelihood(*ctx.model, *ctx.data, theta) + log_prior(theta, ctx.prior);
      return {v, v};
    }
    case Algorithm::da_mh: {
      const StageOne s1 = da_mh_first(ctx, theta, state.u, nullptr);
      return {s1.log_target, full_log_likelihood(*ctx.model, *ctx.data, theta) + log_prior(theta, ctx.prior)};
    }
    case Algorithm::pmmh:
    case Algorithm::bpmmh: {
      const double v = pm_target(ctx, theta, state.u, nullptr);
      return {v, v};
    }
    case Algorithm::da_pmmh:
    case Algorithm::da_bpmmh: {
      const SharedPieces s = shared_pieces(ctx, theta, state.u, nullptr);
      const double second = assemble(s, ctx.cv->sum(theta));
      if (ctx.training || ctx.surrogate == nullptr) return {second, second};
      return {assemble(s, s.q1 + ctx.surrogate->predict(theta).e_hat), second};
    }
  }
  return {0.0, 0.0};
}

StepRecord mh_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng) {
  const auto start = Clock::now();
  StepRecord rec;
  const Theta proposal = rw_propose(state.theta, cfg, rng);
  const double target = full_log_likelihood(*ctx.model, *ctx.data, proposal, ctx.ledger) +
                        log_prior(proposal, ctx.prior);
  check_finite(target, "log posterior", proposal);
  const double log_alpha = target - state.log_second_stage;
  rec.alpha1 = clamp_alpha(log_alpha);
  rec.stage2_entered = true;
  if (accept(log_alpha, rng)) {
    rec.accepted = true;
    state.theta = proposal;
    state.log_second_stage = target;
    state.log_first_stage = target;
  }
  rec.stage2_seconds = seconds_since(start);
  ++state.iteration;
  return rec;
}

StepRecord da_mh_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng,
                      Rng& aux) {
  StepRecord rec;
  if (ctx.u_refresh_prob > 0.0 && uniform01(aux) < ctx.u_refresh_prob) {
    // The exact second stage does not depend on u; only stage 1 is recomputed.
    state.u = SubsampleIndices::draw(ctx.cv->scope(), ctx.m, ctx.blocks, aux);
    StageOne s1 = da_mh_first(ctx, state.theta, state.u, ctx.ledger);
    state.log_first_stage = s1.log_target;
    state.residuals = std::move(s1.residuals);
    rec.u_refreshed = true;
  }

  const auto start = Clock::now();
  const Theta proposal = rw_propose(state.theta, cfg, rng);
  StageOne s1 = da_mh_first(ctx, proposal, state.u, ctx.ledger);
  check_finite(s1.log_target, "first-stage estimate", proposal);
  rec.sigma_r = sigma_r_from_residuals(state.residuals, s1.residuals, ctx.cv->scope().size());
  const double log_alpha1 = s1.log_target - state.log_first_stage;
  rec.alpha1 = clamp_alpha(log_alpha1);
  const bool pass = accept(log_alpha1, rng);
  rec.stage1_seconds = seconds_since(start);
  if (pass) {
    const auto start2 = Clock::now();
    rec.stage2_entered = true;
    const double second = s1.exact + scope_total(ctx, proposal, ctx.ledger) + log_prior(proposal, ctx.prior);
    check_finite(second, "log posterior", proposal);
    const double log_alpha2 = (second - s1.log_target) - (state.log_second_stage - state.log_first_stage);
    rec.alpha2 = clamp_alpha(log_alpha2);
    if (accept(log_alpha2, rng)) {
      rec.accepted = true;
      state.theta = proposal;
      state.log_first_stage = s1.log_target;
      state.log_second_stage = second;
      state.residuals = std::move(s1.residuals);
      state.exact = s1.exact;
    }
    rec.stage2_seconds = seconds_since(start2);
  }
  ++state.iteration;
  return rec;
}

StepRecord pmmh_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng, Rng& aux) {
  return pm_step(state, ctx, cfg, rng, aux, false);
}

StepRecord bpmmh_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng, Rng& aux) {
  return pm_step(state, ctx, cfg, rng, aux, true);
}

StepRecord da_bpmmh_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng,
                         Rng& aux) {
  return surrogate_step(state, ctx, cfg, rng, aux, true);
}

StepRecord da_pmmh_step(ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg, Rng& rng,
                        Rng& aux) {
  return surrogate_step(state, ctx, cfg, rng, aux, false);
}

StepRecord step(Algorithm algorithm, ChainState& state, const SamplerContext& ctx, const ProposalConfig& cfg,
                Rng& rng, Rng& aux) {
  switch (algorithm) {
    case Algorithm::mh: return mh_step(state, ctx, cfg, rng);
    case Algorithm::da_mh: return da_mh_step(state, ctx, cfg, rng, aux);
    case Algorithm::pmmh: return pmmh_step(state, ctx, cfg, rng, aux);
    case Algorithm::bpmmh: return bpmmh_step(state, ctx, cfg, rng, aux);
    case Algorithm::da_pmmh: return da_pmmh_step(state, ctx, cfg, rng, aux);
    case Algorithm::da_bpmmh: return da_bpmmh_step(state, ctx, cfg, rng, aux);
  }
  throw ConfigError("unknown algorithm");
}

void refresh_first_stage(ChainState& state, const SamplerContext& ctx) {
  if (ctx.surrogate == nullptr) throw ConfigError("refresh_first_stage: no surrogate installed");
  const DiscrepancyPrediction pred = ctx.surrogate->predict(state.theta);
  charge(ctx.ledger, pred.cost);
  // s_hat - p_hat = e_hat - e with everything else shared.
  state.log_first_stage = state.log_second_stage + pred.e_hat - state.discrepancy;
}

}  // namespace damc
