#include <array>
#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"

#include "damc/clusters.hpp"
#include "damc/diagnostics.hpp"
#include "damc/proposal.hpp"
#include "damc/samplers.hpp"
#include "damc/stats.hpp"

using namespace damc;

namespace {

ProposalConfig proposal_for(std::size_t p, double step) {
  ProposalConfig cfg;
  cfg.covariance = Matrix::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  cfg.step_scale = step;
  cfg.prepare();
  return cfg;
}

// Small logistic problem with every piece a sampler needs.
struct Fixture {
  LogisticModel model;
  Dataset data;
  ClusterModel dense;
  ClusterModel sparse;
  std::optional<ControlVariate> cv;
  std::optional<ControlVariate> cv_sparse;
  PosteriorMode mode;
  SamplerContext ctx;

  Fixture(std::size_t n, std::size_t m, std::size_t G, std::size_t K = 40, std::size_t K1 = 8) {
    data = testing_util::logistic_data(n, 3, -1.5, 77);
    mode = posterior_mode(model, data, Prior{});
    const auto& scope = data.negative_index();
    dense = build_clusters(data, K, scope, 1);
    sparse = build_clusters(data, K1, scope, 2);
    cv.emplace(data, model, dense, CvMode::dynamic);
    cv_sparse.emplace(data, model, sparse, CvMode::dynamic);
    ctx.data = &data;
    ctx.model = &model;
    ctx.cv = &*cv;
    ctx.cv_sparse = &*cv_sparse;
    ctx.m = m;
    ctx.blocks = G;
  }

  ProposalConfig proposal(double scale = 1.0) {
    ProposalConfig cfg = make_proposal(mode.covariance, 0.23, 0);
    cfg.step_scale *= scale;
    cfg.prepare();
    return cfg;
  }
};

std::vector<DiscrepancySample> train(Algorithm alg, Fixture& f, ChainState& state, ProposalConfig& cfg, Rng& rng,
                                     Rng& aux, int iterations) {
  std::vector<DiscrepancySample> samples;
  f.ctx.training = true;
  for (int i = 0; i < iterations; ++i) {
    StepRecord rec = step(alg, state, f.ctx, cfg, rng, aux);
    REQUIRE(rec.training_pair.has_value());
    if (rec.stage2_entered) CHECK(*rec.alpha2 == doctest::Approx(1.0));
    samples.push_back(*rec.training_pair);
  }
  f.ctx.training = false;
  return samples;
}

}  // namespace

TEST_CASE("algorithm names round trip") {
  for (const Algorithm a : {Algorithm::mh, Algorithm::da_mh, Algorithm::pmmh, Algorithm::bpmmh, Algorithm::da_pmmh,
                            Algorithm::da_bpmmh})
    CHECK(parse_algorithm(to_string(a)) == a);
  CHECK_THROWS_AS(parse_algorithm("gibbs"), ConfigError);
  CHECK(is_delayed(Algorithm::da_mh));
  CHECK(!is_delayed(Algorithm::bpmmh));
  CHECK(uses_surrogate(Algorithm::da_pmmh));
  CHECK(is_pseudo_marginal(Algorithm::bpmmh));
}

TEST_CASE("random-walk proposal: covariance, determinism, vanishing step") {
  Matrix cov(2, 2);
  cov << 2.0, 0.6, 0.6, 1.0;
  ProposalConfig cfg;
  cfg.covariance = cov;
  cfg.step_scale = 0.7;
  cfg.prepare();
  const Theta theta = (Vector(2) << 1.0, -2.0).finished();
  Rng rng(3);
  Matrix acc = Matrix::Zero(2, 2);
  const int reps = 100000;
  for (int i = 0; i < reps; ++i) {
    const Vector d = rw_propose(theta, cfg, rng) - theta;
    acc += d * d.transpose() / reps;
  }
  const Matrix expected = 0.49 * cov;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(acc(i, j) - expected(i, j)) < 0.05 * std::abs(expected(i, j)));

  Rng a(5), b(5);
  CHECK(rw_propose(theta, cfg, a) == rw_propose(theta, cfg, b));
  cfg.step_scale = 1e-300;
  CHECK((rw_propose(theta, cfg, a) - theta).norm() < 1e-290);

  ProposalConfig bad;
  bad.covariance = (Matrix(2, 2) << 1.0, 2.0, 2.0, 1.0).finished();
  CHECK_THROWS_AS(bad.prepare(), ConfigError);
  bad.covariance = Matrix::Identity(2, 2);
  bad.step_scale = -1.0;
  CHECK_THROWS_AS(bad.prepare(), ConfigError);
}

TEST_CASE("adaptation: fixed point, direction, freeze") {
  ProposalConfig cfg = make_proposal(Matrix::Identity(3, 3), 0.23, 100);
  CHECK(cfg.step_scale == doctest::Approx(2.38 / std::sqrt(3.0)));
  const double s0 = cfg.step_scale;
  adapt_scale(cfg, 0.23, 1);
  CHECK(cfg.step_scale == s0);
  double prev = cfg.step_scale;
  for (std::uint64_t it = 1; it <= 100; ++it) {
    adapt_scale(cfg, 1.0, it);
    CHECK(cfg.step_scale > prev);
    prev = cfg.step_scale;
  }
  adapt_scale(cfg, 0.0, 101);
  CHECK(cfg.step_scale == prev);
  adapt_scale(cfg, 0.0, 50);
  CHECK(cfg.step_scale < prev);
}

TEST_CASE("delayed acceptance satisfies detailed balance on a 3-state target") {
  // Exact emulation of the two-stage kernel on a finite space: stage 1 uses a
  // noisy log-target f(x, u) with shared u, stage 2 accepts with
  // (s_p - f_p) - (s_c - f_c); u is redrawn with probability 0.01.
  using Counts = std::array<std::array<double, 3>, 3>;
  const std::array<double, 3> log_pi{std::log(0.2), std::log(0.5), std::log(0.3)};
  const std::array<std::array<double, 4>, 3> noise{
      {{0.3, -0.2, 0.5, -0.6}, {-0.4, 0.1, 0.2, 0.7}, {0.9, -0.8, 0.0, 0.25}}};
  const long steps = 1000000;
  auto run = [&](bool second_stage) {
    Rng rng(2024);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_u(0, 3), pick_other(1, 2);
    std::size_t x = 0, u = 0;
    Counts counts{};
    for (long s = 0; s < steps; ++s) {
      if (unif(rng) < 0.01) u = pick_u(rng);
      const std::size_t y = (x + pick_other(rng)) % 3;
      const double f_c = log_pi[x] + noise[x][u];
      const double f_p = log_pi[y] + noise[y][u];
      std::size_t next = x;
      if (std::log(unif(rng)) < f_p - f_c) {
        const double la2 = second_stage ? (log_pi[y] - f_p) - (log_pi[x] - f_c) : 0.0;
        if (la2 >= 0.0 || std::log(unif(rng)) < la2) next = y;
      }
      counts[x][next] += 1.0;
      x = next;
    }
    return counts;
  };
  auto occupancy = [&](const Counts& c, std::size_t i) { return (c[i][0] + c[i][1] + c[i][2]) / steps; };

  const Counts counts = run(true);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(occupancy(counts, i) - std::exp(log_pi[i])) < 0.01);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) {
      // pi_i P_ij = pi_j P_ji, i.e. equal flow counts up to Poisson noise.
      const double a = counts[i][j];
      const double b = counts[j][i];
      CHECK(std::abs(a - b) < 3.0 * std::sqrt(a + b));
    }
  // Without the second-stage correction the chain targets the noisy surface.
  const Counts wrong = run(false);
  double dev = 0.0;
  for (std::size_t i = 0; i < 3; ++i) dev = std::max(dev, std::abs(occupancy(wrong, i) - std::exp(log_pi[i])));
  CHECK(dev > 0.01);
}

TEST_CASE("MH on a conjugate gaussian target matches the closed-form posterior") {
  // y_k ~ N(theta, 1), theta ~ N(0, 10): posterior precision n + 0.1.
  const std::size_t n = 50;
  Rng gen(1);
  std::normal_distribution<double> z(0.8, 1.0);
  Vector y(n);
  for (std::size_t k = 0; k < n; ++k) y[static_cast<Eigen::Index>(k)] = z(gen);
  const Dataset data(Matrix::Ones(n, 1), y);
  const GaussianModel model(1.0);
  SamplerContext ctx;
  ctx.data = &data;
  ctx.model = &model;
  const double prec = static_cast<double>(n) + 0.1;
  const double post_mean = y.sum() / prec;
  const double post_var = 1.0 / prec;

  ProposalConfig cfg = proposal_for(1, 2.4 * std::sqrt(post_var));
  Rng rng(7), aux(8);
  ChainState state = init_chain(Algorithm::mh, ctx, Vector::Zero(1), aux);
  std::vector<double> draws;
  for (int i = 0; i < 60000; ++i) {
    mh_step(state, ctx, cfg, rng);
    if (i >= 1000) draws.push_back(state.theta[0]);
  }
  const double se = testing_util::batch_se(draws);
  CHECK(std::abs(testing_util::mean(draws) - post_mean) < 3.0 * se);
  CHECK(stats::variance(draws) == doctest::Approx(post_var).epsilon(0.05));
}

TEST_CASE("MH accepts uphill moves and is flat-target transparent") {
  const Dataset data(Matrix::Ones(3, 1), Vector::Zero(3));
  const GaussianModel model(1.0);
  SamplerContext ctx;
  ctx.data = &data;
  ctx.model = &model;
  ctx.prior.variance_scale = 1e300;
  ProposalConfig cfg = proposal_for(1, 1e-8);
  Rng rng(1), aux(1);
  ChainState state = init_chain(Algorithm::mh, ctx, Vector::Constant(1, 5.0), aux);
  for (int i = 0; i < 100; ++i) {
    const double before = std::abs(state.theta[0]);
    const StepRecord rec = mh_step(state, ctx, cfg, rng);
    if (std::abs(state.theta[0]) < before) CHECK(rec.accepted);
    CHECK(rec.alpha1 > 0.999);
  }
}

TEST_CASE("DA-MH with a perfect estimator reproduces MH exactly") {
  const GaussianModel model(1.0);
  const Dataset data = testing_util::constant_response_data(300, 3, 0.2, 9);
  const auto scope = testing_util::iota(300);
  const ClusterModel clusters = build_clusters(data, 10, scope, 1);
  const ControlVariate cv(data, model, clusters, CvMode::dynamic);
  SamplerContext ctx;
  ctx.data = &data;
  ctx.model = &model;
  ctx.cv = &cv;
  ctx.m = 10;
  ctx.u_refresh_prob = 0.0;
  ProposalConfig cfg = proposal_for(3, 0.05);
  // Rounding leaves log alpha2 at about -1e-13, which draws one extra uniform,
  // so each DA-MH step is paired with an MH step from the same state and stream.
  Rng rng(11), aux(12);
  ChainState da = init_chain(Algorithm::da_mh, ctx, Vector::Zero(3), aux);
  int accepted = 0;
  for (int i = 0; i < 2000; ++i) {
    ChainState mh = init_chain(Algorithm::mh, ctx, da.theta, aux);
    Rng rng_mh = rng;
    const StepRecord ref = mh_step(mh, ctx, cfg, rng_mh);
    const StepRecord rec = da_mh_step(da, ctx, cfg, rng, aux);
    CHECK(rec.alpha1 == doctest::Approx(ref.alpha1).epsilon(1e-9));
    if (rec.stage2_entered) CHECK(*rec.alpha2 == doctest::Approx(1.0).epsilon(1e-9));
    REQUIRE(rec.accepted == ref.accepted);
    REQUIRE((mh.theta - da.theta).norm() == 0.0);
    accepted += rec.accepted;
  }
  CHECK(accepted > 200);
  CHECK(accepted < 1900);
}

TEST_CASE("PMMH with a zero-variance estimator reproduces MH exactly") {
  const GaussianModel model(1.0);
  const Dataset data = testing_util::constant_response_data(300, 2, -0.3, 19);
  const auto scope = testing_util::iota(300);
  const ClusterModel clusters = build_clusters(data, 10, scope, 1);
  const ControlVariate cv(data, model, clusters, CvMode::dynamic);
  SamplerContext ctx;
  ctx.data = &data;
  ctx.model = &model;
  ctx.cv = &cv;
  ctx.m = 4;
  ProposalConfig cfg = proposal_for(2, 0.05);
  Rng rng_a(3), rng_b(3), aux_a(4), aux_b(4);
  ChainState mh = init_chain(Algorithm::mh, ctx, Vector::Zero(2), aux_a);
  ChainState pm = init_chain(Algorithm::pmmh, ctx, Vector::Zero(2), aux_b);
  for (int i = 0; i < 2000; ++i) {
    const StepRecord a = mh_step(mh, ctx, cfg, rng_a);
    const StepRecord b = pmmh_step(pm, ctx, cfg, rng_b, aux_b);
    CHECK(a.alpha1 == doctest::Approx(b.alpha1).epsilon(1e-9));
    REQUIRE((mh.theta - pm.theta).norm() <= 1e-12);
  }
}

TEST_CASE("caches stay consistent and stage-1 gatekeeping holds for every algorithm") {
  for (const Algorithm alg : {Algorithm::mh, Algorithm::da_mh, Algorithm::pmmh, Algorithm::bpmmh, Algorithm::da_pmmh,
                              Algorithm::da_bpmmh}) {
    CAPTURE(to_string(alg));
    const std::size_t G = alg == Algorithm::bpmmh || alg == Algorithm::da_bpmmh ? 10 : 1;
    Fixture f(3000, 60, G);
    f.ctx.u_refresh_prob = 0.05;
    ProposalConfig cfg = f.proposal(alg == Algorithm::mh || alg == Algorithm::da_mh ? 1.0 : 0.5);
    Rng rng(21), aux(22);
    EvalLedger ledger;
    f.ctx.ledger = &ledger;
    f.ctx.training = uses_surrogate(alg);
    ChainState state = init_chain(alg, f.ctx, f.mode.theta, aux);
    std::vector<DiscrepancySample> samples;
    std::uint64_t stage2 = 0;
    const int iters = 400;
    std::optional<SurrogateModel> model;
    for (int i = 0; i < iters; ++i) {
      if (uses_surrogate(alg) && i == 200) {
        model = fit_surrogate(samples, SurrogateBackend::linear);
        f.ctx.surrogate = &*model;
        f.ctx.training = false;
        refresh_first_stage(state, f.ctx);
      }
      const std::uint64_t before = ledger.count();
      const StepRecord rec = step(alg, state, f.ctx, cfg, rng, aux);
      CHECK(ledger.count() >= before);
      if (rec.training_pair) samples.push_back(*rec.training_pair);
      if (!rec.stage2_entered) {
        CHECK(!rec.alpha2.has_value());
        CHECK(!rec.accepted);
      } else {
        ++stage2;
      }
      CHECK(rec.alpha1 >= 0.0);
      CHECK(rec.alpha1 <= 1.0);
      const auto [first, second] = recompute_caches(alg, f.ctx, state);
      CHECK(first == doctest::Approx(state.log_first_stage).epsilon(1e-9));
      CHECK(second == doctest::Approx(state.log_second_stage).epsilon(1e-9));
    }
    CHECK(stage2 <= static_cast<std::uint64_t>(iters));
    CHECK(stage2 > 0);
  }
}

TEST_CASE("DA-(B)PMMH: exact discrepancy gives alpha2 = 1; stage gap equals the surrogate error") {
  for (const Algorithm alg : {Algorithm::da_pmmh, Algorithm::da_bpmmh}) {
    CAPTURE(to_string(alg));
    Fixture f(3000, 60, alg == Algorithm::da_bpmmh ? 10 : 1);
    ProposalConfig cfg = f.proposal(0.5);
    Rng rng(31), aux(32);

    // K1 = K with the same clusters: e = 0 and both backends predict it exactly.
    SamplerContext same = f.ctx;
    same.cv_sparse = same.cv;
    same.training = true;
    ChainState s0 = init_chain(alg, same, f.mode.theta, aux);
    std::vector<DiscrepancySample> zeros;
    for (int i = 0; i < 40; ++i) {
      const StepRecord rec = step(alg, s0, same, cfg, rng, aux);
      zeros.push_back(*rec.training_pair);
      CHECK(rec.training_pair->e_value == 0.0);
    }
    for (const SurrogateBackend b : {SurrogateBackend::linear, SurrogateBackend::gp}) {
      const SurrogateModel model = fit_surrogate(zeros, b);
      same.surrogate = &model;
      same.training = false;
      refresh_first_stage(s0, same);
      for (int i = 0; i < 100; ++i) {
        const StepRecord rec = step(alg, s0, same, cfg, rng, aux);
        if (rec.stage2_entered) CHECK(*rec.alpha2 == doctest::Approx(1.0).epsilon(1e-9));
      }
    }

    // Distinct clusterings: after training, log first - log second = e_hat - e.
    f.ctx.training = true;
    ChainState state = init_chain(alg, f.ctx, f.mode.theta, aux);
    const auto samples = train(alg, f, state, cfg, rng, aux, 150);
    const SurrogateModel model = fit_surrogate(samples, SurrogateBackend::linear);
    f.ctx.surrogate = &model;
    refresh_first_stage(state, f.ctx);
    for (int i = 0; i < 200; ++i) {
      step(alg, state, f.ctx, cfg, rng, aux);
      const double e_hat = model.predict(state.theta).e_hat;
      CHECK(state.log_first_stage - state.log_second_stage ==
            doctest::Approx(e_hat - state.discrepancy).epsilon(1e-9));
      CHECK(state.discrepancy == doctest::Approx(f.cv->sum(state.theta) - f.cv_sparse->sum(state.theta)).epsilon(1e-9));
    }
    SamplerContext missing = f.ctx;
    missing.surrogate = nullptr;
    CHECK_THROWS_AS(step(alg, state, missing, cfg, rng, aux), ConfigError);
  }
}

TEST_CASE("PMMH targets the posterior on a small logistic problem") {
  Fixture f(4000, 100, 1, 200);
  Rng rng(41), aux(42), rng_mh(43), aux_mh(44);
  ProposalConfig cfg_pm = f.proposal(0.8);
  ProposalConfig cfg_mh = f.proposal(1.0);
  ChainState pm = init_chain(Algorithm::pmmh, f.ctx, f.mode.theta, aux);
  ChainState mh = init_chain(Algorithm::mh, f.ctx, f.mode.theta, aux_mh);
  std::vector<std::vector<double>> a(3), b(3);
  for (int i = 0; i < 40000; ++i) {
    pmmh_step(pm, f.ctx, cfg_pm, rng, aux);
    mh_step(mh, f.ctx, cfg_mh, rng_mh);
    for (std::size_t j = 0; j < 3; ++j) {
      a[j].push_back(pm.theta[static_cast<Eigen::Index>(j)]);
      b[j].push_back(mh.theta[static_cast<Eigen::Index>(j)]);
    }
  }
  for (std::size_t j = 0; j < 3; ++j) {
    const double se = std::hypot(testing_util::batch_se(a[j]), testing_util::batch_se(b[j]));
    CHECK(std::abs(testing_util::mean(a[j]) - testing_util::mean(b[j])) < 3.0 * se);
  }
}

TEST_CASE("DA-MH is no more efficient per iteration than MH") {
  Fixture f(3000, 30, 1, 20);
  f.ctx.u_refresh_prob = 0.01;
  std::vector<double> if_mh, if_da;
  for (std::uint64_t rep = 0; rep < 3; ++rep) {
    ProposalConfig cfg = f.proposal(1.0);
    Rng r1(100 + rep), a1(200 + rep), r2(300 + rep), a2(400 + rep);
    ChainState mh = init_chain(Algorithm::mh, f.ctx, f.mode.theta, a1);
    ChainState da = init_chain(Algorithm::da_mh, f.ctx, f.mode.theta, a2);
    std::vector<double> x, y;
    for (int i = 0; i < 20000; ++i) {
      mh_step(mh, f.ctx, cfg, r1);
      da_mh_step(da, f.ctx, cfg, r2, a2);
      x.push_back(mh.theta[1]);
      y.push_back(da.theta[1]);
    }
    if_mh.push_back(inefficiency_factor(x).value);
    if_da.push_back(inefficiency_factor(y).value);
  }
  // One-sided with a 15% Monte Carlo allowance on the averaged IFs.
  CHECK(testing_util::mean(if_da) >= 0.85 * testing_util::mean(if_mh));
}
