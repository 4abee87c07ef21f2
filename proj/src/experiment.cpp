#include "damc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "damc/clusters.hpp"
#include "damc/stats.hpp"

namespace damc {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

constexpr const char* kCodeVersion = "damc 0.1.0";
// Full-evaluation timing probes for the CPU model.
constexpr int kFullEvalProbes = 101;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void append_double(std::string& out, double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(len));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::size_t fraction_count(double fraction, std::size_t n) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
}

}  // namespace

Dataset load_dataset(const DataConfig& data) {
  if (data.synthetic) return generate_synthetic(*data.synthetic);
  if (data.path.extension() == ".csv") return load_csv(data.path);
  return load_binary(data.path);
}

std::size_t m_from_fraction(double fraction, std::size_t n, std::size_t G) {
  if (G < 1) throw ConfigError("m_from_fraction: G must be >= 1");
  const double raw = fraction * static_cast<double>(n);
  std::size_t m = static_cast<std::size_t>(std::llround(raw / static_cast<double>(G))) * G;
  const std::size_t floor_m = ((std::max<std::size_t>(2, G) + G - 1) / G) * G;
  return std::max(m, floor_m);
}

std::size_t calibrate_m(const ControlVariate& cv, const Theta& theta, std::size_t G, double target, Rng& rng,
                        EvalLedger* ledger, int reps) {
  std::size_t m = ((std::max<std::size_t>(2, G) + G - 1) / G) * G;
  const std::size_t cap = std::max(m, cv.scope().size());
  while (true) {
    double mean = 0.0;
    for (int r = 0; r < reps; ++r) {
      const SubsampleIndices u = SubsampleIndices::draw(cv.scope(), m, G, rng);
      mean += residual_estimate(cv, theta, u, ledger).sigma2_hat / reps;
    }
    if (mean <= target || m >= cap) return m;
    m *= 2;
  }
}

RunResult execute_run(const RunConfig& cfg, const Dataset& data) {
  cfg.validate();
  const auto wall_start = Clock::now();
  RunResult res;
  res.config = cfg;
  res.data_fingerprint = data.fingerprint();
  const Algorithm alg = cfg.algorithm;

  if (data.positive_index().size() + data.negative_index().size() != data.n())
    throw ConfigError("the logistic model needs binary (0/1) responses");
  const LogisticModel model;
  Prior prior;
  prior.variance_scale = cfg.prior_variance;
  prior.validate();

  EvalLedger setup;
  const PosteriorMode mode = posterior_mode(model, data, prior, &setup);
  res.theta_star = mode.theta;

  RunSizes& sz = res.sizes;
  sz.n = data.n();
  sz.p = data.p();
  sz.n_train = cfg.n_train;
  sz.burn_in = static_cast<std::uint64_t>(std::floor(cfg.burn_in_fraction * static_cast<double>(cfg.n_iters - cfg.n_train)));

  const std::vector<std::size_t>& scope = data.negative_index();
  std::optional<ClusterModel> dense_clusters;
  std::optional<ClusterModel> sparse_clusters;
  std::optional<ControlVariate> cv;
  std::optional<ControlVariate> cv_sparse;
  CostLedger& ledger = res.ledger;

  if (alg != Algorithm::mh) {
    if (scope.empty()) throw ConfigError("run '" + cfg.name + "': no y = 0 rows to subsample");
    sz.G = cfg.G;
    sz.n_exact = data.positive_index().size();
    if (cfg.cv_mode != CvMode::none) {
      sz.K = fraction_count(cfg.K_fraction, sz.n);
      if (sz.K > scope.size())
        throw ConfigError("run '" + cfg.name + "': K_fraction: K = " + std::to_string(sz.K) + " exceeds the " +
                          std::to_string(scope.size()) + " clustered rows");
      dense_clusters = build_clusters(data, sz.K, scope, cfg.seed);
      cv.emplace(data, model, *dense_clusters, cfg.cv_mode, mode.theta);
    } else {
      cv = ControlVariate::none(data, model, scope);
    }
    if (uses_surrogate(alg)) {
      sz.K1 = fraction_count(cfg.K1_fraction, sz.n);
      sparse_clusters = build_clusters(data, sz.K1, scope, cfg.seed + 0x9e3779b97f4a7c15ULL);
      cv_sparse.emplace(data, model, *sparse_clusters, cfg.cv_mode, mode.theta);
    }
    if (cfg.m_sigma2_target) {
      Rng cal = make_rng(cfg.seed, 3);
      sz.m = calibrate_m(*cv, mode.theta, sz.G, *cfg.m_sigma2_target, cal, &setup);
    } else {
      sz.m = m_from_fraction(cfg.m_fraction, sz.n, sz.G);
    }
    // Full-evaluation timings for the CPU model of the MH baseline.
    for (int i = 0; i < kFullEvalProbes; ++i) {
      const auto t0 = Clock::now();
      static_cast<void>(full_log_likelihood(model, data, mode.theta, &setup));
      ledger.full_eval_times.push_back(seconds_since(t0));
    }
  }

  SamplerContext ctx;
  ctx.data = &data;
  ctx.model = &model;
  ctx.prior = prior;
  ctx.cv = cv ? &*cv : nullptr;
  ctx.cv_sparse = cv_sparse ? &*cv_sparse : nullptr;
  ctx.m = sz.m;
  ctx.blocks = sz.G;
  ctx.u_refresh_prob = alg == Algorithm::da_mh ? cfg.u_refresh_prob : 0.0;
  ctx.corrected = cfg.correction;
  ctx.training = uses_surrogate(alg);
  ctx.ledger = &ledger.evals;

  ProposalConfig proposal = make_proposal(mode.covariance, cfg.effective_target_alpha1(),
                                          static_cast<int>(cfg.n_train));
  Rng rng = make_rng(cfg.seed, 1);
  Rng aux = make_rng(cfg.seed, 2);
  ChainState state = init_chain(alg, ctx, mode.theta, aux);

  const std::size_t p = sz.p;
  const std::uint64_t first_used = cfg.n_train + sz.burn_in + 1;
  const std::uint64_t n_used = cfg.n_iters - first_used + 1;
  res.draws.resize(static_cast<Eigen::Index>(n_used), static_cast<Eigen::Index>(p));
  std::vector<DiscrepancySample> training;
  double alpha1_sum = 0.0;
  std::uint64_t alpha1_count = 0;
  std::uint64_t extrapolations = 0;

  std::string& csv = res.chain_csv;
  csv.reserve(static_cast<std::size_t>(cfg.n_iters) * (24 * (p + 5)));
  csv += "iteration,phase";
  for (std::size_t j = 0; j < p; ++j) csv += ",theta_" + std::to_string(j);
  csv += ",alpha1,alpha2,stage2_entered,accepted,u_refreshed,sigma_r,evals\n";

  for (std::uint64_t it = 1; it <= cfg.n_iters; ++it) {
    StepRecord rec;
    try {
      rec = step(alg, state, ctx, proposal, rng, aux);
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << e.what() << "\nrun '" << cfg.name << "' iteration " << it << "\ncurrent theta = ["
         << state.theta.transpose() << "]\nlog_first_stage = " << state.log_first_stage
         << "\nlog_second_stage = " << state.log_second_stage << "\nstep_scale = " << proposal.step_scale;
      throw NumericalError(os.str());
    }
    const bool train_phase = it <= cfg.n_train;
    if (train_phase) adapt_scale(proposal, rec.alpha1, it);

    if (rec.u_refreshed) ++ledger.refreshes;
    if (rec.training_pair) {
      training.push_back(std::move(*rec.training_pair));
      ledger.training_times.push_back(rec.stage1_seconds);
    } else {
      if (alg != Algorithm::mh) ledger.stage1_times.push_back(rec.stage1_seconds);
      if (rec.stage2_entered && alg != Algorithm::pmmh && alg != Algorithm::bpmmh)
        ledger.stage2_times.push_back(rec.stage2_seconds);
    }
    const bool counts_full = alg == Algorithm::mh || alg == Algorithm::da_mh ||
                             (uses_surrogate(alg) && !train_phase);
    if (rec.stage2_entered && counts_full) ++ledger.full_evals;
    if (!train_phase) {
      alpha1_sum += rec.alpha1;
      ++alpha1_count;
      if (rec.alpha2) res.alpha2_values.push_back(*rec.alpha2);
      if (rec.surrogate_extrapolated) ++extrapolations;
    }
    if (it >= first_used) {
      res.draws.row(static_cast<Eigen::Index>(it - first_used)) = state.theta.transpose();
      if (rec.sigma_r) res.sigma_r_values.push_back(*rec.sigma_r);
    }

    csv += std::to_string(it);
    csv += train_phase ? ",train" : ",sample";
    for (std::size_t j = 0; j < p; ++j) {
      csv += ',';
      append_double(csv, state.theta[static_cast<Eigen::Index>(j)]);
    }
    csv += ',';
    append_double(csv, rec.alpha1);
    csv += ',';
    if (rec.alpha2) append_double(csv, *rec.alpha2);
    csv += rec.stage2_entered ? ",1" : ",0";
    csv += rec.accepted ? ",1" : ",0";
    csv += rec.u_refreshed ? ",1," : ",0,";
    if (rec.sigma_r) append_double(csv, *rec.sigma_r);
    csv += ',';
    csv += std::to_string(ledger.evals.count());
    csv += '\n';

    if (it == cfg.n_train && uses_surrogate(alg)) {
      res.surrogate = fit_surrogate(training, cfg.surrogate);
      if (res.surrogate->rank_deficient())
        std::cerr << "warning: run '" << cfg.name << "': surrogate design is rank deficient; minimum-norm fit used\n";
      ledger.fit_seconds = res.surrogate->fit_seconds();
      const double mean_train = stats::mean(ledger.training_times);
      res.surrogate->set_fit_cost_T(mean_train > 0.0 ? ledger.fit_seconds / mean_train : 0.0);
      sz.prediction_cost = res.surrogate->predict(state.theta).cost;
      ctx.surrogate = &*res.surrogate;
      ctx.training = false;
      refresh_first_stage(state, ctx);
    }
  }
  ledger.n_iters = cfg.n_iters;
  ledger.n_train = uses_surrogate(alg) ? cfg.n_train : 0;
  res.final_step_scale = proposal.step_scale;
  res.setup_evals = setup.count();

  EvalCostInputs in;
  in.algorithm = alg;
  in.n = sz.n;
  in.n_exact = sz.n_exact;
  in.K = sz.K;
  in.K1 = sz.K1;
  in.m = sz.m;
  in.prediction_cost = sz.prediction_cost;
  in.n_iters = cfg.n_iters;
  in.n_train = ledger.n_train;
  in.full_evals = ledger.full_evals;
  in.refreshes = ledger.refreshes;
  res.closed_form = eval_cost_model(in);
  if (res.closed_form.total() != ledger.evals.count())
    throw NumericalError("run '" + cfg.name + "': evaluation ledger " + std::to_string(ledger.evals.count()) +
                         " disagrees with the closed form " + std::to_string(res.closed_form.total()));

  DiagnosticsReport& rep = res.report;
  rep.n_iters = cfg.n_iters;
  rep.n_used = n_used;
  rep.eval_count = ledger.evals.count();
  rep.fulleval = ledger.full_evals;
  rep.alpha1 = alpha1_count ? alpha1_sum / static_cast<double>(alpha1_count) : 0.0;
  if (is_delayed(alg) && !res.alpha2_values.empty()) rep.alpha2_cond = stats::mean(res.alpha2_values);
  if (!res.sigma_r_values.empty()) rep.sigma_r_bar = stats::mean(res.sigma_r_values);
  rep.surrogate_extrapolations = extrapolations;
  rep.if_max = 1.0;
  for (std::size_t j = 0; j < p; ++j) {
    const Vector col = res.draws.col(static_cast<Eigen::Index>(j));
    const std::span<const double> s(col.data(), static_cast<std::size_t>(col.size()));
    const InefficiencyFactor f = inefficiency_factor(s);
    if (f.warning == IfWarning::constant_chain)
      std::cerr << "warning: run '" << cfg.name << "': theta_" << j << " never moved; IF is infinite\n";
    rep.if_per_param.push_back(f.value);
    rep.if_max = std::max(rep.if_max, f.value);
    rep.posterior_mean.push_back(stats::mean(s));
    rep.posterior_sd.push_back(std::sqrt(stats::variance(s)));
  }
  const auto N = static_cast<double>(cfg.n_iters);
  rep.ed_evals = std::isfinite(rep.if_max) ? effective_draws(N, rep.if_max, static_cast<double>(rep.eval_count)) : 0.0;

  TimingReport& tim = res.timing;
  const CpuCost cpu = cpu_cost_model(ledger, alg);
  tim.cpu_algorithm = cpu.algorithm;
  tim.cpu_mh_baseline = cpu.mh_baseline;
  tim.ed_time = std::isfinite(rep.if_max) && cpu.algorithm > 0.0 ? N / (rep.if_max * cpu.algorithm) : 0.0;
  if (res.surrogate) {
    tim.fit_cost_T = res.surrogate->fit_cost_T();
    tim.fit_evals = tim.fit_cost_T * static_cast<double>(sz.K1 + sz.K + sz.m);
  }
  tim.ed_evals_incl_fit = std::isfinite(rep.if_max)
                              ? N / (rep.if_max * (static_cast<double>(rep.eval_count) + tim.fit_evals))
                              : 0.0;
  tim.wall_seconds = seconds_since(wall_start);
  return res;
}

void apply_baseline(RunResult& r, const RunResult& b) {
  if (r.data_fingerprint != b.data_fingerprint)
    throw ConfigError("run '" + r.config.name + "' and baseline '" + b.config.name + "' use different datasets");
  if (b.report.ed_evals > 0.0) {
    r.report.red_evals = relative_efficiency(r.report.ed_evals, b.report.ed_evals);
    const std::size_t p = r.report.if_per_param.size();
    double acc = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double ed = static_cast<double>(r.report.n_iters) /
                        (r.report.if_per_param[j] * static_cast<double>(r.report.eval_count));
      const double ed_b = static_cast<double>(b.report.n_iters) /
                          (b.report.if_per_param[j] * static_cast<double>(b.report.eval_count));
      acc += ed / ed_b;
    }
    r.report.red_evals_mean = acc / static_cast<double>(p);
  }
  if (b.timing.ed_time > 0.0) {
    r.timing.red_time = r.timing.ed_time / b.timing.ed_time;
    const std::size_t p = r.report.if_per_param.size();
    double acc = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double ed = static_cast<double>(r.report.n_iters) / (r.report.if_per_param[j] * r.timing.cpu_algorithm);
      const double ed_b = static_cast<double>(b.report.n_iters) / (b.report.if_per_param[j] * b.timing.cpu_algorithm);
      acc += ed / ed_b;
    }
    r.timing.red_time_mean = acc / static_cast<double>(p);
  }
}

namespace {

json manifest_json(const RunResult& r) {
  json j;
  j["code_version"] = kCodeVersion;
  j["run"] = r.config.name;
  j["algorithm"] = std::string(to_string(r.config.algorithm));
  j["seed"] = r.config.seed;
  json echo = json::object();
  for (const auto& [k, v] : r.config.echo) echo[k] = v;
  j["config"] = echo;
  json resolved;
  resolved["cv_mode"] = std::string(to_string(r.config.cv_mode));
  resolved["K_fraction"] = r.config.K_fraction;
  resolved["K1_fraction"] = r.config.K1_fraction;
  resolved["m_fraction"] = r.config.m_fraction;
  resolved["surrogate"] = std::string(to_string(r.config.surrogate));
  resolved["n_iters"] = r.config.n_iters;
  resolved["n_train"] = r.config.n_train;
  resolved["burn_in_fraction"] = r.config.burn_in_fraction;
  resolved["u_refresh_prob"] = r.config.u_refresh_prob;
  resolved["target_alpha1"] = r.config.effective_target_alpha1();
  resolved["correction"] = r.config.correction;
  resolved["prior_variance"] = r.config.prior_variance;
  j["resolved"] = resolved;
  json data;
  data["fingerprint"] = r.data_fingerprint;
  data["n"] = r.sizes.n;
  data["p"] = r.sizes.p;
  if (r.config.data.synthetic) {
    const SyntheticSpec& s = *r.config.data.synthetic;
    data["synthetic"] = {{"n", s.n},
                         {"p", s.p},
                         {"beta", std::vector<double>(s.true_beta.data(), s.true_beta.data() + s.true_beta.size())},
                         {"law", std::string(to_string(s.covariate_law))},
                         {"seed", s.seed}};
  } else {
    data["path"] = r.config.data.path.string();
  }
  j["data"] = data;
  j["sizes"] = {{"n", r.sizes.n},         {"p", r.sizes.p},     {"n_exact", r.sizes.n_exact},
                {"K", r.sizes.K},         {"K1", r.sizes.K1},   {"m", r.sizes.m},
                {"G", r.sizes.G},         {"prediction_cost", r.sizes.prediction_cost},
                {"n_train", r.sizes.n_train}, {"burn_in", r.sizes.burn_in}};
  j["counters"] = {{"eval_count", r.ledger.evals.count()},
                   {"full_evals", r.ledger.full_evals},
                   {"refreshes", r.ledger.refreshes},
                   {"n_iters", r.ledger.n_iters},
                   {"n_train_costed", r.ledger.n_train},
                   {"setup_evals", r.setup_evals}};
  j["closed_form"] = {{"init", r.closed_form.init},
                      {"training", r.closed_form.training},
                      {"sampling", r.closed_form.sampling},
                      {"total", r.closed_form.total()}};
  j["theta_star"] = std::vector<double>(r.theta_star.data(), r.theta_star.data() + r.theta_star.size());
  j["final_step_scale"] = r.final_step_scale;
  if (r.surrogate) {
    j["surrogate"] = {{"backend", std::string(to_string(r.surrogate->backend()))},
                      {"n_train", r.surrogate->n_train()},
                      {"rank_deficient", r.surrogate->rank_deficient()},
                      {"residual_rms", r.surrogate->residual_rms()},
                      {"prediction_cost", r.sizes.prediction_cost}};
  } else {
    j["surrogate"] = nullptr;
  }
  return j;
}

}  // namespace

void write_run(const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "chain.csv", r.chain_csv);
  write_file(dir / "report.json", to_json(r.report));
  write_file(dir / "timing.json", to_json(r.timing));
  write_file(dir / "manifest.json", manifest_json(r).dump(2) + "\n");
  if (r.surrogate) write_file(dir / "surrogate.bin", r.surrogate->serialize());
}

std::string comparison_csv(const std::vector<RunResult>& runs, const RunResult* baseline) {
  std::string out =
      "run,algorithm,cv_mode,K_fraction,K1_fraction,m,G,surrogate,red_time,red_evals,red_evals_mean,"
      "sigma_r_bar,alpha1,alpha2_cond,if_max,fulleval,eval_count,max_abs_mean_diff_sd,min_overlap\n";
  for (const RunResult& r : runs) {
    const bool subsampled = r.config.algorithm != Algorithm::mh;
    out += r.config.name + "," + std::string(to_string(r.config.algorithm)) + ",";
    out += subsampled ? std::string(to_string(r.config.cv_mode)) : "";
    out += ",";
    if (subsampled && r.config.cv_mode != CvMode::none) append_double(out, r.config.K_fraction);
    out += ",";
    if (uses_surrogate(r.config.algorithm)) append_double(out, r.config.K1_fraction);
    out += ",";
    if (subsampled) out += std::to_string(r.sizes.m);
    out += ",";
    if (subsampled) out += std::to_string(r.sizes.G);
    out += ",";
    if (uses_surrogate(r.config.algorithm)) out += std::string(to_string(r.config.surrogate));
    auto opt = [&](const std::optional<double>& v) {
      out += ",";
      if (v) append_double(out, *v);
    };
    opt(r.timing.red_time);
    opt(r.report.red_evals);
    opt(r.report.red_evals_mean);
    opt(r.report.sigma_r_bar);
    opt(r.report.alpha1);
    opt(r.report.alpha2_cond);
    opt(r.report.if_max);
    out += "," + std::to_string(r.report.fulleval) + "," + std::to_string(r.report.eval_count);
    std::optional<double> max_diff;
    std::optional<double> min_overlap;
    if (baseline != nullptr && baseline->draws.cols() == r.draws.cols()) {
      const auto agreement = posterior_agreement(r.draws, baseline->draws);
      max_diff = 0.0;
      min_overlap = 1.0;
      for (const auto& a : agreement) {
        max_diff = std::max(*max_diff, std::abs(a.mean_diff_pooled_sd));
        min_overlap = std::min(*min_overlap, a.overlap);
      }
    }
    opt(max_diff);
    opt(min_overlap);
    out += "\n";
  }
  return out;
}

std::string density_grid_csv(const std::vector<RunResult>& runs, std::size_t points) {
  if (runs.empty()) return "";
  std::string out = "param,x";
  for (const RunResult& r : runs) out += "," + r.config.name;
  out += "\n";
  const Eigen::Index p = runs.front().draws.cols();
  for (Eigen::Index j = 0; j < p; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double h_max = 0.0;
    std::vector<std::vector<double>> cols;
    for (const RunResult& r : runs) {
      if (r.draws.cols() != p) throw ConfigError("density grid: runs differ in dimension");
      const Vector c = r.draws.col(j);
      cols.emplace_back(c.data(), c.data() + c.size());
      lo = std::min(lo, c.minCoeff());
      hi = std::max(hi, c.maxCoeff());
      h_max = std::max(h_max, stats::silverman_bandwidth(cols.back()));
    }
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i)
      grid[i] = lo - 3 * h_max + (hi - lo + 6 * h_max) * static_cast<double>(i) / static_cast<double>(points - 1);
    std::vector<std::vector<double>> dens;
    for (const auto& c : cols) dens.push_back(stats::kde(c, grid, stats::silverman_bandwidth(c)));
    for (std::size_t i = 0; i < points; ++i) {
      out += std::to_string(j) + ",";
      append_double(out, grid[i]);
      for (const auto& d : dens) {
        out += ",";
        append_double(out, d[i]);
      }
      out += "\n";
    }
  }
  return out;
}

std::vector<RunResult> run_experiment(ExperimentConfig config, const RunOptions& options) {
  if (options.output_dir) config.output_dir = *options.output_dir;
  for (RunConfig& r : config.runs) {
    if (options.seed) {
      r.seed = *options.seed;
      r.echo["seed"] = std::to_string(*options.seed);
    }
    r.output_dir = config.output_dir / r.name;
  }

  // One dataset per distinct source, loaded up front.
  std::map<std::string, std::shared_ptr<const Dataset>> cache;
  std::vector<std::shared_ptr<const Dataset>> data_for(config.runs.size());
  for (std::size_t i = 0; i < config.runs.size(); ++i) {
    const DataConfig& d = config.runs[i].data;
    std::ostringstream key;
    if (d.synthetic) {
      key << "syn:" << d.synthetic->n << ":" << d.synthetic->p << ":" << d.synthetic->seed << ":"
          << to_string(d.synthetic->covariate_law);
      for (Eigen::Index j = 0; j < d.synthetic->true_beta.size(); ++j) key << ":" << d.synthetic->true_beta[j];
    } else {
      key << "path:" << d.path.string();
    }
    auto& slot = cache[key.str()];
    if (!slot) slot = std::make_shared<const Dataset>(load_dataset(d));
    data_for[i] = slot;
  }

  std::vector<RunResult> results(config.runs.size());
  std::vector<std::exception_ptr> errors(config.runs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < config.runs.size(); i = next++) {
      try {
        results[i] = execute_run(config.runs[i], *data_for[i]);
        std::lock_guard lock(log_mutex);
        std::cerr << "run '" << config.runs[i].name << "': " << results[i].report.n_iters << " iterations, IF max "
                  << results[i].report.if_max << ", alpha1 " << results[i].report.alpha1 << "\n";
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(config.runs.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const NumericalError& e) {
      std::filesystem::create_directories(config.runs[i].output_dir);
      write_file(config.runs[i].output_dir / "failure.txt", std::string(e.what()) + "\n");
      throw;
    }
  }

  const RunResult* baseline = nullptr;
  if (config.baseline) {
    for (const RunResult& r : results)
      if (r.config.name == *config.baseline) baseline = &r;
    const RunResult base_copy_ref = *baseline;
    for (RunResult& r : results) apply_baseline(r, base_copy_ref);
  }
  for (const RunResult& r : results) write_run(r, r.config.output_dir);
  if (baseline != nullptr) {
    std::filesystem::create_directories(config.output_dir);
    write_file(config.output_dir / "comparison.csv", comparison_csv(results, baseline));
    write_file(config.output_dir / "density_grid.csv", density_grid_csv(results));
  }
  return results;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct ChainTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  [[nodiscard]] std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("chain.csv: missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

ChainTable read_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  ChainTable t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + " is empty");
  t.header = split_csv_line(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split_csv_line(line));
  return t;
}

}  // namespace

LoadedRun load_run(const std::filesystem::path& dir) {
  LoadedRun run;
  run.dir = dir;
  const json manifest = json::parse(read_file(dir / "manifest.json"));
  run.name = manifest.at("run").get<std::string>();
  run.algorithm = manifest.at("algorithm").get<std::string>();
  run.fingerprint = manifest.at("data").at("fingerprint").get<std::uint64_t>();
  run.report = report_from_json(read_file(dir / "report.json"));
  if (std::filesystem::exists(dir / "timing.json")) {
    const json timing = json::parse(read_file(dir / "timing.json"));
    run.ed_time = timing.at("ed_time").get<double>();
  }
  const auto p = manifest.at("sizes").at("p").get<std::size_t>();
  const auto first_used = manifest.at("sizes").at("n_train").get<std::uint64_t>() +
                          manifest.at("sizes").at("burn_in").get<std::uint64_t>() + 1;
  const ChainTable chain = read_chain(dir / "chain.csv");
  const std::size_t theta0 = chain.column("theta_0");
  std::vector<const std::vector<std::string>*> used;
  for (const auto& row : chain.rows)
    if (std::stoull(row[0]) >= first_used) used.push_back(&row);
  run.draws.resize(static_cast<Eigen::Index>(used.size()), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < used.size(); ++i)
    for (std::size_t j = 0; j < p; ++j)
      run.draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::stod((*used[i])[theta0 + j]);
  return run;
}

std::string compare_runs(const std::vector<std::filesystem::path>& dirs) {
  if (dirs.size() < 2) throw ConfigError("compare: need a baseline and at least one more run");
  std::vector<LoadedRun> runs;
  for (const auto& d : dirs) runs.push_back(load_run(d));
  const LoadedRun& base = runs.front();
  std::string out =
      "run,algorithm,red_evals,red_evals_mean,red_time,max_abs_mean_diff_sd,max_abs_mean_diff_mcse,min_ks_distance_p,"
      "min_overlap\n";
  for (const LoadedRun& r : runs) {
    if (r.fingerprint != base.fingerprint)
      throw ConfigError("compare: run '" + r.name + "' uses a different dataset than baseline '" + base.name + "'");
    if (r.draws.cols() != base.draws.cols()) throw ConfigError("compare: dimension mismatch for run '" + r.name + "'");
    out += r.name + "," + r.algorithm + ",";
    const double red = relative_efficiency(r.report.ed_evals, base.report.ed_evals);
    append_double(out, red);
    out += ",";
    double acc = 0.0;
    const std::size_t p = r.report.if_per_param.size();
    for (std::size_t j = 0; j < p; ++j)
      acc += (static_cast<double>(r.report.n_iters) / (r.report.if_per_param[j] * static_cast<double>(r.report.eval_count))) /
             (static_cast<double>(base.report.n_iters) /
              (base.report.if_per_param[j] * static_cast<double>(base.report.eval_count)));
    append_double(out, acc / static_cast<double>(p));
    out += ",";
    if (r.ed_time && base.ed_time && *base.ed_time > 0.0) append_double(out, *r.ed_time / *base.ed_time);
    const auto agreement = posterior_agreement(r.draws, base.draws);
    double max_sd = 0.0, max_se = 0.0, min_p = 1.0, min_ov = 1.0;
    for (const auto& a : agreement) {
      max_sd = std::max(max_sd, std::abs(a.mean_diff_pooled_sd));
      max_se = std::max(max_se, std::abs(a.mean_diff_mcse));
      min_p = std::min(min_p, a.ks_p_value);
      min_ov = std::min(min_ov, a.overlap);
    }
    for (double v : {max_sd, max_se, min_p, min_ov}) {
      out += ",";
      append_double(out, v);
    }
    out += "\n";
  }
  return out;
}

std::vector<AuditCheck> audit_run(const std::filesystem::path& dir) {
  std::vector<AuditCheck> checks;
  const json manifest = json::parse(read_file(dir / "manifest.json"));
  const DiagnosticsReport report = report_from_json(read_file(dir / "report.json"));
  const ChainTable chain = read_chain(dir / "chain.csv");
  const Algorithm alg = parse_algorithm(manifest.at("algorithm").get<std::string>());
  const json& sizes = manifest.at("sizes");
  const json& counters = manifest.at("counters");
  const auto n_train = sizes.at("n_train").get<std::uint64_t>();
  const auto burn_in = sizes.at("burn_in").get<std::uint64_t>();
  const auto p = sizes.at("p").get<std::size_t>();

  auto relclose = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); };
  auto add = [&](std::string name, bool ok, std::string detail) {
    checks.push_back({std::move(name), ok, std::move(detail)});
  };

  const std::size_t c_alpha1 = chain.column("alpha1");
  const std::size_t c_alpha2 = chain.column("alpha2");
  const std::size_t c_stage2 = chain.column("stage2_entered");
  const std::size_t c_refresh = chain.column("u_refreshed");
  const std::size_t c_evals = chain.column("evals");
  const std::size_t c_theta = chain.column("theta_0");

  std::uint64_t full_evals = 0, refreshes = 0;
  double a1 = 0.0;
  std::uint64_t a1_n = 0;
  std::vector<double> a2;
  std::vector<std::vector<double>> draws(p);
  for (const auto& row : chain.rows) {
    const std::uint64_t it = std::stoull(row[0]);
    const bool train = it <= n_train;
    const bool stage2 = row[c_stage2] == "1";
    if (row[c_refresh] == "1") ++refreshes;
    if (stage2 && (alg == Algorithm::mh || alg == Algorithm::da_mh || (uses_surrogate(alg) && !train))) ++full_evals;
    if (!train) {
      a1 += std::stod(row[c_alpha1]);
      ++a1_n;
      if (!row[c_alpha2].empty()) a2.push_back(std::stod(row[c_alpha2]));
    }
    if (it > n_train + burn_in)
      for (std::size_t j = 0; j < p; ++j) draws[j].push_back(std::stod(row[c_theta + j]));
  }

  const auto n_iters = static_cast<std::uint64_t>(chain.rows.size());
  add("n_iters", n_iters == report.n_iters, std::to_string(n_iters) + " rows vs " + std::to_string(report.n_iters));
  add("fulleval", full_evals == report.fulleval,
      std::to_string(full_evals) + " from chain vs " + std::to_string(report.fulleval));

  EvalCostInputs in;
  in.algorithm = alg;
  in.n = sizes.at("n").get<std::uint64_t>();
  in.n_exact = sizes.at("n_exact").get<std::uint64_t>();
  in.K = sizes.at("K").get<std::uint64_t>();
  in.K1 = sizes.at("K1").get<std::uint64_t>();
  in.m = sizes.at("m").get<std::uint64_t>();
  in.prediction_cost = sizes.at("prediction_cost").get<std::uint64_t>();
  in.n_iters = n_iters;
  in.n_train = uses_surrogate(alg) ? n_train : 0;
  in.full_evals = full_evals;
  in.refreshes = refreshes;
  const std::uint64_t closed = eval_cost_model(in).total();
  const std::uint64_t last_evals = chain.rows.empty() ? 0 : std::stoull(chain.rows.back()[c_evals]);
  add("eval_count_closed_form", closed == report.eval_count,
      std::to_string(closed) + " closed form vs " + std::to_string(report.eval_count) + " reported");
  add("eval_count_chain", last_evals == report.eval_count &&
                              counters.at("eval_count").get<std::uint64_t>() == report.eval_count,
      std::to_string(last_evals) + " in chain.csv vs " + std::to_string(report.eval_count));

  add("alpha1", a1_n > 0 && relclose(a1 / static_cast<double>(a1_n), report.alpha1), "mean over post-training rows");
  if (is_delayed(alg))
    add("alpha2_cond", report.alpha2_cond.has_value() && !a2.empty() && relclose(stats::mean(a2), *report.alpha2_cond),
        "mean over stage-2 rows");

  double if_max = 1.0;
  bool if_ok = report.if_per_param.size() == p;
  for (std::size_t j = 0; j < p && if_ok; ++j) {
    const double v = inefficiency_factor(draws[j]).value;
    if_max = std::max(if_max, v);
    if_ok = (std::isinf(v) && std::isinf(report.if_per_param[j])) || relclose(v, report.if_per_param[j]);
  }
  add("if", if_ok, "per-parameter IF recomputed from chain.csv");
  const double ed = std::isfinite(if_max) ? static_cast<double>(n_iters) / (if_max * static_cast<double>(closed)) : 0.0;
  add("ed_evals", relclose(ed, report.ed_evals), "N / (IF_max * evals)");
  return checks;
}

}  // namespace damc
