// damc: run, compare and audit delayed-acceptance / pseudo-marginal chains.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "damc/config.hpp"
#include "damc/dataset.hpp"
#include "damc/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::string> out,
            unsigned jobs) {
  damc::ExperimentConfig config = damc::load_config(config_path);
  damc::RunOptions options;
  options.seed = seed;
  if (out) options.output_dir = *out;
  options.jobs = jobs;
  const auto results = damc::run_experiment(std::move(config), options);
  for (const auto& r : results) {
    std::printf("%s\t%s\tIF_max=%.4g\talpha1=%.4f\tevals=%llu\tdir=%s\n", r.config.name.c_str(),
                std::string(damc::to_string(r.config.algorithm)).c_str(), r.report.if_max, r.report.alpha1,
                static_cast<unsigned long long>(r.report.eval_count), r.config.output_dir.string().c_str());
  }
  return kOk;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out) {
  const damc::SyntheticSpec spec = damc::load_synthetic_spec(spec_path);
  const damc::Dataset data = damc::generate_synthetic(spec);
  damc::save_binary(data, out);
  std::printf("wrote %s: n=%zu p=%zu positives=%zu fingerprint=%016llx\n", out.c_str(), data.n(), data.p(),
              data.positive_index().size(), static_cast<unsigned long long>(data.fingerprint()));
  return kOk;
}

int cmd_audit(const std::string& dir) {
  const auto checks = damc::audit_run(dir);
  bool ok = true;
  for (const auto& c : checks) {
    std::printf("%s %s: %s\n", c.ok ? "ok  " : "FAIL", c.name.c_str(), c.detail.c_str());
    ok = ok && c.ok;
  }
  return ok ? kOk : kNumericalError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Delayed-acceptance and pseudo-marginal MCMC with subsampled likelihoods"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  unsigned jobs = 1;
  auto* run = app.add_subcommand("run", "Run every chain in a config file");
  run->add_option("--config", config_path, "INI experiment config")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the seed of every run");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--jobs", jobs, "Runs executed concurrently")->check(CLI::PositiveNumber);

  std::string baseline;
  std::vector<std::string> others;
  auto* compare = app.add_subcommand("compare", "RED and posterior agreement against a baseline run");
  compare->add_option("--baseline", baseline, "Baseline run directory")->required()->check(CLI::ExistingDirectory);
  compare->add_option("dirs", others, "Run directories")->required()->check(CLI::ExistingDirectory);

  std::string spec_path;
  std::string data_out;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic logistic dataset (SMC1 binary)");
  gen->add_option("--spec", spec_path, "Generator spec (INI)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", data_out, "Output path")->required();

  std::string audit_dir;
  auto* audit = app.add_subcommand("audit", "Recompute report numbers from a run directory");
  audit->add_option("--run", audit_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(config_path, seed, out_dir, jobs);
    if (*compare) {
      std::vector<std::filesystem::path> dirs{baseline};
      for (const auto& d : others) dirs.emplace_back(d);
      std::cout << damc::compare_runs(dirs);
      return kOk;
    }
    if (*gen) return cmd_gen_data(spec_path, data_out);
    if (*audit) return cmd_audit(audit_dir);
  } catch (const damc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const damc::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumericalError;
  }
  return kOk;
}
