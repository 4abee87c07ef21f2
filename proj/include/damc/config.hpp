#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "damc/dataset.hpp"
#include "damc/estimators.hpp"
#include "damc/samplers.hpp"
#include "damc/surrogate.hpp"

namespace damc {

/// Either a synthetic generator spec or a dataset file (.csv, anything else
/// is read as SMC1 binary).
struct DataConfig {
  std::optional<SyntheticSpec> synthetic;
  std::filesystem::path path;
};

/// One fully resolved run (grid cells are expanded into separate runs).
struct RunConfig {
  std::string name;
  Algorithm algorithm = Algorithm::mh;
  DataConfig data;
  CvMode cv_mode = CvMode::dynamic;
  double K_fraction = 0.0;
  double K1_fraction = 0.0;
  double m_fraction = 0.0;
  std::optional<double> m_sigma2_target;  // calibrate m at theta* instead of m_fraction
  std::size_t G = 1;
  SurrogateBackend surrogate = SurrogateBackend::linear;
  std::uint64_t n_iters = 10000;
  std::uint64_t n_train = 5000;
  double burn_in_fraction = 0.10;
  double u_refresh_prob = 0.01;
  std::optional<double> target_alpha1;  // default 0.23 (MH, DA-MH) or 0.10 (PMMH family)
  std::uint64_t seed = 1;
  bool correction = false;  // DA-MH first stage only
  double prior_variance = 10.0;
  std::filesystem::path output_dir;
  /// Every key that produced this run, for the manifest.
  std::map<std::string, std::string> echo;

  /// Field-level checks; throws ConfigError naming the run and key.
  void validate() const;
  [[nodiscard]] double effective_target_alpha1() const;
};

struct ExperimentConfig {
  std::vector<RunConfig> runs;
  std::optional<std::string> baseline;  // run name used for RED columns
  std::filesystem::path output_dir = "out";
};

/// INI text: top-level keys are defaults, [data] describes the dataset,
/// [run NAME] sections add runs and override defaults. `grid.KEY = a, b, c`
/// inside a run expands into the Cartesian product over all grid keys.
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// [data] section (or top-level keys) of a generator spec file.
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

}  // namespace damc
