#include "damc/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace damc {

namespace {

namespace pt = boost::property_tree;

using KeyValues = std::vector<std::pair<std::string, std::string>>;

const std::set<std::string> kRunKeys = {
    "algorithm", "cv_mode", "K_fraction", "K1_fraction", "m_fraction", "m_sigma2_target", "G", "surrogate",
    "n_iters",   "n_train", "burn_in_fraction", "u_refresh_prob", "target_alpha1", "seed", "correction",
    "prior_variance"};
const std::set<std::string> kDataKeys = {"n", "p", "beta", "law", "seed", "path"};
const std::set<std::string> kTopOnlyKeys = {"baseline", "output_dir"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class FieldError {
 public:
  FieldError(std::string where, std::string key) : where_(std::move(where)), key_(std::move(key)) {}
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(where_ + ": " + key_ + ": " + what);
  }

 private:
  std::string where_;
  std::string key_;
};

double to_double(const std::string& where, const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    FieldError(where, key).fail("expected a number, got '" + v + "'");
  }
  if (used != v.size() || !std::isfinite(out)) FieldError(where, key).fail("expected a finite number, got '" + v + "'");
  return out;
}

std::uint64_t to_count(const std::string& where, const std::string& key, const std::string& v) {
  const double d = to_double(where, key, v);
  if (d < 0.0 || d != std::floor(d) || d > 1e15) FieldError(where, key).fail("expected a non-negative integer, got '" + v + "'");
  return static_cast<std::uint64_t>(d);
}

bool to_bool(const std::string& where, const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  FieldError(where, key).fail("expected on/off, got '" + v + "'");
}

template <class F>
auto wrap(const std::string& where, const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + key + ": " + e.what());
  }
}

void apply_run_key(RunConfig& run, const std::string& where, const std::string& key, const std::string& v) {
  if (key == "algorithm") run.algorithm = wrap(where, key, [&] { return parse_algorithm(v); });
  else if (key == "cv_mode") run.cv_mode = wrap(where, key, [&] { return parse_cv_mode(v); });
  else if (key == "K_fraction") run.K_fraction = to_double(where, key, v);
  else if (key == "K1_fraction") run.K1_fraction = to_double(where, key, v);
  else if (key == "m_fraction") run.m_fraction = to_double(where, key, v);
  else if (key == "m_sigma2_target") run.m_sigma2_target = to_double(where, key, v);
  else if (key == "G") run.G = to_count(where, key, v);
  else if (key == "surrogate") run.surrogate = wrap(where, key, [&] { return parse_surrogate_backend(v); });
  else if (key == "n_iters") run.n_iters = to_count(where, key, v);
  else if (key == "n_train") run.n_train = to_count(where, key, v);
  else if (key == "burn_in_fraction") run.burn_in_fraction = to_double(where, key, v);
  else if (key == "u_refresh_prob") run.u_refresh_prob = to_double(where, key, v);
  else if (key == "target_alpha1") run.target_alpha1 = to_double(where, key, v);
  else if (key == "seed") run.seed = to_count(where, key, v);
  else if (key == "correction") run.correction = to_bool(where, key, v);
  else if (key == "prior_variance") run.prior_variance = to_double(where, key, v);
  else throw ConfigError(where + ": unknown key '" + key + "'");
  run.echo[key] = v;
}

DataConfig parse_data(const KeyValues& kv, const std::filesystem::path& base_dir) {
  const std::string where = "[data]";
  DataConfig data;
  SyntheticSpec spec;
  bool synthetic = false;
  bool have_beta = false;
  for (const auto& [key, v] : kv) {
    if (key == "path") {
      data.path = std::filesystem::path(v).is_absolute() ? std::filesystem::path(v) : base_dir / v;
    } else if (key == "n") {
      spec.n = to_count(where, key, v);
      synthetic = true;
    } else if (key == "p") {
      spec.p = to_count(where, key, v);
      synthetic = true;
    } else if (key == "beta") {
      const auto items = split_list(v);
      spec.true_beta.resize(static_cast<Eigen::Index>(items.size()));
      for (std::size_t i = 0; i < items.size(); ++i)
        spec.true_beta[static_cast<Eigen::Index>(i)] = to_double(where, key, items[i]);
      have_beta = true;
      synthetic = true;
    } else if (key == "law") {
      spec.covariate_law = wrap(where, key, [&] { return parse_covariate_law(v); });
    } else if (key == "seed") {
      spec.seed = to_count(where, key, v);
    } else {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
  if (!data.path.empty() && synthetic) throw ConfigError("[data]: give either path or a synthetic spec, not both");
  if (data.path.empty()) {
    if (!synthetic) throw ConfigError("[data]: missing (need path, or n, p and beta)");
    if (!have_beta) throw ConfigError("[data]: beta: required for synthetic data");
    if (spec.n < 1) FieldError(where, "n").fail("must be >= 1");
    if (spec.p < 1) FieldError(where, "p").fail("must be >= 1");
    if (static_cast<std::size_t>(spec.true_beta.size()) != spec.p)
      FieldError(where, "beta").fail("needs exactly p = " + std::to_string(spec.p) + " entries");
    data.synthetic = spec;
  }
  return data;
}

KeyValues children(const pt::ptree& tree) {
  KeyValues out;
  for (const auto& [key, node] : tree)
    if (node.empty()) out.emplace_back(trim(key), trim(node.data()));
  return out;
}

void check_fraction(const std::string& where, const char* key, double v) {
  if (!(v > 0.0 && v <= 1.0)) FieldError(where, key).fail("must lie in (0, 1], got " + std::to_string(v));
}

}  // namespace

double RunConfig::effective_target_alpha1() const {
  if (target_alpha1) return *target_alpha1;
  return is_pseudo_marginal(algorithm) ? 0.10 : 0.23;
}

void RunConfig::validate() const {
  const std::string where = "run '" + name + "'";
  if (n_iters <= n_train) FieldError(where, "n_iters").fail("must exceed n_train");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) FieldError(where, "burn_in_fraction").fail("must lie in [0, 1)");
  const double used = static_cast<double>(n_iters - n_train) * (1.0 - burn_in_fraction);
  if (used < 100.0) FieldError(where, "n_iters").fail("fewer than 100 post-burn-in draws");
  if (!(u_refresh_prob >= 0.0 && u_refresh_prob <= 1.0)) FieldError(where, "u_refresh_prob").fail("must lie in [0, 1]");
  const double target = effective_target_alpha1();
  if (!(target > 0.0 && target < 1.0)) FieldError(where, "target_alpha1").fail("must lie in (0, 1)");
  if (!(prior_variance > 0.0)) FieldError(where, "prior_variance").fail("must be > 0");
  if (algorithm == Algorithm::mh) return;
  if (G < 1) FieldError(where, "G").fail("must be >= 1");
  if (cv_mode != CvMode::none) check_fraction(where, "K_fraction", K_fraction);
  if (m_sigma2_target) {
    if (!(*m_sigma2_target > 0.0)) FieldError(where, "m_sigma2_target").fail("must be > 0");
  } else {
    check_fraction(where, "m_fraction", m_fraction);
  }
  if (uses_surrogate(algorithm)) {
    if (cv_mode == CvMode::none) FieldError(where, "cv_mode").fail("the DA-PMMH family needs control variates");
    check_fraction(where, "K1_fraction", K1_fraction);
    if (K1_fraction > K_fraction) FieldError(where, "K1_fraction").fail("must not exceed K_fraction");
    if (n_train < 10) FieldError(where, "n_train").fail("the surrogate needs at least 10 training iterations");
  }
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  ExperimentConfig cfg;
  RunConfig defaults;
  std::optional<DataConfig> data;
  std::vector<std::pair<std::string, KeyValues>> run_sections;

  for (const auto& [key, node] : tree) {
    const std::string name = trim(key);
    if (node.empty()) {
      const std::string v = trim(node.data());
      if (name == "baseline") cfg.baseline = v;
      else if (name == "output_dir") cfg.output_dir = v;
      else if (kRunKeys.count(name)) apply_run_key(defaults, "top level", name, v);
      else throw ConfigError("top level: unknown key '" + name + "'");
      continue;
    }
    if (name == "data") {
      data = parse_data(children(node), base_dir);
    } else if (name.rfind("run ", 0) == 0) {
      const std::string run_name = trim(name.substr(4));
      if (run_name.empty()) throw ConfigError("[" + name + "]: run name is empty");
      run_sections.emplace_back(run_name, children(node));
    } else {
      throw ConfigError("unknown section [" + name + "]");
    }
  }
  if (!data) throw ConfigError("config: missing [data] section");
  if (run_sections.empty()) run_sections.emplace_back("run", KeyValues{});

  std::set<std::string> names;
  for (const auto& [run_name, kv] : run_sections) {
    const std::string where = "[run " + run_name + "]";
    RunConfig base = defaults;
    base.name = run_name;
    base.data = *data;
    std::vector<std::pair<std::string, std::vector<std::string>>> grid;
    for (const auto& [key, v] : kv) {
      if (key.rfind("grid.", 0) == 0) {
        const std::string gkey = key.substr(5);
        if (!kRunKeys.count(gkey)) throw ConfigError(where + ": unknown grid key '" + gkey + "'");
        auto values = split_list(v);
        if (values.empty()) throw ConfigError(where + ": " + key + ": empty value list");
        grid.emplace_back(gkey, std::move(values));
      } else if (kTopOnlyKeys.count(key) || (kDataKeys.count(key) && !kRunKeys.count(key))) {
        throw ConfigError(where + ": key '" + key + "' is not allowed in a run section");
      } else {
        apply_run_key(base, where, key, v);
      }
    }

    std::vector<std::size_t> index(grid.size(), 0);
    bool done = false;
    while (!done) {
      RunConfig run = base;
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto& [gkey, values] = grid[g];
        apply_run_key(run, where, gkey, values[index[g]]);
        run.name += "__" + gkey + "-" + values[index[g]];
      }
      if (!names.insert(run.name).second) throw ConfigError("duplicate run name '" + run.name + "'");
      run.validate();
      cfg.runs.push_back(std::move(run));
      // Odometer over the grid, last key fastest.
      done = true;
      for (std::size_t g = grid.size(); g-- > 0;) {
        if (++index[g] < grid[g].second.size()) {
          done = false;
          break;
        }
        index[g] = 0;
      }
    }
  }
  if (cfg.baseline && !names.count(*cfg.baseline))
    throw ConfigError("baseline: no run named '" + *cfg.baseline + "'");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spec file " + path.string());
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("spec: ") + e.what());
  }
  KeyValues kv;
  for (const auto& [key, node] : tree) {
    if (node.empty()) kv.emplace_back(trim(key), trim(node.data()));
    else if (trim(key) == "data")
      for (auto& item : children(node)) kv.push_back(item);
  }
  const DataConfig data = parse_data(kv, path.parent_path());
  if (!data.synthetic) throw ConfigError("spec: gen-data needs a synthetic spec, not a path");
  return *data.synthetic;
}

}  // namespace damc
