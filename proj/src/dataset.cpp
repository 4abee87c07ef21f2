#include "damc/dataset.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace damc {

static_assert(std::endian::native == std::endian::little,
              "binary dataset format assumes a little-endian host");

Dataset::Dataset(Matrix covariates, Vector responses)
    : x_(std::move(covariates)), y_(std::move(responses)) {
  if (x_.rows() == 0 || x_.cols() == 0) throw ConfigError("dataset: empty covariate matrix");
  if (y_.size() != x_.rows()) throw ConfigError("dataset: response length does not match row count");
  if (!x_.allFinite()) throw ConfigError("dataset: non-finite covariate entry");
  if (!y_.allFinite()) throw ConfigError("dataset: non-finite response");
  positive_.reserve(static_cast<std::size_t>(y_.size()) / 8);
  negative_.reserve(static_cast<std::size_t>(y_.size()));
  for (Eigen::Index k = 0; k < y_.size(); ++k) {
    if (y_[k] == 1.0) positive_.push_back(static_cast<std::size_t>(k));
    else if (y_[k] == 0.0) negative_.push_back(static_cast<std::size_t>(k));
  }
}

std::uint64_t Dataset::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* c = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ull;
    }
  };
  const std::uint64_t dims[2] = {n(), p()};
  mix(dims, sizeof(dims));
  mix(y_.data(), sizeof(double) * static_cast<std::size_t>(y_.size()));
  mix(x_.data(), sizeof(double) * static_cast<std::size_t>(x_.size()));
  return h;
}

CovariateLaw parse_covariate_law(std::string_view text) {
  if (text == "normal" || text == "standard_normal") return CovariateLaw::standard_normal;
  if (text == "mixture" || text == "gaussian_mixture") return CovariateLaw::gaussian_mixture;
  throw ConfigError("unknown covariate_law '" + std::string(text) + "' (normal|mixture)");
}

std::string_view to_string(CovariateLaw law) {
  return law == CovariateLaw::standard_normal ? "normal" : "mixture";
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n < 1 || spec.p < 1) throw ConfigError("synthetic data: n and p must be >= 1");
  if (static_cast<std::size_t>(spec.true_beta.size()) != spec.p)
    throw ConfigError("synthetic data: true_beta must have length p");
  if (!spec.true_beta.allFinite()) throw ConfigError("synthetic data: non-finite true_beta");

  // Three-component mixture: weights, per-component mean and scale.
  constexpr std::array<double, 3> kWeights{0.5, 0.3, 0.2};
  constexpr std::array<double, 3> kMeans{-1.0, 0.5, 2.0};
  constexpr std::array<double, 3> kScales{0.5, 1.0, 0.75};

  Rng rng = make_rng(spec.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::discrete_distribution<int> component(kWeights.begin(), kWeights.end());
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto p = static_cast<Eigen::Index>(spec.p);
  Matrix x(n, p);
  Vector y(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    x(k, 0) = 1.0;
    if (spec.covariate_law == CovariateLaw::standard_normal) {
      for (Eigen::Index j = 1; j < p; ++j) x(k, j) = normal(rng);
    } else {
      const int c = component(rng);
      for (Eigen::Index j = 1; j < p; ++j) x(k, j) = kMeans[c] + kScales[c] * normal(rng);
    }
    const double t = x.row(k).dot(spec.true_beta);
    const double prob = 1.0 / (1.0 + std::exp(-t));
    y[k] = unif(rng) < prob ? 1.0 : 0.0;
  }
  return Dataset(std::move(x), std::move(y));
}

namespace {

constexpr char kMagic[4] = {'S', 'M', 'C', '1'};

}  // namespace

void save_binary(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  const std::uint64_t n = data.n();
  const std::uint64_t p = data.p();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(&p), sizeof(p));
  out.write(reinterpret_cast<const char*>(data.responses().data()),
            static_cast<std::streamsize>(sizeof(double) * n));
  out.write(reinterpret_cast<const char*>(data.covariates().data()),
            static_cast<std::streamsize>(sizeof(double) * n * p));
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

Dataset load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset '" + path.string() + "'");
  char magic[4];
  std::uint64_t n = 0;
  std::uint64_t p = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  in.read(reinterpret_cast<char*>(&p), sizeof(p));
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ConfigError("'" + path.string() + "' is not an SMC1 dataset");
  if (n == 0 || p == 0 || n > (1ull << 40) || p > (1ull << 20))
    throw ConfigError("'" + path.string() + "': implausible header dimensions");
  Vector y(static_cast<Eigen::Index>(n));
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  in.read(reinterpret_cast<char*>(y.data()), static_cast<std::streamsize>(sizeof(double) * n));
  in.read(reinterpret_cast<char*>(x.data()), static_cast<std::streamsize>(sizeof(double) * n * p));
  if (!in) throw ConfigError("'" + path.string() + "': truncated payload");
  return Dataset(std::move(x), std::move(y));
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("CSV '" + path.string() + "' is empty");

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  };

  const auto header = split(line);
  std::ptrdiff_t y_col = -1;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == "y") y_col = static_cast<std::ptrdiff_t>(j);
  if (y_col < 0) throw ConfigError("CSV '" + path.string() + "' has no column named 'y'");

  std::vector<double> ys;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw ConfigError("CSV line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " cells");
    std::vector<double> row{1.0};
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double v = 0.0;
      try {
        v = std::stod(cells[j]);
      } catch (const std::exception&) {
        throw ConfigError("CSV line " + std::to_string(line_no) + ": bad number '" + cells[j] + "'");
      }
      if (static_cast<std::ptrdiff_t>(j) == y_col) ys.push_back(v);
      else row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("CSV '" + path.string() + "' has no data rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(rows.front().size());
  Matrix x(n, p);
  Vector y(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index j = 0; j < p; ++j) x(k, j) = rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
    y[k] = ys[static_cast<std::size_t>(k)];
  }
  return Dataset(std::move(x), std::move(y));
}

}  // namespace damc
