#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "damc/core.hpp"

namespace damc {

/// Responses and covariate rows of the full population. Column 0 of the
/// covariates is the intercept. Immutable once constructed.
class Dataset {
 public:
  Dataset() = default;
  /// Validates shapes and finiteness; builds the class index lists.
  Dataset(Matrix covariates, Vector responses);

  [[nodiscard]] std::size_t n() const noexcept { return static_cast<std::size_t>(x_.rows()); }
  [[nodiscard]] std::size_t p() const noexcept { return static_cast<std::size_t>(x_.cols()); }

  [[nodiscard]] const Matrix& covariates() const noexcept { return x_; }
  [[nodiscard]] const Vector& responses() const noexcept { return y_; }
  [[nodiscard]] double response(std::size_t k) const { return y_[static_cast<Eigen::Index>(k)]; }
  [[nodiscard]] auto row(std::size_t k) const { return x_.row(static_cast<Eigen::Index>(k)); }

  /// Rows with y = 1 and y = 0. For non-binary responses both lists cover
  /// only the matching rows.
  [[nodiscard]] const std::vector<std::size_t>& positive_index() const noexcept { return positive_; }
  [[nodiscard]] const std::vector<std::size_t>& negative_index() const noexcept { return negative_; }

  /// 64-bit FNV-1a hash over the raw bytes; used to detect mismatched runs.
  [[nodiscard]] std::uint64_t fingerprint() const;

 private:
  Matrix x_;
  Vector y_;
  std::vector<std::size_t> positive_;
  std::vector<std::size_t> negative_;
};

enum class CovariateLaw { standard_normal, gaussian_mixture };

CovariateLaw parse_covariate_law(std::string_view text);
std::string_view to_string(CovariateLaw law);

struct SyntheticSpec {
  std::size_t n = 1000;
  std::size_t p = 2;
  Vector true_beta;  // length p, entry 0 is the intercept
  CovariateLaw covariate_law = CovariateLaw::standard_normal;
  std::uint64_t seed = 1;
};

/// Logistic data: intercept column plus p-1 covariate columns drawn from the
/// configured law, y_k ~ Bernoulli(logistic(x_k' beta)). Bit-identical for
/// identical specs.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Binary layout (little endian): "SMC1", n (u64), p (u64), responses (n
/// doubles), covariates column-major (n*p doubles).
void save_binary(const Dataset& data, const std::filesystem::path& path);
Dataset load_binary(const std::filesystem::path& path);

/// CSV with a header row. The column named "y" holds the responses; every
/// other column is a covariate. An intercept column of ones is prepended.
Dataset load_csv(const std::filesystem::path& path);

}  // namespace damc
