#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace damc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Regression coefficients; every entry must be finite.
using Theta = Eigen::VectorXd;

using Rng = std::mt19937_64;

/// Independent, reproducible stream `stream` derived from a base seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or precondition violation on user input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or a failed factorization inside the numerics.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Running count of log-density-equivalent evaluations. Safe to bump from
/// several threads; the total does not depend on interleaving.
class EvalLedger {
 public:
  EvalLedger() = default;
  EvalLedger(const EvalLedger& other) : count_(other.count()) {}
  EvalLedger& operator=(const EvalLedger& other) {
    count_.store(other.count(), std::memory_order_relaxed);
    return *this;
  }

  void add(std::uint64_t evaluations) noexcept {
    count_.fetch_add(evaluations, std::memory_order_relaxed);
  }
  [[nodiscard]] std::uint64_t count() const noexcept {
    return count_.load(std::memory_order_relaxed);
  }
  void reset() noexcept { count_.store(0, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> count_{0};
};

inline void charge(EvalLedger* ledger, std::uint64_t evaluations) noexcept {
  if (ledger != nullptr) ledger->add(evaluations);
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace damc
