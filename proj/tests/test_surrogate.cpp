#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "helpers.hpp"

#include "damc/stats.hpp"
#include "damc/surrogate.hpp"

using namespace damc;

namespace {

std::vector<DiscrepancySample> cloud(std::size_t count, std::size_t d, std::uint64_t seed,
                                     const std::function<double(const Vector&)>& e) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 0.3);
  std::vector<DiscrepancySample> out;
  for (std::size_t i = 0; i < count; ++i) {
    Vector theta(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta[j] = 1.0 + static_cast<double>(j) + z(rng);
    out.push_back({theta, e(theta)});
  }
  return out;
}

}  // namespace

TEST_CASE("quadratic features") {
  const Vector z = (Vector(2) << 2.0, 3.0).finished();
  const Vector f = quadratic_features(z);
  REQUIRE(f.size() == 6);
  CHECK(f[0] == 1.0);
  CHECK(f[1] == 2.0);
  CHECK(f[2] == 3.0);
  CHECK(f[3] == 4.0);
  CHECK(f[4] == 6.0);
  CHECK(f[5] == 9.0);
}

TEST_CASE("linear backend recovers an exactly quadratic discrepancy") {
  auto e = [](const Vector& t) { return 0.5 - 2.0 * t[0] + t[1] + 0.3 * t[0] * t[1] - 0.7 * t[2] * t[2]; };
  const auto samples = cloud(80, 3, 1, e);
  const SurrogateModel model = fit_surrogate(samples, SurrogateBackend::linear);
  CHECK(model.residual_rms() < 1e-9);
  CHECK(!model.rank_deficient());
  const auto test = cloud(30, 3, 2, e);
  for (const auto& s : test) {
    const DiscrepancyPrediction p = model.predict(s.theta);
    CHECK(p.e_hat == doctest::Approx(s.e_value).epsilon(1e-8));
    CHECK(p.cost == 1);
  }
}

TEST_CASE("gp backend interpolates its training points and charges n_train") {
  auto e = [](const Vector& t) { return std::sin(3.0 * t[0]) + t[1] * t[1]; };
  const auto samples = cloud(60, 2, 3, e);
  const SurrogateModel model = fit_surrogate(samples, SurrogateBackend::gp);
  CHECK(model.n_train() == 60);
  for (const auto& s : samples) {
    const DiscrepancyPrediction p = model.predict(s.theta);
    CHECK(std::abs(p.e_hat - s.e_value) <= 1e-6 * std::max(1.0, std::abs(s.e_value)));
    CHECK(p.cost == 60);
  }
}

TEST_CASE("both backends generalize a smooth discrepancy") {
  auto e = [](const Vector& t) {
    return 2.0 * (t[0] - 1.0) * (t[0] - 1.0) + (t[1] - 2.0) * (t[2] - 3.0) - 0.5 * t[3] * t[3];
  };
  const auto train = cloud(400, 4, 4, e);
  const auto test = cloud(200, 4, 5, e);
  std::vector<double> values;
  for (const auto& s : test) values.push_back(s.e_value);
  const double sd = std::sqrt(stats::variance(values));
  for (const SurrogateBackend b : {SurrogateBackend::linear, SurrogateBackend::gp}) {
    const SurrogateModel model = fit_surrogate(train, b);
    double sse = 0.0;
    for (const auto& s : test) sse += std::pow(model.predict(s.theta).e_hat - s.e_value, 2);
    CHECK(std::sqrt(sse / static_cast<double>(test.size())) * 10.0 < sd);
  }
}

TEST_CASE("far-away predictions stay finite and are flagged") {
  auto e = [](const Vector& t) { return t.squaredNorm(); };
  const auto samples = cloud(50, 2, 6, e);
  for (const SurrogateBackend b : {SurrogateBackend::linear, SurrogateBackend::gp}) {
    const SurrogateModel model = fit_surrogate(samples, b);
    const DiscrepancyPrediction far = model.predict(Vector::Constant(2, 1e3));
    CHECK(std::isfinite(far.e_hat));
    CHECK(far.extrapolating);
    CHECK(!model.predict(samples[0].theta).extrapolating);
  }
}

TEST_CASE("fit errors and rank deficiency") {
  auto e = [](const Vector& t) { return t[0]; };
  CHECK_THROWS_AS(fit_surrogate(cloud(5, 1, 1, e), SurrogateBackend::gp), ConfigError);
  // 3 dimensions need 1 + 3 + 6 = 10 features, so 10 samples are too few.
  CHECK_THROWS_AS(fit_surrogate(cloud(10, 3, 1, e), SurrogateBackend::linear), ConfigError);
  std::vector<DiscrepancySample> same(20, DiscrepancySample{Vector::Ones(2), 1.0});
  CHECK_THROWS_AS(fit_surrogate(same, SurrogateBackend::linear), ConfigError);
  // Second coordinate is a copy of the first: collinear design.
  auto samples = cloud(40, 2, 9, e);
  for (auto& s : samples) s.theta[1] = s.theta[0];
  const SurrogateModel model = fit_surrogate(samples, SurrogateBackend::linear);
  CHECK(model.rank_deficient());
  CHECK(model.residual_rms() < 1e-8);
}

TEST_CASE("serialization round trip") {
  auto e = [](const Vector& t) { return std::cos(t[0]) * t[1]; };
  const auto samples = cloud(40, 2, 11, e);
  for (const SurrogateBackend b : {SurrogateBackend::linear, SurrogateBackend::gp}) {
    SurrogateModel model = fit_surrogate(samples, b);
    model.set_fit_cost_T(12.5);
    const SurrogateModel back = SurrogateModel::deserialize(model.serialize());
    CHECK(back.backend() == b);
    CHECK(back.n_train() == 40);
    CHECK(back.fit_cost_T() == 12.5);
    const Vector probe = (Vector(2) << 1.1, 2.2).finished();
    CHECK(back.predict(probe).e_hat == model.predict(probe).e_hat);
  }
  CHECK_THROWS(SurrogateModel::deserialize("nonsense"));
  CHECK(parse_surrogate_backend("lr") == SurrogateBackend::linear);
  CHECK(parse_surrogate_backend("gp") == SurrogateBackend::gp);
  CHECK_THROWS_AS(parse_surrogate_backend("nn"), ConfigError);
}
