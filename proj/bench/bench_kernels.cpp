// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "damc/dataset.hpp"
#include "damc/kernels.hpp"
#include "damc/model.hpp"

namespace {

const damc::Dataset& bench_data(std::size_t n) {
  static std::vector<std::pair<std::size_t, damc::Dataset>> cache;
  for (auto& [size, data] : cache)
    if (size == n) return data;
  damc::SyntheticSpec spec;
  spec.n = n;
  spec.p = 8;
  spec.true_beta = damc::Vector::Constant(8, 0.3);
  spec.true_beta[0] = -3.0;
  spec.seed = 7;
  cache.emplace_back(n, damc::generate_synthetic(spec));
  return cache.back().second;
}

damc::Theta bench_theta() { return damc::Vector::Constant(8, 0.1); }

void BM_LogDensitySum(benchmark::State& state) {
  const auto& data = bench_data(static_cast<std::size_t>(state.range(0)));
  const damc::LogisticModel model;
  const damc::Theta theta = bench_theta();
  for (auto _ : state) benchmark::DoNotOptimize(damc::kernels::log_density_sum(model, data, theta));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_LogDensitySumSerial(benchmark::State& state) {
  const auto& data = bench_data(static_cast<std::size_t>(state.range(0)));
  const damc::LogisticModel model;
  const damc::Theta theta = bench_theta();
  for (auto _ : state) benchmark::DoNotOptimize(damc::kernels::serial::log_density_sum(model, data, theta));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Serial>
void BM_AssignNearest(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto& data = bench_data(n);
  const damc::Matrix& points = data.covariates();
  const damc::Matrix centroids = points.topRows(256);
  std::vector<int> assignment(n);
  std::vector<double> distance2(n);
  for (auto _ : state) {
    if constexpr (Serial)
      damc::kernels::serial::assign_nearest(points, centroids, assignment, distance2);
    else
      damc::kernels::assign_nearest(points, centroids, assignment, distance2);
    benchmark::DoNotOptimize(assignment.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_LogDensitySum)->Arg(10000)->Arg(100000)->Arg(1000000);
BENCHMARK(BM_LogDensitySumSerial)->Arg(10000)->Arg(100000)->Arg(1000000);
BENCHMARK(BM_AssignNearest<false>)->Arg(100000);
BENCHMARK(BM_AssignNearest<true>)->Arg(100000);

BENCHMARK_MAIN();
