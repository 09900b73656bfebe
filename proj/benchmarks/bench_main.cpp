#include <benchmark/benchmark.h>

#include <random>

#include "eob/grid_store.hpp"
#include "eob/panel_econometrics.hpp"
#include "eob/robustness_harness.hpp"
#include "eob/synthetic_bench.hpp"
#include "eob/weather_metrics.hpp"

using namespace eob;

namespace {

// One country, 500 households, 5 survey years; built once.
const SynthBench& bench() {
  static const SynthBench b = generate(SynthConfig::from_json(
      {{"seed", 1}, {"countries", {"Niger"}}, {"households_per_country", 500}, {"n_years", 5}}));
  return b;
}

SeasonSlice rainy_slice(std::size_t n) {
  std::mt19937_64 rng(7);
  std::gamma_distribution<double> amount(0.7, 12.0);
  std::bernoulli_distribution wet(0.35);
  SeasonSlice s;
  s.start_date = make_date(2015, 3, 1);
  s.season_label_year = 2015;
  s.values.resize(n);
  for (auto& v : s.values) v = wet(rng) ? static_cast<float>(amount(rng)) : 0.0f;
  s.season_length_days = n;
  return s;
}

}  // namespace

static void BM_ExtractSites(benchmark::State& state) {
  const auto& b = bench();
  const auto& grid = b.products.front().grids.front();
  for (auto _ : state) benchmark::DoNotOptimize(extract_sites(grid, b.published));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b.published.size()));
}
BENCHMARK(BM_ExtractSites)->Unit(benchmark::kMillisecond);

static void BM_SummarizeRainfall(benchmark::State& state) {
  const auto s = rainy_slice(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(summarize_rainfall(s));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SummarizeRainfall)->Arg(92)->Arg(275)->Arg(10000);

static void BM_Fit(benchmark::State& state) {
  const auto& b = bench();
  const MetricTable table(b.truth_metrics);
  const RegressionSpec spec{"Niger", static_cast<Model>(state.range(0)), Outcome::farm_value, MetricId::z_total,
                            b.truth_metrics.front().product_id, false};
  for (auto _ : state) benchmark::DoNotOptimize(fit(spec, b.panel, table, b.waves));
}
BENCHMARK(BM_Fit)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);

static void BM_ClusterSandwich(benchmark::State& state) {
  const auto g = static_cast<std::size_t>(state.range(0));
  const std::size_t t = 5, n = g * t, k = 10;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  Eigen::MatrixXd X(n, k);
  Eigen::VectorXd u(n);
  std::vector<std::uint32_t> cluster(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) X(i, j) = z(rng);
    u(i) = z(rng);
    cluster[i] = static_cast<std::uint32_t>(i / t);
  }
  for (auto _ : state) benchmark::DoNotOptimize(cluster_sandwich(X, u, cluster, g));
}
BENCHMARK(BM_ClusterSandwich)->Arg(100)->Arg(1000)->Unit(benchmark::kMicrosecond);

static void BM_BatteryOneCountry(benchmark::State& state) {
  const auto& b = bench();
  const MetricTable table(b.truth_metrics);
  BatteryConfig c;
  c.countries = {"Niger"};
  c.rain_products = {b.truth_metrics.front().product_id};
  c.rain_metrics.assign(rainfall_metrics_list().begin(), rainfall_metrics_list().end());
  for (auto _ : state) benchmark::DoNotOptimize(run(c, b.panel, table, b.waves));
}
BENCHMARK(BM_BatteryOneCountry)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
