#include "eqtrend/dist.hpp"
#include "eqtrend/equivalence.hpp"
#include "eqtrend/simulate.hpp"

#include <benchmark/benchmark.h>

using namespace eqtrend;

namespace {

void BM_WSample(benchmark::State& state) {
  const auto grid = default_grid();
  for (auto _ : state) benchmark::DoNotOptimize(simulate_w_sample(grid, 100000, 1));
}
BENCHMARK(BM_WSample)->Unit(benchmark::kMillisecond);

void BM_WSampleSerial(benchmark::State& state) {
  const auto grid = default_grid();
  for (auto _ : state) benchmark::DoNotOptimize(simulate_w_sample_serial(grid, 100000, 1));
}
BENCHMARK(BM_WSampleSerial)->Unit(benchmark::kMillisecond);

struct BootFixture {
  SimulationScenario scn;
  PanelDataset data;
  PretrendFit fit;
  BootFixture() {
    scn.n = 1000;
    scn.T = 4;
    data = generate(scn, 0);
    fit = fit_pretrend(data);
  }
};

void BM_BootstrapMaxNorms(benchmark::State& state) {
  BootFixture f;
  const MaxBootstrap boot(f.fit, {static_cast<std::size_t>(state.range(0)), BootstrapVariant::WildCluster, 1});
  for (auto _ : state) benchmark::DoNotOptimize(boot.max_norms(0.5));
}
BENCHMARK(BM_BootstrapMaxNorms)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_BootstrapReference(benchmark::State& state) {
  BootFixture f;
  const MaxBootstrap boot(f.fit, {static_cast<std::size_t>(state.range(0)), BootstrapVariant::WildCluster, 1});
  for (auto _ : state) benchmark::DoNotOptimize(boot.max_norms_reference(0.5));
}
BENCHMARK(BM_BootstrapReference)->Arg(500)->Unit(benchmark::kMillisecond);

const WQuantileTable& table() {
  static const WQuantileTable t = simulate_w_quantile(default_grid(), default_w_levels(), 20000, 1);
  return t;
}

SimulationScenario study_scenario() {
  SimulationScenario s;
  s.n = 500;
  s.T = 4;
  s.M = 16;
  s.bootstrap_b = 500;
  s.minimal_thresholds = false;
  return s;
}

void BM_RunStudy(benchmark::State& state) {
  const auto s = study_scenario();
  for (auto _ : state) benchmark::DoNotOptimize(run_study(s, table()));
}
BENCHMARK(BM_RunStudy)->Unit(benchmark::kMillisecond);

void BM_RunStudySerial(benchmark::State& state) {
  const auto s = study_scenario();
  for (auto _ : state) benchmark::DoNotOptimize(run_study_serial(s, table()));
}
BENCHMARK(BM_RunStudySerial)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
