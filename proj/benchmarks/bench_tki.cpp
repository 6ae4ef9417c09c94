#include <benchmark/benchmark.h>

#include <random>

#include "tki/eqforms.hpp"
#include "tki/invariants.hpp"
#include "tki/linalg.hpp"

namespace {

tki::CMatrix random_skew(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  tki::CMatrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = tki::cplx(g(rng), g(rng));
  return a - a.transpose();
}

tki::BZGrid cube(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  return tki::BZGrid({n, n, n});
}

void BM_Pfaffian(benchmark::State& state) {
  std::mt19937_64 rng(1);
  tki::CMatrix a = random_skew(static_cast<int>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(tki::pfaffian(a));
}
BENCHMARK(BM_Pfaffian)->Arg(4)->Arg(16)->Arg(64);

void BM_DiagonalizeGrid(benchmark::State& state) {
  tki::BlochModel m = tki::make_model("fkm3d");
  tki::BZGrid g = cube(state);
  for (auto _ : state) benchmark::DoNotOptimize(tki::diagonalize_grid(m, g));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(g.node_count()));
}
BENCHMARK(BM_DiagonalizeGrid)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_SmoothGauge(benchmark::State& state) {
  tki::FrameField raw = tki::diagonalize_grid(tki::make_model("fkm3d"), cube(state));
  for (auto _ : state) benchmark::DoNotOptimize(tki::smooth_gauge(raw));
}
BENCHMARK(BM_SmoothGauge)->Arg(16)->Arg(24)->Unit(benchmark::kMillisecond);

void BM_Wzw(benchmark::State& state) {
  tki::SewingPipeline p = tki::build_sewing(tki::make_model("fkm3d"), cube(state));
  const auto scheme = static_cast<tki::WzwScheme>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(tki::wzw_cube_values(p.su, scheme));
}
BENCHMARK(BM_Wzw)
    ->ArgsProduct({{24, 32},
                   {static_cast<int>(tki::WzwScheme::Forward), static_cast<int>(tki::WzwScheme::Centred),
                    static_cast<int>(tki::WzwScheme::Simplicial)}})
    ->Unit(benchmark::kMillisecond);

void BM_LocaliseUniform(benchmark::State& state) {
  tki::Cochain c = tki::uniform_form(cube(state), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(tki::localise(c));
}
BENCHMARK(BM_LocaliseUniform)->Arg(16)->Arg(32)->Arg(48)->Unit(benchmark::kMillisecond);

void BM_ReportFourMethods(benchmark::State& state) {
  tki::BlochModel m = tki::make_model("fkm3d");
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(tki::compute_report(m, {n, n, n}, {"pfaffian", "planes", "wzw", "winding"}));
}
BENCHMARK(BM_ReportFourMethods)->Arg(16)->Arg(24)->Unit(benchmark::kSecond)->Iterations(1);

}  // namespace

BENCHMARK_MAIN();
