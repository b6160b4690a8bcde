#include <benchmark/benchmark.h>

#include <cmath>

#include "kglab/dft.hpp"
#include "kglab/dynamics.hpp"
#include "kglab/manifold.hpp"
#include "kglab/scattering.hpp"

using namespace kglab;

namespace {

constexpr double kAlpha = 1.5;

void BM_JostSolve(benchmark::State& st) {
  const GridSpec g = GridSpec::from_spacing(40.0, 0.02);
  const Potential V = Potential::soliton(kAlpha);
  for (auto _ : st) {
    benchmark::DoNotOptimize(jost_solve(V, g, 0.7, JostSide::Plus));
  }
}
BENCHMARK(BM_JostSolve)->Unit(benchmark::kMicrosecond);

void BM_ForwardTransform(benchmark::State& st) {
  const GridSpec g = GridSpec::from_spacing(static_cast<double>(st.range(0)), 0.05);
  const DistortedBasis basis =
      DistortedBasis::build(Potential::soliton(kAlpha), g, KGrid::midpoint(0.02, 8.0));
  const RealVec x = g.nodes();
  RealVec f(x.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::exp(-x[i] * x[i]);
  for (auto _ : st) benchmark::DoNotOptimize(basis.forward(f));
  st.SetComplexityN(static_cast<int64_t>(x.size() * basis.k_grid().size()));
}
BENCHMARK(BM_ForwardTransform)->Arg(40)->Arg(80)->Arg(160)->Unit(benchmark::kMillisecond);

EvolveOptions steps(double T) {
  EvolveOptions o;
  o.T = T;
  o.dt = 0.04;
  o.sample_stride = 25;
  return o;
}

void BM_ModalSteps(benchmark::State& st) {
  const GridSpec g = GridSpec::from_spacing(100.0, 0.05);
  const DynamicsContext ctx = DynamicsContext::make(kAlpha, g);
  const ModalState s0 = modal_data(ctx, make_data(ctx, 5e-4, ZetaParams{}), 0.0);
  for (auto _ : st) benchmark::DoNotOptimize(evolve_modal(ctx, s0, steps(4.0)));
  st.SetItemsProcessed(st.iterations() * 100);
}
BENCHMARK(BM_ModalSteps)->Unit(benchmark::kMillisecond);

void BM_FullSteps(benchmark::State& st) {
  const GridSpec g = GridSpec::from_spacing(100.0, 0.05);
  const DynamicsContext ctx = DynamicsContext::make(kAlpha, g);
  const FieldState s0 = prepare_data(ctx, make_data(ctx, 5e-4, ZetaParams{}), 0.0);
  for (auto _ : st) benchmark::DoNotOptimize(evolve_full(ctx, s0, steps(4.0)));
  st.SetItemsProcessed(st.iterations() * 100);
}
BENCHMARK(BM_FullSteps)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
