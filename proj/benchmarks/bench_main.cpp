#include <benchmark/benchmark.h>

#include <random>

#include "flockid/boids.hpp"
#include "flockid/hydro.hpp"
#include "flockid/nonlocal.hpp"
#include "flockid/workspace.hpp"

using namespace flockid;

namespace {

FieldState blob(const HydroSolver& solver) {
  const GridSpec& g = solver.grid();
  FieldState s;
  s.rho.resize(g.size());
  s.j.resize(g.size());
  for (std::size_t c = 0; c < g.size(); ++c) {
    const Vec3 x = g.center(c);
    s.rho[c] = std::exp(-0.2 * norm_sq(x));
    s.j[c] = s.rho[c] * Vec3{0.5, -0.2, 0.1};
  }
  solver.apply_mask(s);
  return s;
}

void BM_BesselApply(benchmark::State& state) {
  GridSpec g;
  g.cells = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> f(g.size());
  for (auto& v : f) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(bessel_apply(f, KernelParams{1.0, 1.0}, g));
}
BENCHMARK(BM_BesselApply)->Arg(11)->Arg(21)->Unit(benchmark::kMillisecond);

void BM_FluxDivergence(benchmark::State& state) {
  const Workspace w = Workspace::standard();
  GridSpec g;
  g.cells = static_cast<int>(state.range(0));
  HydroSolver solver(w, g, PdeParams{});
  const FieldState s = blob(solver);
  std::vector<double> dr;
  std::vector<Vec3> dj;
  for (auto _ : state) {
    solver.flux_divergence(s, 0.01, dr, dj);
    benchmark::DoNotOptimize(dr.data());
  }
}
BENCHMARK(BM_FluxDivergence)->Arg(11)->Arg(21)->Unit(benchmark::kMicrosecond);

void BM_SolverStep(benchmark::State& state) {
  const Workspace w = Workspace::standard();
  HydroSolver solver(w, GridSpec{}, PdeParams{});
  const FieldState s = blob(solver);
  for (auto _ : state) benchmark::DoNotOptimize(solver.ssp_rk2_step(s, 0.01));
}
BENCHMARK(BM_SolverStep)->Unit(benchmark::kMillisecond);

void BM_BoidForces(benchmark::State& state) {
  const Workspace w = Workspace::standard();
  InitialSampling cfg;
  cfg.count = static_cast<std::size_t>(state.range(0));
  const BoidState s = sample_initial(w, cfg);
  const BoidForces forces(w);
  std::vector<Vec3> a;
  for (auto _ : state) {
    forces(s.x, s.v, a);
    benchmark::DoNotOptimize(a.data());
  }
}
BENCHMARK(BM_BoidForces)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
