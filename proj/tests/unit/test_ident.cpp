#include <doctest.h>

#include <atomic>
#include <cmath>
#include <random>

#include "flockid/ident.hpp"

using namespace flockid;

namespace {

ObjectiveValue ok(double v) { return {v, false}; }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Quadratic {
  std::vector<std::vector<double>> a;
  std::vector<double> b;

  std::vector<double> grad(std::span<const double> x) const {
    std::vector<double> g(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) g[i] = dot(a[i], x) - b[i];
    return g;
  }
  double value(std::span<const double> x) const {
    double v = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) v += 0.5 * x[i] * dot(a[i], x) - b[i] * x[i];
    return v;
  }
};

Quadratic random_spd(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::vector<double>> m(n, std::vector<double>(n));
  for (auto& row : m)
    for (auto& v : row) v = u(rng);
  Quadratic q;
  q.a.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < n; ++k) q.a[i][j] += m[k][i] * m[k][j];
      if (i == j) q.a[i][j] += 0.5;
    }
  for (std::size_t i = 0; i < n; ++i) q.b.push_back(u(rng));
  return q;
}

FieldState blob(const GridSpec& g, const CellMask& mask) {
  FieldState s;
  s.rho.resize(g.size());
  s.j.resize(g.size());
  double m = 0.0;
  for (std::size_t c = 0; c < g.size(); ++c) {
    if (mask[c] != CellKind::fluid) continue;
    const Vec3 x = g.center(c);
    s.rho[c] = std::exp(-0.15 * norm_sq(x - Vec3{1.0, 0.5, 0.0}));
    s.j[c] = s.rho[c] * Vec3{0.4, -0.2, 0.1};
    m += s.rho[c] * g.cell_volume();
  }
  for (auto& r : s.rho) r /= m;
  for (auto& j : s.j) j = j / m;
  return s;
}

IdentProblem twin_problem(const PdeParams& truth, const std::vector<double>& times) {
  IdentProblem p;
  const CellMask mask = cell_mask(p.workspace, p.grid);
  p.initial = blob(p.grid, mask);
  p.t0 = 0.0;
  p.tf = times.back();
  HydroSolver solver(p.workspace, p.grid, truth, p.solver);
  const auto traj = solver.solve(p.initial, p.tf, times);
  for (const auto& s : traj.snapshots) p.observations.push_back({s.t, DensityField(p.grid, s.rho)});
  return p;
}

}  // namespace

TEST_CASE("fd_gradient is exact on quadratics and ignores invariant coordinates") {
  const Objective f = [](std::span<const double> x) {
    return ok(3.0 * x[0] * x[0] + x[0] * x[1] - 2.0 * x[1] * x[1] + 5.0 * x[1]);
  };
  const std::vector<double> x{0.7, -1.3, 4.0};
  const FdGradient r = fd_gradient(f, x, 1e-3);
  CHECK(r.g[0] == doctest::Approx(6.0 * 0.7 - 1.3).epsilon(1e-9));
  CHECK(r.g[1] == doctest::Approx(0.7 + 4.0 * 1.3 + 5.0).epsilon(1e-9));
  CHECK(r.g[2] == 0.0);
  CHECK(r.evaluations == 6);
  for (bool b : r.unreliable) CHECK_FALSE(b);
}

TEST_CASE("fd_gradient error is second order") {
  const Objective f = [](std::span<const double> x) { return ok(std::exp(std::sin(x[0]))); };
  const double x0 = 0.7;
  const double exact = std::cos(x0) * std::exp(std::sin(x0));
  const std::vector<double> x{x0};
  const double e1 = std::abs(fd_gradient(f, x, 2e-2).g[0] - exact);
  const double e2 = std::abs(fd_gradient(f, x, 1e-2).g[0] - exact);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("fd_gradient keeps positive coordinates positive") {
  std::atomic<bool> negative{false};
  const Objective f = [&](std::span<const double> x) {
    if (x[0] <= 0.0) negative = true;
    return ok(std::log(x[0]));
  };
  const std::vector<double> x{1e-5};
  const FdGradient r = fd_gradient(f, x, 1e-4, std::vector<bool>{true});
  CHECK_FALSE(negative.load());
  CHECK(r.g[0] == doctest::Approx(std::log(3.0) / 1e-5).epsilon(1e-10));
}

TEST_CASE("fd_gradient retries failed evaluations") {
  const std::vector<double> x{1.0, 2.0};
  const Objective flaky = [](std::span<const double> v) {
    if (v[0] > 1.00007) return ObjectiveValue{10.0, true};
    return ok(v[0] * v[0] + v[1]);
  };
  const FdGradient r = fd_gradient(flaky, x, 1e-4);
  CHECK_FALSE(r.unreliable[0]);
  CHECK(r.g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(r.g[1] == doctest::Approx(1.0).epsilon(1e-8));

  const Objective broken = [](std::span<const double> v) {
    if (v[0] > 1.0) return ObjectiveValue{10.0, true};
    return ok(v[0] + v[1]);
  };
  const FdGradient b = fd_gradient(broken, x, 1e-4);
  CHECK(b.unreliable[0]);
  CHECK_FALSE(b.unreliable[1]);
  CHECK(b.g[0] == 0.0);
}

TEST_CASE("fd_gradient does not depend on the thread count") {
  const Objective f = [](std::span<const double> x) {
    double v = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) v += std::sin(x[i] * (i + 1)) * std::cosh(x[(i + 1) % x.size()]);
    return ok(v);
  };
  const std::vector<double> x{0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7};
  const auto a = fd_gradient(f, x, 1e-4, {}, 1).g;
  const auto b = fd_gradient(f, x, 1e-4, {}, 3).g;
  CHECK(a == b);
}

TEST_CASE("newton_cg takes one step on an identity Hessian") {
  Quadratic q;
  q.a = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  q.b = {1.0, -2.0, 0.5};
  const Objective f = [&](std::span<const double> x) { return ok(q.value(x)); };
  const GradientFn g = [&](std::span<const double> x) { return q.grad(x); };
  NewtonConfig cfg;
  cfg.grad_tol = 1e-9;
  const NewtonResult r = newton_cg(f, g, {0.0, 0.0, 0.0}, cfg);
  REQUIRE(r.iterations.size() == 1);
  CHECK(r.iterations[0].cg_iterations == 1);
  CHECK(r.iterations[0].step == 1.0);
  CHECK(r.termination == "gradient_tolerance");
  for (std::size_t i = 0; i < 3; ++i) CHECK(r.x[i] == doctest::Approx(q.b[i]).epsilon(1e-9));
}

TEST_CASE("newton_cg converges on a random SPD quadratic") {
  const Quadratic q = random_spd(10, 17);
  const Objective f = [&](std::span<const double> x) { return ok(q.value(x)); };
  const GradientFn g = [&](std::span<const double> x) { return q.grad(x); };
  NewtonConfig cfg;
  cfg.cg_tol = 1e-12;
  cfg.grad_tol = 1e-10;
  const NewtonResult r = newton_cg(f, g, std::vector<double>(10, 0.0), cfg);
  CHECK(r.termination == "gradient_tolerance");
  for (const auto& it : r.iterations) CHECK(it.cg_iterations <= 10);
  const auto gf = q.grad(r.x);
  CHECK(std::sqrt(dot(gf, gf)) <= 1e-10);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i) CHECK(r.loss_trace[i] <= r.loss_trace[i - 1]);
  CHECK(r.loss_trace.size() == r.iterations.size() + 1);
}

TEST_CASE("newton_cg handles negative curvature") {
  const Objective f = [](std::span<const double> x) {
    return ok(-x[0] * x[0] + x[0] * x[0] * x[0] * x[0] + x[1] * x[1]);
  };
  const GradientFn g = [](std::span<const double> x) {
    return std::vector<double>{-2.0 * x[0] + 4.0 * x[0] * x[0] * x[0], 2.0 * x[1]};
  };
  NewtonConfig cfg;
  cfg.max_newton = 50;
  cfg.grad_tol = 1e-9;
  const NewtonResult r = newton_cg(f, g, {0.05, 1.0}, cfg);
  CHECK(r.x[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));
  CHECK(std::abs(r.x[1]) <= 1e-6);
  for (std::size_t i = 1; i < r.loss_trace.size(); ++i) CHECK(r.loss_trace[i] <= r.loss_trace[i - 1]);
}

TEST_CASE("newton_cg reports a failed line search") {
  const Objective f = [](std::span<const double> x) { return ok(x[0] * x[0]); };
  const GradientFn wrong = [](std::span<const double> x) { return std::vector<double>{-2.0 * x[0]}; };
  const NewtonResult r = newton_cg(f, wrong, {1.0}, NewtonConfig{});
  CHECK(r.termination == "line_search_failure");
  CHECK(r.x[0] == 1.0);
}

TEST_CASE("newton_cg respects positive coordinates") {
  const Objective f = [](std::span<const double> x) { return ok((x[0] + 1.0) * (x[0] + 1.0)); };
  const GradientFn g = [](std::span<const double> x) { return std::vector<double>{2.0 * (x[0] + 1.0)}; };
  NewtonConfig cfg;
  cfg.max_newton = 5;
  const NewtonResult r = newton_cg(f, g, {2.0}, cfg, std::vector<bool>{true});
  CHECK(r.x[0] >= cfg.positive_floor);
}

TEST_CASE("newton_cg keeps Hessian probes positive") {
  const GradientFn g = [](std::span<const double> x) {
    if (x[0] <= 0.0) throw std::invalid_argument("nonpositive probe");
    return std::vector<double>{2.0 * (x[0] + 1.0), 2.0 * (x[1] - 100.0)};
  };
  const Objective f = [](std::span<const double> x) {
    return ok((x[0] + 1.0) * (x[0] + 1.0) + (x[1] - 100.0) * (x[1] - 100.0));
  };
  NewtonConfig cfg;
  cfg.max_newton = 3;
  NewtonResult r;
  CHECK_NOTHROW(r = newton_cg(f, g, {0.002, 100.0}, cfg, std::vector<bool>{true, false}));
  CHECK(r.x[0] >= cfg.positive_floor);
}

TEST_CASE("problem validation") {
  IdentProblem p;
  p.initial.rho.assign(p.grid.size(), 0.0);
  p.initial.j.assign(p.grid.size(), Vec3{});
  p.tf = 1.0;
  p.observations = {{0.5, DensityField(p.grid)}, {0.3, DensityField(p.grid)}};
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.observations = {{0.5, DensityField(p.grid)}, {1.5, DensityField(p.grid)}};
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.observations = {{0.5, DensityField(p.grid)}};
  CHECK_NOTHROW(p.validate());
  p.observations[0].q.values.pop_back();
  CHECK_THROWS(p.validate());
}

TEST_CASE("loss_L2 on frozen dynamics") {
  IdentProblem p;
  const CellMask mask = cell_mask(p.workspace, p.grid);
  p.initial.rho.assign(p.grid.size(), 0.0);
  p.initial.j.assign(p.grid.size(), Vec3{});
  for (std::size_t c = 0; c < p.grid.size(); ++c)
    if (mask[c] == CellKind::fluid) p.initial.rho[c] = 1.0 / (1299.0 * p.grid.cell_volume());
  p.tf = 0.2;
  p.observations = {{0.0, DensityField(p.grid, p.initial.rho)}, {0.1, DensityField(p.grid, p.initial.rho)}};
  const PdeParams none = PdeParams::from_array(std::array<double, 10>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
  const LossEval e = loss_L2(none, p);
  CHECK_FALSE(e.failed);
  CHECK(e.value <= 1e-15);
  REQUIRE(e.h2.size() == 2);
}

TEST_CASE("loss_L2 vanishes at the generating parameters") {
  PdeParams truth;
  truth.k_a = 0.5;
  truth.lambda_c = 1.5;
  const IdentProblem p = twin_problem(truth, {0.05, 0.1, 0.15});
  SolveMonitor monitor;
  IdentProblem q = p;
  q.monitor = &monitor;
  const LossEval e = loss_L2(truth, q);
  CHECK_FALSE(e.failed);
  CHECK(e.value <= 1e-10);
  CHECK(monitor.solves() == 1);
  CHECK(monitor.max_mass_drift() <= 1e-10);
  CHECK(monitor.min_rho() >= 0.0);

  PdeParams other = truth;
  other.k_p = 3.0;
  const LossEval far = loss_L2(other, p);
  CHECK(far.value > 1e-8);
  // Left-endpoint weights: (0.1 - 0.05) and (0.15 - 0.1) for the first two,
  // tf - 0.15 = 0 for the last, divided by tf - t0.
  const double expected = (0.05 * far.h2[0] + 0.05 * far.h2[1]) / 0.15;
  CHECK(far.value == doctest::Approx(expected).epsilon(1e-12));

  const FdGradient g = fd_gradient(truth, p, 1e-4);
  for (double v : g.g) CHECK(std::abs(v) <= 1e-4);
}

TEST_CASE("loss_L2 reports solver failures") {
  const IdentProblem p = twin_problem(PdeParams{}, {0.05, 0.1});
  IdentProblem q = p;
  q.solver.max_steps = 2;
  q.failure_loss = 7.0;
  SolveMonitor monitor;
  q.monitor = &monitor;
  const LossEval e = loss_L2(PdeParams{}, q);
  CHECK(e.failed);
  CHECK(e.value == 7.0);
  CHECK_FALSE(e.failure.empty());
  CHECK(monitor.failures() == 1);
}

TEST_CASE("negative curvature step length") {
  const Objective f = [](std::span<const double> x) { return ok(-x[0] * x[0] - 0.1 * x[0]); };
  const GradientFn g = [](std::span<const double> x) { return std::vector<double>{-2.0 * x[0] - 0.1}; };
  NewtonConfig cfg;
  cfg.max_newton = 1;
  cfg.curvature_step = 0.25;
  cfg.max_backtracks = 3;
  const NewtonResult r = newton_cg(f, g, {3.0}, cfg);
  REQUIRE(r.iterations.size() == 1);
  CHECK(r.iterations[0].cg_iterations == 1);
  CHECK(r.iterations[0].step == 8.0);
  CHECK(r.x[0] == doctest::Approx(3.0 + 8.0 * 0.25 * 3.0));

  // The extension stops once the loss turns back up.
  const Objective well = [](std::span<const double> x) { return ok(-x[0] * x[0] + 0.25 * x[0] * x[0] * x[0] * x[0]); };
  const GradientFn well_g = [](std::span<const double> x) { return std::vector<double>{-2.0 * x[0] + x[0] * x[0] * x[0]}; };
  cfg.max_backtracks = 20;
  cfg.curvature_step = 0.01;
  const NewtonResult w = newton_cg(well, well_g, {0.1}, cfg);
  REQUIRE(w.iterations.size() == 1);
  CHECK(w.x[0] > 0.1);
  CHECK(w.x[0] < 2.0 * std::sqrt(2.0));
  CHECK(w.loss_trace[1] < w.loss_trace[0]);
}
