#include <doctest.h>

#include <cmath>
#include <random>

#include "flockid/errors.hpp"
#include "flockid/hydro.hpp"

using namespace flockid;

namespace {

PdeParams zero_params() {
  return PdeParams::from_array(std::array<double, 10>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
}

FieldState uniform_state(const HydroSolver& solver, double rho) {
  FieldState s;
  s.rho.assign(solver.grid().size(), rho);
  s.j.assign(solver.grid().size(), Vec3{});
  solver.apply_mask(s);
  return s;
}

FieldState blob_state(const HydroSolver& solver, std::uint64_t seed, double speed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const GridSpec& g = solver.grid();
  FieldState s;
  s.rho.resize(g.size());
  s.j.resize(g.size());
  for (std::size_t c = 0; c < g.size(); ++c) {
    const Vec3 x = g.center(c);
    s.rho[c] = std::exp(-0.2 * norm_sq(x)) * (1.0 + 0.3 * u(rng));
    s.j[c] = (speed * s.rho[c]) * Vec3{u(rng), u(rng), u(rng)};
  }
  solver.apply_mask(s);
  const double m = solver.mass(s);
  for (auto& r : s.rho) r /= m;
  for (auto& j : s.j) j = j / m;
  return s;
}

double minmod_ref(double a, double b) {
  if (a * b <= 0.0) return 0.0;
  return std::abs(a) < std::abs(b) ? a : b;
}

}  // namespace

TEST_CASE("minmod") {
  CHECK(minmod(1, 2) == 1);
  CHECK(minmod(-1, 2) == 0);
  CHECK(minmod(-2, -3) == -2);
  CHECK(minmod(0, 5) == 0);
}

TEST_CASE("speed response") {
  CHECK(speed_response(2.0, 2.0) == 1.0);
  CHECK(speed_response(0.0, 1.0) == doctest::Approx(1.0 - std::tanh(1.0)));
  CHECK(speed_response(0.0, 1.0) == doctest::Approx(0.2384058).epsilon(1e-7));
}

TEST_CASE("positivity limiter") {
  const FaceFlux low{0.1, {0.1, 0, 0}};
  const LimitedFlux same = positivity_limit(low, low, 1.0, 1.0, 0.1, 1e-12);
  CHECK(same.theta == 1.0);

  const FaceFlux mild{0.2, {0.2, 0, 0}};
  CHECK(positivity_limit(low, mild, 1.0, 1.0, 0.1, 1e-12).theta == 1.0);

  // High-order flux that would drain the left cell.
  const double rho_l = 0.01, rho_r = 1.0, lam = 0.5;
  const FaceFlux drain{1.0, {1.0, 0, 0}};
  const FaceFlux safe{0.001, {0.001, 0, 0}};
  const LimitedFlux lim = positivity_limit(safe, drain, rho_l, rho_r, lam, 1e-12);
  CHECK(lim.theta < 1.0);
  CHECK(lim.theta >= 0.0);
  CHECK(rho_l / 6.0 - lam * lim.flux.mass >= 1e-12 / 6.0 - 1e-18);
  CHECK(lim.flux.momentum[0] == doctest::Approx(lim.flux.mass));
}

TEST_CASE("constant states have zero flux divergence") {
  const Workspace w = Workspace::standard();
  HydroSolver solver(w, GridSpec{}, PdeParams{});
  const FieldState s = uniform_state(solver, 0.3);
  std::vector<double> dr;
  std::vector<Vec3> dj;
  solver.flux_divergence(s, 0.01, dr, dj);
  for (std::size_t c = 0; c < dr.size(); ++c) {
    CHECK(dr[c] == 0.0);
    CHECK(norm(dj[c]) == 0.0);
  }
}

TEST_CASE("flux divergence matches a 1D KT advection reference") {
  const Workspace w(5.0, {});
  GridSpec g;
  g.cells = 12;
  HydroSolver solver(w, g, PdeParams{});
  const double u = 0.7;
  std::vector<double> line(12);
  for (int i = 0; i < 12; ++i) line[i] = (i < 6 ? 1.0 : 0.3) + 0.1 * std::sin(1.7 * i);
  FieldState s;
  s.rho.resize(g.size());
  s.j.resize(g.size());
  for (std::size_t c = 0; c < g.size(); ++c) {
    s.rho[c] = line[g.ijk(c)[0]];
    s.j[c] = {s.rho[c] * u, 0.0, 0.0};
  }
  std::vector<double> dr;
  std::vector<Vec3> dj;
  solver.flux_divergence(s, 0.0, dr, dj);

  // Independent scalar reference on the interior faces.
  const double h = g.h();
  auto face_flux = [&](int left) {
    const double sl = minmod_ref(line[left] - line[left - 1], line[left + 1] - line[left]);
    const double sr = minmod_ref(line[left + 1] - line[left], line[left + 2] - line[left + 1]);
    const double rl = line[left] + 0.5 * sl, rr = line[left + 1] - 0.5 * sr;
    return 0.5 * u * (rl + rr) - 0.5 * std::abs(u) * (rr - rl);
  };
  for (int i = 2; i <= 9; ++i) {
    const double ref = (face_flux(i) - face_flux(i - 1)) / h;
    for (int k = 0; k < 12; ++k)
      for (int j = 0; j < 12; ++j) {
        const std::size_t c = g.index(i, j, k);
        CHECK(dr[c] == doctest::Approx(ref).epsilon(1e-12));
        CHECK(dj[c][0] == doctest::Approx(u * ref).epsilon(1e-12));
      }
  }
}

TEST_CASE("wall faces carry no mass and the scheme is conservative") {
  const Workspace w = Workspace::standard();
  HydroSolver solver(w, GridSpec{}, PdeParams{});
  const FieldState s = blob_state(solver, 3, 2.0);
  std::vector<double> dr;
  std::vector<Vec3> dj;
  solver.flux_divergence(s, 0.005, dr, dj);
  double total = 0.0, scale = 0.0;
  for (std::size_t c = 0; c < dr.size(); ++c) {
    if (solver.mask()[c] != CellKind::fluid) {
      CHECK(dr[c] == 0.0);
      continue;
    }
    total += dr[c];
    scale += std::abs(dr[c]);
  }
  CHECK(std::abs(total) <= 1e-13 * scale);

  // A single cell next to the +x wall, moving into it.
  FieldState one = uniform_state(solver, 0.0);
  const std::size_t c = solver.grid().index(10, 5, 5);
  one.rho[c] = 1.0;
  one.j[c] = {1e-3, 0, 0};
  solver.flux_divergence(one, 0.0, dr, dj);
  CHECK(dr[c] == 0.0);
}

TEST_CASE("CFL step") {
  const Workspace w(5.0, {});
  HydroSolver solver(w, GridSpec{}, PdeParams{});
  FieldState s = uniform_state(solver, 1.0);
  CHECK(solver.cfl_dt(s) == 0.01);
  s.j[solver.grid().index(3, 3, 3)] = {5.0, 0, 0};
  CHECK(solver.cfl_dt(s) == doctest::Approx(0.05 * (10.0 / 11.0) / 5.0));
  s.j[solver.grid().index(3, 3, 3)] = {10.0, 0, 0};
  CHECK(solver.cfl_dt(s) == doctest::Approx(0.5 * 0.05 * (10.0 / 11.0) / 5.0));
}

TEST_CASE("source term") {
  const Workspace open(5.0, {});
  HydroSolver zero(open, GridSpec{}, zero_params());
  const FieldState blob = blob_state(zero, 1, 1.0);
  for (const auto& v : zero.source_term(blob)) CHECK(norm(v) == 0.0);

  // Symmetric density, no momentum and no obstacles: the force is odd.
  PdeParams p;
  p.k_o = 0.0;
  HydroSolver solver(open, GridSpec{}, p);
  const GridSpec& g = solver.grid();
  FieldState s = uniform_state(solver, 0.0);
  for (std::size_t c = 0; c < g.size(); ++c) s.rho[c] = std::exp(-0.3 * norm_sq(g.center(c)));
  const auto src = solver.source_term(s);
  CHECK(norm(src[g.index(5, 5, 5)]) <= 1e-14);
  for (std::size_t c = 0; c < g.size(); ++c) {
    const auto ijk = g.ijk(c);
    const Vec3 mirror = src[g.index(10 - ijk[0], 10 - ijk[1], 10 - ijk[2])];
    CHECK(norm(src[c] + mirror) <= 1e-12 * (1.0 + norm(src[c])));
  }

  // Self-propulsion vanishes at the preferred speed.
  PdeParams only_p = zero_params();
  only_p.k_p = 1.0;
  only_p.lambda_p = 2.0;
  HydroSolver prop(open, GridSpec{}, only_p);
  FieldState q = uniform_state(prop, 0.5);
  for (auto& j : q.j) j = {1.0, 0, 0};
  for (const auto& v : prop.source_term(q)) CHECK(norm(v) <= 1e-15);
}

TEST_CASE("obstacle potential") {
  const Workspace w = Workspace::standard();
  const GridSpec g;
  for (double v : obstacle_potential(w, g, 0.0, 1.0)) CHECK(v == 0.0);
  const auto u = obstacle_potential(w, g, 2.0, 1.0);
  CHECK(u[g.index(5, 5, 5)] <= 1e-12);

  GridSpec fine;
  fine.cells = 33;
  const auto uf = obstacle_potential(w, fine, 2.0, 0.5);
  const std::size_t inside = fine.index(fine.cell_coord(2.5), fine.cell_coord(2.5), fine.cell_coord(-4.0));
  CHECK(uf[inside] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(obstacle_potential(w, g, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("generic SSP-RK2 on a linear ODE") {
  FieldState s;
  s.rho = {1.0, 2.0};
  s.j = {{1, 0, 0}, {0, -1, 0}};
  const double alpha = -1.3, dt = 0.1;
  const FieldRhs rhs = [&](const FieldState& u, std::vector<double>& dr, std::vector<Vec3>& dj) {
    dr.resize(u.rho.size());
    dj.resize(u.j.size());
    for (std::size_t c = 0; c < u.rho.size(); ++c) {
      dr[c] = alpha * u.rho[c];
      dj[c] = alpha * u.j[c];
    }
  };
  const FieldState next = ssp_rk2(s, dt, rhs);
  const double factor = 1.0 + alpha * dt + 0.5 * alpha * alpha * dt * dt;
  CHECK(next.rho[1] == doctest::Approx(2.0 * factor).epsilon(1e-15));
  CHECK(next.j[1][1] == doctest::Approx(-factor).epsilon(1e-15));
  CHECK(next.t == doctest::Approx(dt));
}

TEST_CASE("solver steps") {
  const Workspace w = Workspace::standard();
  HydroSolver solver(w, GridSpec{}, PdeParams{});
  const FieldState s = blob_state(solver, 7, 1.5);
  const FieldState next = solver.ssp_rk2_step(s, solver.cfl_dt(s));
  CHECK(std::abs(solver.mass(next) - solver.mass(s)) <= 1e-12 * solver.mass(s));
  for (std::size_t c = 0; c < s.rho.size(); ++c) {
    if (solver.mask()[c] == CellKind::fluid) CHECK(next.rho[c] >= 0.0);
    else CHECK(next.rho[c] == 0.0);
  }

  HydroSolver frozen(w, GridSpec{}, zero_params());
  const FieldState flat = uniform_state(frozen, 0.1);
  const FieldState same = frozen.ssp_rk2_step(flat, 0.01);
  CHECK(same.rho == flat.rho);
}

TEST_CASE("forward solves") {
  const Workspace w = Workspace::standard();
  const GridSpec g;
  HydroSolver solver(w, g, PdeParams{});
  const FieldState s = blob_state(solver, 5, 1.0);

  const auto none = solver.solve(s, 0.0, std::vector<double>{0.0});
  REQUIRE(none.snapshots.size() == 1);
  CHECK(none.snapshots[0].rho == s.rho);

  SolveStats st;
  const std::vector<double> times{0.1, 0.25, 0.5};
  const auto traj = solver.solve(s, 0.5, times, &st);
  REQUIRE(traj.snapshots.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(traj.snapshots[i].t == times[i]);
  CHECK(st.max_mass_drift <= 1e-10);
  CHECK(st.min_rho >= 0.0);
  CHECK(st.steps >= 50);

  SolverConfig interp;
  interp.matching = TimeMatching::interpolate;
  HydroSolver lerp(w, g, PdeParams{}, interp);
  const auto traj2 = lerp.solve(s, 0.5, times);
  REQUIRE(traj2.snapshots.size() == 3);
  CHECK(traj2.snapshots[1].t == 0.25);
  double diff = 0.0;
  for (std::size_t c = 0; c < g.size(); ++c)
    diff = std::max(diff, std::abs(traj2.snapshots[1].rho[c] - traj.snapshots[1].rho[c]));
  CHECK(diff < 1e-2);

  HydroSolver frozen(w, g, zero_params());
  const FieldState flat = uniform_state(frozen, 1.0 / (1299 * g.cell_volume()));
  const auto still = frozen.solve(flat, 0.3, std::vector<double>{0.3});
  CHECK(still.snapshots[0].rho == flat.rho);

  SolverConfig tight;
  tight.max_steps = 3;
  HydroSolver capped(w, g, PdeParams{}, tight);
  CHECK_THROWS_AS(capped.solve(s, 1.0, std::vector<double>{1.0}), NumericalError);
  CHECK_THROWS_AS(solver.solve(s, 0.5, std::vector<double>{0.6}), std::invalid_argument);
}

TEST_CASE("mirror symmetry is preserved") {
  const Workspace w = Workspace::standard();
  const GridSpec g;
  HydroSolver solver(w, g, PdeParams{});
  FieldState s = blob_state(solver, 9, 1.0);
  for (std::size_t c = 0; c < g.size(); ++c) {
    const auto ijk = g.ijk(c);
    const std::size_t m = g.index(10 - ijk[0], ijk[1], ijk[2]);
    if (m < c) continue;
    const double r = 0.5 * (s.rho[c] + s.rho[m]);
    Vec3 j = 0.5 * (s.j[c] + s.j[m]);
    j[0] = 0.5 * (s.j[c][0] - s.j[m][0]);
    s.rho[c] = s.rho[m] = r;
    s.j[c] = j;
    s.j[m] = {-j[0], j[1], j[2]};
  }
  const auto out = solver.solve(s, 0.3, std::vector<double>{0.3});
  const FieldState& e = out.snapshots[0];
  for (std::size_t c = 0; c < g.size(); ++c) {
    const auto ijk = g.ijk(c);
    const std::size_t m = g.index(10 - ijk[0], ijk[1], ijk[2]);
    CHECK(std::abs(e.rho[c] - e.rho[m]) <= 1e-10);
    CHECK(std::abs(e.j[c][0] + e.j[m][0]) <= 1e-10);
    CHECK(std::abs(e.j[c][1] - e.j[m][1]) <= 1e-10);
  }
}

TEST_CASE("parameter validation") {
  PdeParams p;
  p.lambda_c = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  const auto a = PdeParams{}.to_array();
  CHECK(PdeParams::from_array(a).to_array() == a);
  CHECK(PdeParams::is_scale(5));
  CHECK_FALSE(PdeParams::is_scale(4));
}

TEST_CASE("velocity cap") {
  FieldState s;
  s.rho = {2.0, 1e-9, 0.0, 1.0};
  s.j = {{1, 0, 0}, {1e-3, -2e-3, 0}, {0, 0, 0}, {0, 0, 3}};
  CHECK(cap_velocity(s, 2.0) == 2);
  CHECK(s.j[0][0] == 1.0);
  CHECK(s.j[1][1] == doctest::Approx(-2e-9));
  CHECK(s.j[1][0] == doctest::Approx(1e-9));
  CHECK(s.j[3][2] == 2.0);
  CHECK_THROWS_AS(cap_velocity(s, 0.0), std::invalid_argument);
}
