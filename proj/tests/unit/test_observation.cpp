#include <doctest.h>

#include <cmath>
#include <random>

#include "flockid/observation.hpp"

using namespace flockid;

namespace {

GridSpec unit_grid() {
  GridSpec g;
  g.cells = 11;
  g.half_width = 5.0;
  g.v_max = 4.0;
  return g;
}

BoidState agents(std::vector<Vec3> x, std::vector<Vec3> v) {
  BoidState s;
  s.x = std::move(x);
  s.v = std::move(v);
  return s;
}

DensityField random_unit_field(const GridSpec& g, std::mt19937_64& rng, double zero_fraction) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DensityField f(g);
  for (auto& v : f.values) v = u(rng) < zero_fraction ? 0.0 : u(rng);
  f.values[0] += 1.0;
  const double m = f.mass();
  for (auto& v : f.values) v /= m;
  return f;
}

}  // namespace

TEST_CASE("histogram masses") {
  const GridSpec g = unit_grid();
  const Vec3 c = g.center(g.index(5, 5, 5));
  const Vec3 vc{g.vel_center_coord(7), g.vel_center_coord(5), g.vel_center_coord(5)};

  const PVHistogram one = build_histogram(agents({c}, {vc}), g);
  REQUIRE(one.counts.size() == 1);
  CHECK(one.mass(one.counts.begin()->first) == 1.0);

  const PVHistogram same = build_histogram(agents({c, c}, {vc, vc}), g);
  REQUIRE(same.counts.size() == 1);
  CHECK(same.mass(same.counts.begin()->first) == 1.0);

  const Vec3 c2 = g.center(g.index(1, 2, 3)), c3 = g.center(g.index(9, 9, 9));
  const PVHistogram spread = build_histogram(agents({c, c, c2, c3}, {vc, vc, vc, vc}), g);
  REQUIRE(spread.counts.size() == 3);
  std::vector<double> masses;
  for (const auto& [key, count] : spread.counts) masses.push_back(spread.mass(key));
  std::sort(masses.begin(), masses.end());
  CHECK(masses == std::vector<double>{0.25, 0.25, 0.5});
  CHECK(spread.total_mass() == 1.0);
}

TEST_CASE("velocity clamping and out-of-box agents") {
  const GridSpec g = unit_grid();
  const PVHistogram h = build_histogram(agents({{0, 0, 0}, {7, 0, 0}}, {{100, -100, 0}, {0, 0, 0}}), g);
  CHECK(h.total_mass() == 0.5);
  REQUIRE(h.counts.size() == 1);
  const std::uint64_t vkey = h.counts.begin()->first % g.size();
  CHECK(g.ijk(vkey)[0] == 10);
  CHECK(g.ijk(vkey)[1] == 0);
}

TEST_CASE("position and momentum densities") {
  const GridSpec g = unit_grid();
  const double omega = g.cell_volume();
  const std::size_t cell = g.index(4, 6, 2);
  const Vec3 x = g.center(cell);
  const Vec3 vc{g.vel_center_coord(8), g.vel_center_coord(1), g.vel_center_coord(5)};

  const PVHistogram h = build_histogram(agents({x}, {vc}), g);
  const DensityField q = position_density(h);
  CHECK(q.values[cell] == doctest::Approx(1.0 / omega));
  CHECK(q.mass() == doctest::Approx(1.0));
  const MomentumField j = momentum_density(h);
  for (std::size_t a = 0; a < 3; ++a) CHECK(j.values[cell][a] == doctest::Approx(vc[a] / omega));

  // Velocities +-c in one cell cancel; the zero velocity cell has center 0.
  const Vec3 minus{-vc[0], -vc[1], -vc[2]};
  const MomentumField cancel = momentum_density(build_histogram(agents({x, x}, {vc, minus}), g));
  CHECK(norm(cancel.values[cell]) == doctest::Approx(0.0));
  const MomentumField rest = momentum_density(build_histogram(agents({x}, {{0, 0, 0}}), g));
  CHECK(norm(rest.values[cell]) == 0.0);

  std::vector<Vec3> xs, vs;
  for (int k : {0, 1})
    for (int jj : {0, 1})
      for (int i : {0, 1}) {
        xs.push_back(g.center(g.index(i + 3, jj + 3, k + 3)));
        vs.push_back({0, 0, 0});
      }
  const DensityField eight = position_density(build_histogram(agents(xs, vs), g));
  CHECK(eight.values[g.index(3, 3, 3)] == doctest::Approx(1.0 / (8.0 * omega)));

  PVHistogram empty;
  empty.grid = g;
  const DensityField zero = position_density(empty);
  for (double v : zero.values) CHECK(v == 0.0);
}

TEST_CASE("hellinger hand values") {
  const GridSpec g = unit_grid();
  std::mt19937_64 rng(1);
  const DensityField p = random_unit_field(g, rng, 0.3);
  CHECK(hellinger_sq(p, p) == 0.0);

  DensityField a(g), b(g);
  a.values[0] = 1.0 / g.cell_volume();
  b.values[1] = 1.0 / g.cell_volume();
  CHECK(hellinger_sq(a, b) == doctest::Approx(1.0));

  // Two non-empty cells of volume 1/2: p = (2, 0), q = (1, 1).
  GridSpec two;
  two.cells = 2;
  two.half_width = std::cbrt(0.5);
  REQUIRE(two.cell_volume() == doctest::Approx(0.5));
  DensityField pp(two), qq(two);
  pp.values[0] = 2.0;
  qq.values[0] = 1.0;
  qq.values[1] = 1.0;
  CHECK(std::abs(hellinger_sq(pp, qq) - (1.0 - std::sqrt(2.0) / 2.0)) <= 1e-12);
}

TEST_CASE("hellinger symmetry and range") {
  const GridSpec g = unit_grid();
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const DensityField p = random_unit_field(g, rng, 0.5), q = random_unit_field(g, rng, 0.5);
    const double pq = hellinger_sq(p, q);
    CHECK(pq == hellinger_sq(q, p));
    CHECK(pq >= 0.0);
    CHECK(pq <= 1.0 + 1e-12);
  }
}

TEST_CASE("hellinger preconditions") {
  const GridSpec g = unit_grid();
  DensityField p(g), q(g);
  q.values[3] = -1.0;
  CHECK_THROWS_AS(hellinger_sq(p, q), std::invalid_argument);
  GridSpec other = g;
  other.cells = 5;
  CHECK_THROWS_AS(hellinger_sq(p, DensityField(other)), std::invalid_argument);
}

TEST_CASE("max speed component") {
  BoidTrajectory t;
  t.samples.push_back(agents({{0, 0, 0}}, {{1, -3, 2}}));
  t.samples.push_back(agents({{0, 0, 0}}, {{0.5, 0, 2.5}}));
  CHECK(max_speed_component(t) == 3.0);
}
