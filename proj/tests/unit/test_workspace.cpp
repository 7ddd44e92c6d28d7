#include <doctest.h>

#include <cmath>
#include <random>

#include "flockid/workspace.hpp"

using namespace flockid;

namespace {

// Brute-force oracle: first sample parameter at which the segment leaves D,
// refined by bisection.
std::optional<double> first_exit_sampled(const Workspace& w, const Vec3& p0, const Vec3& p1) {
  const int samples = 20000;
  double prev = 0.0;
  for (int s = 1; s <= samples; ++s) {
    const double t = static_cast<double>(s) / samples;
    if (!w.contains(p0 + t * (p1 - p0))) {
      double lo = prev, hi = t;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (w.contains(p0 + mid * (p1 - p0)) ? lo : hi) = mid;
      }
      return hi;
    }
    prev = t;
  }
  return std::nullopt;
}

bool axis_unit(const Vec3& n) {
  int nonzero = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    if (n[a] == 0.0) continue;
    if (std::abs(n[a]) != 1.0) return false;
    ++nonzero;
  }
  return nonzero == 1;
}

}  // namespace

TEST_CASE("contains on the standard arena") {
  const Workspace w = Workspace::standard();
  CHECK(w.contains({0, 0, 0}));
  CHECK_FALSE(w.contains({2.5, 2.5, -4}));
  CHECK_FALSE(w.contains({6, 0, 0}));
  CHECK(w.contains({5, 5, 5}));
  // Obstacle faces are closed.
  CHECK_FALSE(w.contains({3.5, 2.5, -4}));
  CHECK(w.contains({std::nextafter(3.5, 4.0), 2.5, -4}));
}

TEST_CASE("standard obstacles") {
  const Workspace w = Workspace::standard();
  REQUIRE(w.obstacles().size() == 4);
  REQUIRE(w.region_count() == 5);
  CHECK(w.outer_half_width() == 5.0);
  for (const auto& o : w.obstacles()) {
    CHECK(o.half_width == 1.0);
    CHECK(std::abs(o.center[0]) == 2.5);
    CHECK(std::abs(o.center[1]) == 2.5);
    CHECK(o.center[2] == -4.0);
  }
}

TEST_CASE("boundary distance") {
  const Workspace w = Workspace::standard();
  CHECK(w.boundary_distance({2.5, 2.5, -4}, 1) == doctest::Approx(1.0));
  CHECK(w.boundary_distance({3.5, 2.5, -4}, 1) == doctest::Approx(0.0));
  CHECK(w.boundary_distance({0, 0, 0}, 0) == doctest::Approx(5.0));
  CHECK(w.boundary_distance({4.5, 2.5, -4}, 1) == doctest::Approx(1.0));
  // Outside past an edge: Euclidean distance to the nearest edge.
  CHECK(w.boundary_distance({4.5, 4.5, -4}, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(w.boundary_distance({0, 0, 0}, 5), std::out_of_range);
}

TEST_CASE("constructor validation") {
  CHECK_THROWS_AS(Workspace(5.0, {{{0, 0, 0}, 6.0}}), std::invalid_argument);
  CHECK_THROWS_AS(Workspace(5.0, {{{4.5, 0, 0}, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(Workspace(5.0, {{{0, 0, 0}, 1.0}, {{1.5, 0, 0}, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(Workspace(5.0, {{{0, 0, 0}, 0.0}}), std::invalid_argument);
  CHECK_NOTHROW(Workspace(5.0, {}));
}

TEST_CASE("segment exit examples") {
  const Workspace w = Workspace::standard();
  const auto hit = w.segment_exit({4.5, 0, 0}, {5.5, 0, 0});
  REQUIRE(hit);
  CHECK(hit->t == doctest::Approx(0.5));
  CHECK(hit->point[0] == 5.0);
  CHECK(hit->normal[0] == 1.0);
  CHECK(hit->region == 0);

  CHECK_FALSE(w.segment_exit({0, 0, 0}, {1, 0, 0}));

  const auto top = w.segment_exit({2.5, 2.5, -1}, {2.5, 2.5, -3.5});
  REQUIRE(top);
  CHECK(top->t == doctest::Approx(0.8));
  CHECK(top->point[2] == -3.0);
  CHECK(top->normal[2] == 1.0);
  CHECK(top->region == 1);

  CHECK_THROWS(w.segment_exit({2.5, 2.5, -4}, {0, 0, 0}));
}

TEST_CASE("edge exits resolve to the lowest axis") {
  const Workspace w(5.0, {});
  const auto hit = w.segment_exit({4, 4, 0}, {6, 6, 0});
  REQUIRE(hit);
  CHECK(hit->normal[0] == 1.0);
  CHECK(hit->normal[1] == 0.0);
}

TEST_CASE("segment exit agrees with brute-force sampling") {
  const Workspace w = Workspace::standard();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(-5.0, 5.0), step(-3.0, 3.0);
  int hits = 0;
  for (int trial = 0; trial < 300; ++trial) {
    Vec3 p0;
    do p0 = {pos(rng), pos(rng), pos(rng)};
    while (!w.contains(p0));
    const Vec3 p1 = p0 + Vec3{step(rng), step(rng), step(rng)};
    const auto hit = w.segment_exit(p0, p1);
    const auto oracle = first_exit_sampled(w, p0, p1);
    REQUIRE(hit.has_value() == oracle.has_value());
    if (!hit) continue;
    ++hits;
    CHECK(hit->t == doctest::Approx(*oracle).epsilon(1e-6));
    CHECK(axis_unit(hit->normal));
    CHECK(std::abs(w.boundary_distance(hit->point, hit->region)) <= 1e-12 * w.outer_half_width());
  }
  CHECK(hits > 50);
}

TEST_CASE("indicator grid") {
  const Workspace w = Workspace::standard();
  GridSpec g;
  const auto ind = indicator_grid(w, g, 0.5);
  CHECK(ind[g.index(5, 5, 5)] == 0.0);
  const Vec3 c{2.5, 2.5, -4};
  CHECK(ind[g.index(g.cell_coord(c[0]), g.cell_coord(c[1]), g.cell_coord(c[2]))] == 1.0);

  GridSpec fine;
  fine.cells = 25;  // a center at x = 4.8, 0.2 from the wall
  const auto near_wall = indicator_grid(w, fine, 0.5);
  CHECK(fine.center_coord(24) == doctest::Approx(4.8));
  CHECK(near_wall[fine.index(24, 12, 12)] == 1.0);
  CHECK_THROWS_AS(indicator_grid(w, g, 0.0), std::invalid_argument);

  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    const Vec3 x = g.center(idx);
    for (std::size_t m = 1; m < w.region_count(); ++m)
      if (w.in_obstacle(x, m)) CHECK_FALSE(w.contains(x));
  }
}

TEST_CASE("cell mask of the standard arena") {
  const Workspace w = Workspace::standard();
  GridSpec g;
  const CellMask mask = cell_mask(w, g);
  CHECK(fluid_count(mask) == 1331 - 4 * 8);
  CHECK(mask[g.index(5, 5, 5)] == CellKind::fluid);
  CHECK(mask[g.index(7, 7, 1)] == CellKind::obstacle);
}
