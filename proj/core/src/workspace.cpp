#include "flockid/workspace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace flockid {

namespace {

Vec3 axis_normal(std::size_t axis, double sign) {
  Vec3 n;
  n[axis] = sign;
  return n;
}

}  // namespace

Workspace::Workspace(double outer_half_width, std::vector<Cube> obstacles)
    : outer_{Vec3{}, outer_half_width}, obstacles_(std::move(obstacles)) {
  if (!(outer_half_width > 0.0)) throw std::invalid_argument("workspace: outer half-width must be > 0");
  for (std::size_t m = 0; m < obstacles_.size(); ++m) {
    const Cube& c = obstacles_[m];
    const std::string tag = "workspace: obstacle " + std::to_string(m + 1);
    if (!(c.half_width > 0.0) || !(c.half_width < outer_half_width))
      throw std::invalid_argument(tag + " half-width must lie in (0, R1)");
    for (std::size_t a = 0; a < 3; ++a) {
      if (std::abs(c.center[a]) + c.half_width > outer_half_width)
        throw std::invalid_argument(tag + " is not contained in the outer cube");
    }
    for (std::size_t k = 0; k < m; ++k) {
      const Cube& o = obstacles_[k];
      bool separated = false;
      for (std::size_t a = 0; a < 3; ++a)
        separated |= std::abs(c.center[a] - o.center[a]) > c.half_width + o.half_width;
      if (!separated) throw std::invalid_argument(tag + " intersects obstacle " + std::to_string(k + 1));
    }
  }
}

Workspace Workspace::standard() {
  return Workspace(5.0, {{{2.5, 2.5, -4.0}, 1.0},
                         {{2.5, -2.5, -4.0}, 1.0},
                         {{-2.5, 2.5, -4.0}, 1.0},
                         {{-2.5, -2.5, -4.0}, 1.0}});
}

const Cube& Workspace::region(std::size_t m) const {
  if (m == 0) return outer_;
  if (m > obstacles_.size()) throw std::out_of_range("workspace: region index " + std::to_string(m));
  return obstacles_[m - 1];
}

bool Workspace::in_obstacle(const Vec3& x, std::size_t m) const {
  const Cube& c = region(m);
  return norm_inf(x - c.center) <= c.half_width;
}

bool Workspace::contains(const Vec3& x) const {
  if (norm_inf(x) > outer_.half_width) return false;
  for (std::size_t m = 1; m <= obstacles_.size(); ++m)
    if (in_obstacle(x, m)) return false;
  return true;
}

double cube_surface_distance(const Cube& c, const Vec3& x) {
  Vec3 q;
  double qmax = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < 3; ++a) {
    q[a] = std::abs(x[a] - c.center[a]) - c.half_width;
    qmax = std::max(qmax, q[a]);
  }
  if (qmax <= 0.0) return -qmax;
  Vec3 outside{std::max(q[0], 0.0), std::max(q[1], 0.0), std::max(q[2], 0.0)};
  return norm(outside);
}

double Workspace::boundary_distance(const Vec3& x, std::size_t m) const {
  return cube_surface_distance(region(m), x);
}

std::optional<SegmentHit> Workspace::segment_exit(const Vec3& p0, const Vec3& p1) const {
  if (!contains(p0)) throw std::invalid_argument("segment_exit: start point is outside the workspace");
  return trace(p0, p1);
}

std::optional<SegmentHit> Workspace::trace(const Vec3& p0, const Vec3& p1) const {
  const Vec3 d = p1 - p0;
  const double R = outer_.half_width;
  std::optional<SegmentHit> best;

  // Outer wall: the segment leaves only if its end point is strictly outside.
  for (std::size_t a = 0; a < 3; ++a) {
    if (std::abs(p1[a]) <= R) continue;
    const double wall = p1[a] > 0.0 ? R : -R;
    const double t = std::clamp((wall - p0[a]) / d[a], 0.0, 1.0);
    if (!best || t < best->t) {
      SegmentHit hit;
      hit.t = t;
      hit.point = p0 + t * d;
      hit.point[a] = wall;
      hit.normal = axis_normal(a, p1[a] > 0.0 ? 1.0 : -1.0);
      hit.region = 0;
      best = hit;
    }
  }

  for (std::size_t m = 1; m <= obstacles_.size(); ++m) {
    const Cube& c = obstacles_[m - 1];
    double t_in = -std::numeric_limits<double>::infinity();
    double t_out = std::numeric_limits<double>::infinity();
    std::size_t entry_axis = 0;
    bool miss = false;
    for (std::size_t a = 0; a < 3 && !miss; ++a) {
      const double lo = c.center[a] - c.half_width;
      const double hi = c.center[a] + c.half_width;
      if (d[a] == 0.0) {
        // Parallel to this slab: travelling on or outside a face plane is a graze.
        miss = !(p0[a] > lo && p0[a] < hi);
        continue;
      }
      double t1 = (lo - p0[a]) / d[a];
      double t2 = (hi - p0[a]) / d[a];
      if (t1 > t2) std::swap(t1, t2);
      if (t1 > t_in) {
        t_in = t1;
        entry_axis = a;
      }
      t_out = std::min(t_out, t2);
    }
    if (miss || !(t_in < t_out) || !(t_out > 0.0) || t_in > 1.0) continue;
    const double t = std::max(t_in, 0.0);
    if (best && !(t < best->t)) continue;
    SegmentHit hit;
    hit.t = t;
    hit.point = p0 + t * d;
    const double sign = d[entry_axis] > 0.0 ? -1.0 : 1.0;
    hit.point[entry_axis] = c.center[entry_axis] + sign * c.half_width;
    hit.normal = axis_normal(entry_axis, sign);
    hit.region = m;
    best = hit;
  }
  return best;
}

std::vector<double> indicator_grid(const Workspace& w, const GridSpec& grid, double band) {
  if (!(band > 0.0)) throw std::invalid_argument("indicator_grid: band must be > 0");
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t idx = 0; idx < out.size(); ++idx) {
    const Vec3 x = grid.center(idx);
    double count = 0.0;
    if (norm_inf(x) <= w.outer_half_width() && w.boundary_distance(x, 0) < band) count += 1.0;
    for (std::size_t m = 1; m < w.region_count(); ++m)
      if (w.in_obstacle(x, m)) count += 1.0;
    out[idx] = count;
  }
  return out;
}

CellMask cell_mask(const Workspace& w, const GridSpec& grid) {
  CellMask mask(grid.size(), CellKind::fluid);
  for (std::size_t idx = 0; idx < mask.size(); ++idx) {
    const Vec3 x = grid.center(idx);
    if (norm_inf(x) > w.outer_half_width()) {
      mask[idx] = CellKind::exterior;
      continue;
    }
    for (std::size_t m = 1; m < w.region_count(); ++m) {
      if (w.in_obstacle(x, m)) {
        mask[idx] = CellKind::obstacle;
        break;
      }
    }
  }
  return mask;
}

}  // namespace flockid
