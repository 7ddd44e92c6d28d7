#include "flockid/observation.hpp"

#include <cmath>
#include <stdexcept>

namespace flockid {

double PVHistogram::mass(std::uint64_t key) const {
  const auto it = counts.find(key);
  if (it == counts.end() || agents == 0) return 0.0;
  return static_cast<double>(it->second) / static_cast<double>(agents);
}

double PVHistogram::total_mass() const {
  if (agents == 0) return 0.0;
  std::uint64_t total = 0;
  for (const auto& [key, c] : counts) total += c;
  return static_cast<double>(total) / static_cast<double>(agents);
}

PVHistogram build_histogram(const BoidState& state, const GridSpec& grid) {
  grid.validate();
  PVHistogram h;
  h.grid = grid;
  h.t = state.t;
  h.agents = state.size();
  const auto ncell = static_cast<std::uint64_t>(grid.size());
  for (std::size_t a = 0; a < state.size(); ++a) {
    const Vec3& x = state.x[a];
    if (norm_inf(x) > grid.half_width) continue;
    const Vec3& v = state.v[a];
    const std::size_t s = grid.index(grid.cell_coord(x[0]), grid.cell_coord(x[1]), grid.cell_coord(x[2]));
    const std::size_t u = grid.index(grid.vel_cell_coord(v[0]), grid.vel_cell_coord(v[1]), grid.vel_cell_coord(v[2]));
    ++h.counts[static_cast<std::uint64_t>(s) * ncell + u];
  }
  return h;
}

DensityField position_density(const PVHistogram& h) {
  DensityField q(h.grid);
  const auto ncell = static_cast<std::uint64_t>(h.grid.size());
  const double scale = 1.0 / h.grid.cell_volume();
  for (const auto& [key, c] : h.counts) q.values[key / ncell] += h.mass(key) * scale;
  return q;
}

MomentumField momentum_density(const PVHistogram& h) {
  MomentumField j(h.grid);
  const auto ncell = static_cast<std::uint64_t>(h.grid.size());
  const double scale = 1.0 / h.grid.cell_volume();
  for (const auto& [key, c] : h.counts) {
    const auto vel = h.grid.ijk(static_cast<std::size_t>(key % ncell));
    const Vec3 center{h.grid.vel_center_coord(vel[0]), h.grid.vel_center_coord(vel[1]),
                      h.grid.vel_center_coord(vel[2])};
    j.values[key / ncell] += (h.mass(key) * scale) * center;
  }
  return j;
}

double hellinger_sq(const DensityField& p, const DensityField& q) {
  if (p.values.size() != q.values.size() || p.grid.cells != q.grid.cells ||
      p.grid.half_width != q.grid.half_width)
    throw std::invalid_argument("hellinger_sq: fields live on different grids");
  double s = 0.0;
  for (std::size_t c = 0; c < p.values.size(); ++c) {
    const double a = p.values[c], b = q.values[c];
    if (a < 0.0 || b < 0.0) throw std::invalid_argument("hellinger_sq: negative density");
    const double d = std::sqrt(a) - std::sqrt(b);
    s += d * d;
  }
  return 0.5 * s * p.grid.cell_volume();
}

double max_speed_component(const BoidTrajectory& traj) {
  double m = 0.0;
  for (const auto& s : traj.samples)
    for (const auto& v : s.v) m = std::max(m, norm_inf(v));
  return m;
}

}  // namespace flockid
