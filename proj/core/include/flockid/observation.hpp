#pragma once

#include <cstddef>
#include <cstdint>
#include <map>

#include "flockid/boids.hpp"
#include "flockid/grid.hpp"

namespace flockid {

/// Position-velocity histogram over n^6 cells, stored sparsely as integer
/// counts; cell masses are count / agents.
struct PVHistogram {
  GridSpec grid;
  double t = 0.0;
  std::uint64_t agents = 0;
  /// key = spatial_index * n^3 + velocity_index
  std::map<std::uint64_t, std::uint64_t> counts;

  double mass(std::uint64_t key) const;
  /// (number of binned agents) / agents.
  double total_mass() const;
};

/// Each agent adds 1/N to one 6D cell. Velocities beyond v_max clamp to the
/// boundary cell; agents outside the spatial box are dropped.
PVHistogram build_histogram(const BoidState& state, const GridSpec& grid);

/// Summed velocity-cell masses per spatial cell divided by the cell volume.
DensityField position_density(const PVHistogram& h);

/// Sum of (velocity-cell center) * mass per spatial cell, divided by the
/// cell volume.
MomentumField momentum_density(const PVHistogram& h);

/// Squared Hellinger distance 1/2 * sum (sqrt p - sqrt q)^2 * cell volume.
/// Throws std::invalid_argument on grid mismatch or negative entries.
double hellinger_sq(const DensityField& p, const DensityField& q);

/// Largest |velocity component| over every stored sample.
double max_speed_component(const BoidTrajectory& traj);

}  // namespace flockid
