#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "flockid/boids.hpp"
#include "flockid/grid.hpp"
#include "flockid/initfit.hpp"
#include "flockid/observation.hpp"

namespace flockid {

// Binary records are little-endian with an 8-byte magic tag followed by
// u64 / f64 fields. Layouts:
//
// FLKTRJ01  u64 N, u64 dims (3), f64 dt, u64 sample_every, u64 S,
//           then per sample: f64 t, N*3 f64 positions, N*3 f64 velocities.
// FLKFLD01  u64 n, f64 half_width, f64 v_max, u64 components (1 or 3),
//           u64 count, then per record: f64 t, n^3 * components f64.
// FLKHST01  u64 n, f64 half_width, f64 v_max, u64 count, then per
//           histogram: f64 t, u64 agents, u64 entries, entries * (u64 key, u64 count).
// FLKNET01  u64 layers, u64 widths[layers], f64 input_scale,
//           f64 momentum_bound, u64 weights, weights * f64.
//
// Readers throw IoError on short reads or a wrong tag.

void write_trajectory(const std::filesystem::path& path, const BoidTrajectory& traj);
BoidTrajectory read_trajectory(const std::filesystem::path& path);

struct FieldRecord {
  double t = 0.0;
  std::vector<double> values;  ///< n^3 * components, component-interleaved
};
struct FieldSeries {
  GridSpec grid;
  std::size_t components = 1;
  std::vector<FieldRecord> records;
};
void write_fields(const std::filesystem::path& path, const FieldSeries& series);
FieldSeries read_fields(const std::filesystem::path& path);

FieldRecord to_record(double t, const std::vector<double>& rho);
FieldRecord to_record(double t, const std::vector<Vec3>& j);
std::vector<Vec3> vectors_of(const FieldRecord& r);

void write_histograms(const std::filesystem::path& path, const std::vector<PVHistogram>& hists);
std::vector<PVHistogram> read_histograms(const std::filesystem::path& path);

void write_net(const std::filesystem::path& path, const NetWeights& net);
NetWeights read_net(const std::filesystem::path& path);

/// Full-precision (17 significant digits) formatting.
std::string format_double(double x);

/// Writes a CSV with a header row; every value uses format_double.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// Plane k of a scalar field: columns x, y, value.
void write_slice_csv(const std::filesystem::path& path, const GridSpec& grid, const std::vector<double>& values,
                     int k);
/// Plane k of a vector field: columns x, y, jx, jy, jz.
void write_slice_csv(const std::filesystem::path& path, const GridSpec& grid, const std::vector<Vec3>& values,
                     int k);

/// Positions and velocities of one sample as CSV (agent, x, y, z, vx, vy, vz).
void write_state_csv(const std::filesystem::path& path, const BoidState& state);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace flockid
