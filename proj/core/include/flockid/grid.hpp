#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "flockid/vec3.hpp"

namespace flockid {

/// Uniform n^3 partition of [-R, R]^3, optionally paired with an n^3
/// partition of velocity space [-v_max, v_max]^3 for histograms.
///
/// Linear cell index: idx = (k * n + j) * n + i, i along x.
struct GridSpec {
  int cells = 11;
  double half_width = 5.0;
  double v_max = 1.0;

  void validate() const {
    if (cells < 1) throw std::invalid_argument("GridSpec: cells must be >= 1");
    if (!(half_width > 0.0)) throw std::invalid_argument("GridSpec: half_width must be > 0");
    if (!(v_max > 0.0)) throw std::invalid_argument("GridSpec: v_max must be > 0");
  }

  double h() const { return 2.0 * half_width / cells; }
  double cell_volume() const { return h() * h() * h(); }
  double vel_h() const { return 2.0 * v_max / cells; }
  double vel_cell_volume() const { return vel_h() * vel_h() * vel_h(); }
  std::size_t size() const {
    const auto n = static_cast<std::size_t>(cells);
    return n * n * n;
  }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * cells + j) * cells + i;
  }
  std::array<int, 3> ijk(std::size_t idx) const {
    const auto n = static_cast<std::size_t>(cells);
    return {static_cast<int>(idx % n), static_cast<int>((idx / n) % n),
            static_cast<int>(idx / (n * n))};
  }

  double center_coord(int i) const { return -half_width + (i + 0.5) * h(); }
  Vec3 center(std::size_t idx) const {
    const auto c = ijk(idx);
    return {center_coord(c[0]), center_coord(c[1]), center_coord(c[2])};
  }
  double vel_center_coord(int l) const { return -v_max + (l + 0.5) * vel_h(); }

  /// Half-open bins [lo, hi) except the last, which is closed. Values outside
  /// [lo_edge, hi_edge] clamp to the end bins.
  static int bin(double x, double lo_edge, double width, int n) {
    const double s = (x - lo_edge) / width;
    if (!(s >= 0.0)) return 0;
    if (s >= n) return n - 1;
    return static_cast<int>(s);
  }
  int cell_coord(double x) const { return bin(x, -half_width, h(), cells); }
  int vel_cell_coord(double v) const { return bin(v, -v_max, vel_h(), cells); }
};

enum class CellKind : std::uint8_t { fluid = 0, obstacle = 1, exterior = 2 };
using CellMask = std::vector<CellKind>;

inline std::size_t fluid_count(const CellMask& mask) {
  std::size_t n = 0;
  for (auto k : mask) n += (k == CellKind::fluid);
  return n;
}

/// Scalar density on a spatial grid, units 1/length^3.
struct DensityField {
  GridSpec grid;
  std::vector<double> values;

  DensityField() = default;
  explicit DensityField(const GridSpec& g) : grid(g), values(g.size(), 0.0) {}
  DensityField(const GridSpec& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size()) throw std::invalid_argument("DensityField: size mismatch");
  }

  /// Riemann sum of the field.
  double mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * grid.cell_volume();
  }
};

/// Momentum density (3-vector per cell).
struct MomentumField {
  GridSpec grid;
  std::vector<Vec3> values;

  MomentumField() = default;
  explicit MomentumField(const GridSpec& g) : grid(g), values(g.size()) {}
};

}  // namespace flockid
