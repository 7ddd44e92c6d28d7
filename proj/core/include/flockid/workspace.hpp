#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "flockid/grid.hpp"
#include "flockid/vec3.hpp"

namespace flockid {

/// Axis-aligned cube {x : ||x - center||_inf <= half_width}.
struct Cube {
  Vec3 center;
  double half_width = 0.0;
};

/// Result of tracing a straight segment to the first boundary crossing.
struct SegmentHit {
  double t = 0.0;         ///< fraction of the segment in [0, 1]
  Vec3 point;             ///< crossing point
  Vec3 normal;            ///< outward unit normal of the crossed cube's face
  std::size_t region = 0; ///< 0 = outer cube, m >= 1 = obstacle m
};

/// Arena D = outer cube (centered at the origin) minus a set of closed,
/// pairwise disjoint cubic obstacles. Immutable after construction.
///
/// Region indices: 0 is the outer cube D_1, 1..M-1 are obstacles in the order
/// they were given.
class Workspace {
 public:
  /// Throws std::invalid_argument if an obstacle is not strictly inside the
  /// outer cube or two obstacles overlap.
  Workspace(double outer_half_width, std::vector<Cube> obstacles);

  /// Four unit obstacles resting on the floor of a half-width 5 arena.
  static Workspace standard();

  double outer_half_width() const { return outer_.half_width; }
  const std::vector<Cube>& obstacles() const { return obstacles_; }
  std::size_t region_count() const { return obstacles_.size() + 1; }
  const Cube& region(std::size_t m) const;

  /// True iff ||x||_inf <= R_1 and x lies in no (closed) obstacle.
  bool contains(const Vec3& x) const;

  /// True iff x lies in obstacle m (m >= 1, faces included).
  bool in_obstacle(const Vec3& x, std::size_t m) const;

  /// Euclidean distance from x to the surface of cube m, valid inside and
  /// outside the cube. Throws std::out_of_range for a bad index.
  double boundary_distance(const Vec3& x, std::size_t m) const;

  /// First point where the segment p0 -> p1 leaves D, if any. Requires
  /// contains(p0). Exits through an edge or corner resolve to the lowest axis.
  std::optional<SegmentHit> segment_exit(const Vec3& p0, const Vec3& p1) const;

  /// Same as segment_exit but tolerates p0 sitting on an obstacle face (as it
  /// does right after a reflection). Segments that only graze an obstacle
  /// edge or leave a face they start on do not count as hits.
  std::optional<SegmentHit> trace(const Vec3& p0, const Vec3& p1) const;

 private:
  Cube outer_;
  std::vector<Cube> obstacles_;
};

/// Euclidean distance from x to the surface of cube c.
double cube_surface_distance(const Cube& c, const Vec3& x);

/// Per-cell count of satisfied indicators at cell centers: 1 if the center is
/// within `band` of the outer boundary, plus 1 for each obstacle containing it.
/// Requires band > 0.
std::vector<double> indicator_grid(const Workspace& w, const GridSpec& grid, double band);

/// Classifies cells by their centers: obstacle if inside some obstacle,
/// exterior if outside the outer cube, fluid otherwise.
CellMask cell_mask(const Workspace& w, const GridSpec& grid);

}  // namespace flockid
