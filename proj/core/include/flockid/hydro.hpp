#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "flockid/grid.hpp"
#include "flockid/nonlocal.hpp"
#include "flockid/vec3.hpp"
#include "flockid/workspace.hpp"

namespace flockid {

/// The ten identifiable physical parameters, in the canonical order
/// (k_a, k_c, k_r, k_p, k_o, lambda_a, lambda_c, lambda_r, lambda_p, lambda_o).
///
/// k_a/lambda_a: alignment kernel; k_c/lambda_c and k_r/lambda_r: the two
/// interaction potentials (signs carried by k); k_p/lambda_p: speed
/// relaxation rate and preferred speed; k_o/lambda_o: obstacle potential
/// height and mollifier width.
struct PdeParams {
  static constexpr std::size_t kSize = 10;

  double k_a = 1.0, k_c = 1.0, k_r = -1.0, k_p = 1.0, k_o = 1.0;
  double lambda_a = 1.0, lambda_c = 1.0, lambda_r = 1.0, lambda_p = 1.0, lambda_o = 1.0;

  std::array<double, kSize> to_array() const {
    return {k_a, k_c, k_r, k_p, k_o, lambda_a, lambda_c, lambda_r, lambda_p, lambda_o};
  }
  static PdeParams from_array(std::span<const double> a);
  static const std::array<const char*, kSize>& names();
  static constexpr bool is_scale(std::size_t i) { return i >= 5; }

  /// Throws std::invalid_argument unless every lambda is finite and > 0.
  void validate() const;
};

struct FieldState {
  double t = 0.0;
  std::vector<double> rho;
  std::vector<Vec3> j;
};

struct FieldTrajectory {
  std::vector<FieldState> snapshots;
};

struct FaceFlux {
  double mass = 0.0;
  Vec3 momentum;
};

struct LimitedFlux {
  FaceFlux flux;
  double theta = 1.0;  ///< weight of the high-order flux
};

/// Blends a face flux toward the low-order one so both neighbours keep
/// rho >= eps after a forward-Euler update, assuming each cell's density is
/// shared equally among its `faces_per_cell` faces. `dt_over_h` = dt / h.
LimitedFlux positivity_limit(const FaceFlux& low, const FaceFlux& high, double rho_left, double rho_right,
                             double dt_over_h, double eps, int faces_per_cell = 6);

/// 0 if the signs differ or either is 0, otherwise the one of least modulus.
double minmod(double a, double b);

/// Preferred-speed response F(s) = 1 + tanh(s^2 / lambda_p^2 - 1).
double speed_response(double s, double lambda_p);

/// Standard compact bump of width eps, normalized so its Riemann sum over
/// the grid offsets is 1, convolved with the obstacle indicator and scaled
/// by k_o. Indicator band width and bump width are both `width`.
std::vector<double> obstacle_potential(const Workspace& w, const GridSpec& grid, double k_o, double width);

enum class TimeMatching {
  land,         ///< shorten the step to hit each output time exactly
  interpolate,  ///< keep the CFL step and interpolate linearly in time
};

struct SolverConfig {
  double cfl = 0.05;
  double dt_max = 0.01;
  double rho_eps = 1e-12;  ///< vacuum threshold for velocities
  double pos_eps = 1e-12;  ///< positivity floor used by the flux limiter
  std::size_t max_steps = 1'000'000;
  NearRadius near = NearRadius::quarter_cell;
  TimeMatching matching = TimeMatching::land;
};

/// Per-solve diagnostics.
struct SolveStats {
  std::size_t steps = 0;
  double initial_mass = 0.0;
  double max_mass_drift = 0.0;  ///< max relative |mass(t) - mass(t0)| / mass(t0)
  double min_rho = 0.0;         ///< min fluid-cell density over accepted states
  double min_dt = 0.0;
};

/// Finite-volume solver for the pressureless Euler system with nonlocal
/// forcing on the masked n^3 grid. Not thread-safe (owns FFT scratch); use
/// one instance per worker.
class HydroSolver {
 public:
  HydroSolver(const Workspace& w, const GridSpec& grid, const PdeParams& params, SolverConfig cfg = {});

  const GridSpec& grid() const { return grid_; }
  const CellMask& mask() const { return mask_; }
  const std::vector<double>& potential() const { return potential_; }
  const SolverConfig& config() const { return cfg_; }

  /// Momentum source: alignment, potential gradient and speed relaxation.
  std::vector<Vec3> source_term(const FieldState& s);

  /// Divergence of the positivity-limited KT fluxes for a forward-Euler
  /// stage of length dt (dt <= 0 disables limiting).
  void flux_divergence(const FieldState& s, double dt, std::vector<double>& div_rho,
                       std::vector<Vec3>& div_j) const;

  /// min(dt_max, cfl * h / max |u_axis|) over fluid cells.
  double cfl_dt(const FieldState& s) const;

  /// One SSP-RK2 (Heun) step. Throws NumericalError on non-finite values.
  FieldState ssp_rk2_step(const FieldState& s, double dt);

  /// Marches from `initial` to t_final recording states at output_times
  /// (sorted, within [initial.t, t_final]). Throws NumericalError on blow-up
  /// or when max_steps is exceeded.
  FieldTrajectory solve(const FieldState& initial, double t_final, std::span<const double> output_times,
                        SolveStats* stats = nullptr);

  /// Zeroes rho and j on non-fluid cells.
  void apply_mask(FieldState& s) const;

  double mass(const FieldState& s) const;

 private:
  Vec3 velocity(double rho, const Vec3& j) const;

  const Workspace* ws_;
  GridSpec grid_;
  PdeParams params_;
  SolverConfig cfg_;
  CellMask mask_;
  std::vector<double> potential_;
  Convolver conv_;
  std::shared_ptr<const Spectrum> kernel_a_, kernel_c_, kernel_r_;
};

/// u1 = u + dt L(u);  u2 = (u + u1 + dt L(u1)) / 2. `rhs` fills (d rho, d j).
using FieldRhs = std::function<void(const FieldState&, std::vector<double>&, std::vector<Vec3>&)>;
FieldState ssp_rk2(const FieldState& s, double dt, const FieldRhs& rhs,
                   const std::function<void(FieldState&)>& post_stage = {});

/// Rescales j in every cell whose velocity j / rho has a component larger
/// than u_max in magnitude, keeping the direction. Returns the number of
/// cells changed.
std::size_t cap_velocity(FieldState& s, double u_max);

/// Convenience wrapper around HydroSolver::solve.
FieldTrajectory solve_forward(const FieldState& initial, const PdeParams& params, const Workspace& w,
                              const GridSpec& grid, double t_final, std::span<const double> output_times,
                              const SolverConfig& cfg = {}, SolveStats* stats = nullptr);

}  // namespace flockid
