#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "flockid/vec3.hpp"
#include "flockid/workspace.hpp"

namespace flockid {

/// Positions and velocities of N agents at one instant.
struct BoidState {
  double t = 0.0;
  std::vector<Vec3> x;
  std::vector<Vec3> v;

  std::size_t size() const { return x.size(); }
};

/// States sampled every `sample_every` integrator steps of size `dt`.
struct BoidTrajectory {
  double dt = 0.0;
  std::size_t sample_every = 1;
  std::vector<BoidState> samples;
};

/// Interaction radii and strengths of the five steering forces. The defaults
/// are the model's fixed constants; they are exposed for testing only.
struct BoidForceParams {
  double align_radius = 1.0;
  double cohesion_radius = 2.0;
  double separation_radius = 0.5;
  double speed_coeff = 1.0 / 16.0;  ///< F4 = -(c |v|^2 - 1) v, equilibrium speed 1/sqrt(c)
  double wall_strength = 4.0;
  double wall_range = 1.0;
  /// Floor on the wall distance in the 1/d repulsion so agents sitting exactly
  /// on the outer wall get a finite push.
  double wall_distance_floor = 1e-9;
};

/// Fills `accel` (same size as x) with accelerations for the given state.
using AccelerationFn =
    std::function<void(const std::vector<Vec3>& x, const std::vector<Vec3>& v, std::vector<Vec3>& accel)>;

/// Indices j with ||x_i - x_j|| <= eps, including i itself, ascending.
std::vector<std::size_t> neighborhood(const BoidState& state, std::size_t i, double eps);

/// Sum of alignment, cohesion, separation, speed regulation and wall
/// repulsion on agent i by direct O(N) summation.
///
/// Throws NumericalError if another agent coincides with i inside the
/// separation radius.
Vec3 total_force(const BoidState& state, const Workspace& w, std::size_t i,
                 const BoidForceParams& params = {});

/// Force evaluator for all agents using a uniform bucket grid for neighbor
/// queries. Agents are split across `threads` workers; results do not depend
/// on the thread count.
class BoidForces {
 public:
  BoidForces(const Workspace& w, BoidForceParams params = {}, unsigned threads = 1);

  void operator()(const std::vector<Vec3>& x, const std::vector<Vec3>& v, std::vector<Vec3>& accel) const;

  const BoidForceParams& params() const { return params_; }

 private:
  const Workspace* ws_;
  BoidForceParams params_;
  unsigned threads_;
};

/// v - 2 (n . v) n for a unit normal n.
Vec3 specular_reflect(const Vec3& v, const Vec3& n);

/// One kick-drift-kick velocity-Verlet step with specular reflections during
/// the drift. The closing half-kick uses forces at the predicted velocity
/// v_half + dt/2 a(x_new, v_half).
///
/// Throws NumericalError if an agent needs more than `max_reflections`
/// bounces in one step.
BoidState verlet_step(const BoidState& state, const Workspace& w, double dt, const AccelerationFn& accel,
                      int max_reflections = 8);

struct InitialSampling {
  std::size_t count = 2000;
  Vec3 position_mean{0.0, 0.0, 0.0};
  double position_stddev = 1.0;
  Vec3 velocity_mean{0.0, 0.0, 0.0};
  double velocity_stddev = 1.0;
  std::uint64_t seed = 1;
};

/// Isotropic Gaussian positions (redrawn until inside D) and independent
/// isotropic Gaussian velocities. Deterministic in the seed.
BoidState sample_initial(const Workspace& w, const InitialSampling& cfg);

/// Integrates `duration / dt` (rounded) steps, storing every
/// `sample_every`-th state including the initial one.
BoidTrajectory simulate(const BoidState& initial, const Workspace& w, double dt, double duration,
                        std::size_t sample_every, const AccelerationFn& accel, int max_reflections = 8);

}  // namespace flockid
