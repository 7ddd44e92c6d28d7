#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "flockid/grid.hpp"
#include "flockid/hydro.hpp"
#include "flockid/workspace.hpp"

namespace flockid {

/// One observed position density.
struct Observation {
  double t = 0.0;
  DensityField q;
};

/// Aggregates diagnostics over every forward solve run by loss_L2. Safe to
/// share between threads.
class SolveMonitor {
 public:
  void record(const SolveStats& s);
  void record_failure();
  std::size_t solves() const;
  std::size_t failures() const;
  double max_mass_drift() const;
  double min_rho() const;

 private:
  mutable std::mutex mu_;
  std::size_t solves_ = 0, failures_ = 0;
  double max_drift_ = 0.0;
  double min_rho_ = std::numeric_limits<double>::infinity();
};

struct IdentProblem {
  Workspace workspace = Workspace::standard();
  GridSpec grid;
  FieldState initial;  ///< rho0, j0 at time t0
  std::vector<Observation> observations;
  double t0 = 0.0;
  double tf = 0.0;
  SolverConfig solver{.matching = TimeMatching::interpolate};
  double failure_loss = 10.0;  ///< returned when the forward solve blows up
  SolveMonitor* monitor = nullptr;

  /// Throws std::invalid_argument when observation times are not strictly
  /// increasing inside [t0, tf] or fields do not match the grid.
  void validate() const;
};

struct LossEval {
  double value = 0.0;
  bool failed = false;
  std::string failure;
  std::vector<double> h2;  ///< per-observation squared Hellinger distance
  SolveStats stats;
};

/// Time-averaged squared Hellinger distance between the forward solution at
/// `params` and the observations (left-endpoint rule over observation times).
LossEval loss_L2(const PdeParams& params, const IdentProblem& problem);

/// Objective value with a failure flag (failed values are large sentinels).
struct ObjectiveValue {
  double value = 0.0;
  bool failed = false;
};
using Objective = std::function<ObjectiveValue(std::span<const double>)>;
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

struct FdGradient {
  std::vector<double> g;
  std::vector<bool> unreliable;
  std::size_t evaluations = 0;
};

/// Central differences with step h_i = h_rel * max(|x_i|, 1). Coordinates
/// flagged in `positive` keep x_i - h_i > 0 by shrinking the step. A failed
/// evaluation halves the step and retries once; a second failure zeroes the
/// component and flags it. Evaluations run on `threads` workers; the result
/// does not depend on the thread count.
FdGradient fd_gradient(const Objective& f, std::span<const double> x, double h_rel,
                       const std::vector<bool>& positive = {}, unsigned threads = 1);

/// Gradient of loss_L2 with positivity-preserving steps for the ranges.
FdGradient fd_gradient(const PdeParams& params, const IdentProblem& problem, double h_rel, unsigned threads = 1);

struct NewtonConfig {
  std::size_t max_newton = 15;
  std::size_t max_cg = 10;
  double cg_tol = 0.1;        ///< stop CG when |r| <= cg_tol |g|
  double h_rel = 1e-4;        ///< finite-difference gradient step
  double hv_rel = 1e-3;       ///< Hessian-vector difference step (relative)
  double armijo = 1e-4;
  double backtrack = 0.5;
  std::size_t max_backtracks = 20;
  double grad_tol = 1e-8;
  double positive_floor = 1e-3;  ///< lower clamp for positive coordinates
  /// Length of the steepest-descent step taken when the first CG direction
  /// has nonpositive curvature, relative to max(1, |x|).
  double curvature_step = 0.1;
};

struct NewtonIteration {
  double loss = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;  ///< accepted line-search multiple of the search direction
  std::size_t cg_iterations = 0;
  std::size_t evaluations = 0;  ///< line-search objective evaluations
};

struct NewtonResult {
  std::vector<double> x;
  std::vector<double> loss_trace;  ///< loss at x_0, x_1, ...
  std::vector<double> grad_norms;  ///< gradient norm at x_0, x_1, ...
  std::vector<NewtonIteration> iterations;
  std::size_t total_cg = 0;
  std::size_t evaluations = 0;
  std::string termination;
};

/// Truncated Newton: CG on H p = -g with finite-difference Hessian-vector
/// products (g(x + d v) - g(x)) / d, then Armijo backtracking. When the first
/// CG direction has nonpositive curvature the step is steepest descent of
/// length curvature_step * max(1, |x|), extended by 1 / backtrack while the
/// loss keeps decreasing.
using NewtonProgress = std::function<void(std::size_t iteration, const NewtonIteration&)>;

NewtonResult newton_cg(const Objective& f, const GradientFn& grad, std::vector<double> x0, const NewtonConfig& cfg,
                       const std::vector<bool>& positive = {}, const NewtonProgress& progress = {});

/// Newton-CG on the identification loss with finite-difference gradients.
NewtonResult identify(const IdentProblem& problem, const PdeParams& initial_guess, const NewtonConfig& cfg,
                      unsigned threads = 1, const NewtonProgress& progress = {});

/// Mask of the coordinates of PdeParams that must stay positive.
std::vector<bool> pde_positive_mask();

}  // namespace flockid
