#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "flockid/grid.hpp"
#include "flockid/vec3.hpp"

namespace flockid {

/// Weights of a dense network 3 -> hidden... -> 4 with tanh hidden units.
/// Output 0 goes through softplus (raw density), outputs 1..3 through tanh
/// scaled by `momentum_bound` (momentum). Inputs are multiplied by
/// `input_scale` first.
///
/// Layout per layer: W (rows = outputs, row-major) followed by b.
struct NetWeights {
  std::vector<int> hidden{50, 50};
  double input_scale = 1.0;
  double momentum_bound = 1.0;
  std::vector<double> w;

  static std::size_t parameter_count(std::span<const int> hidden);
  std::size_t expected_size() const { return parameter_count(hidden); }
  /// Throws std::invalid_argument if the weight count does not match the
  /// architecture or a weight is non-finite.
  void validate() const;
};

struct NetOutput {
  double density = 0.0;
  Vec3 momentum;
};

/// Glorot-uniform weights, zero biases.
NetWeights init_weights(std::span<const int> hidden, double input_scale, double momentum_bound, std::uint64_t seed);

NetOutput net_forward(const NetWeights& wts, const Vec3& x);

double softplus(double z);

/// Network density at fluid cell centers, zero elsewhere, rescaled to unit
/// Riemann mass. Throws NumericalError if the raw density sums to zero.
DensityField normalized_density(const NetWeights& wts, const GridSpec& grid, const CellMask& mask);

/// Network momentum at fluid cell centers, zero elsewhere.
MomentumField net_momentum(const NetWeights& wts, const GridSpec& grid, const CellMask& mask);

/// H^2(normalized density, q0) + sum over fluid cells of |j(x_c) - j0_c|^2 * cell_volume.
double loss_L1(const NetWeights& wts, const DensityField& q0, const MomentumField& j0, const CellMask& mask);

/// Same value, plus its exact gradient with respect to wts.w by
/// reverse-mode differentiation.
double loss_L1_grad(const NetWeights& wts, const DensityField& q0, const MomentumField& j0, const CellMask& mask,
                    std::vector<double>& grad);

struct AdamConfig {
  std::size_t steps = 5000;
  double base_rate = 1e-2;
  /// Learning rate base_rate / (1 + iteration / decay_iterations).
  double decay_iterations = 100.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamResult {
  std::vector<double> best;
  double best_loss = 0.0;
  std::vector<double> curve;  ///< loss at each iterate, including the last
};

/// Full-batch ADAM on a differentiable objective. `loss_grad(x, g)` returns
/// the loss and fills g. Keeps the iterate with the lowest loss. Throws
/// NumericalError on a non-finite loss.
AdamResult adam_minimize(const std::function<double(std::span<const double>, std::vector<double>&)>& loss_grad,
                         std::vector<double> x0, const AdamConfig& cfg);

struct InitFitConfig {
  std::vector<int> hidden{50, 50};
  AdamConfig adam;
  std::uint64_t seed = 7;
};

struct InitFitResult {
  NetWeights weights;
  std::vector<double> curve;
};

/// Fits the network to the observed density q0 and momentum j0 on the
/// fluid cells of `mask`.
InitFitResult adam_train(const DensityField& q0, const MomentumField& j0, const CellMask& mask,
                         const InitFitConfig& cfg);

}  // namespace flockid
