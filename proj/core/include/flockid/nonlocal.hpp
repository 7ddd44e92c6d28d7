#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "flockid/grid.hpp"

namespace flockid {

/// Strength and screening of a kernel k * exp(-lambda r) / r.
struct KernelParams {
  double k = 1.0;
  double lambda = 1.0;
};

/// Radius below which the singular kernel is replaced by its ball average.
enum class NearRadius {
  quarter_cell,  ///< R1 / (2 n), i.e. a quarter of the cell width (default)
  half_cell,     ///< R1 / n, the cell half-width
};

double near_radius(const GridSpec& grid, NearRadius mode);

/// Regularized screened-Coulomb kernel. For r >= r_near returns
/// k exp(-lambda r) / r; below it returns the constant
/// 3k (1 - exp(-lambda r_near)(lambda r_near + 1)) / (lambda r_near)^2.
/// Throws std::invalid_argument for lambda == 0 or r < 0.
double kernel_eval(double r, const KernelParams& p, double r_near);

using Spectrum = std::vector<std::complex<double>>;

/// Free-space (zero-padded) discrete convolution on an n^3 cell grid via
/// real-to-complex FFTs of size (2n)^3.
///
/// An instance owns its FFT plans and scratch buffers, so it must not be
/// shared between threads; create one per worker.
class Convolver {
 public:
  explicit Convolver(const GridSpec& grid);
  ~Convolver();
  Convolver(const Convolver&) = delete;
  Convolver& operator=(const Convolver&) = delete;

  const GridSpec& grid() const { return grid_; }
  std::size_t spectrum_size() const;

  /// Transform of a kernel sampled at every cell offset (di, dj, dk) * h with
  /// |di|, |dj|, |dk| < n.
  Spectrum kernel_spectrum(const std::function<double(double dx, double dy, double dz)>& kernel);

  /// Transform of an n^3 field (zero-padded).
  void forward(std::span<const double> field, Spectrum& out);

  /// out[x] = scale * sum_s kernel(x - s) f(s), given the two transforms.
  void convolve(const Spectrum& field_hat, const Spectrum& kernel_hat, double scale, std::span<double> out);

  /// Same, with the kernel transform being a linear combination
  /// sum_i coeff[i] * kernels[i] (used to fuse kernels acting on one field).
  void convolve_sum(const Spectrum& field_hat, std::span<const Spectrum* const> kernels,
                    std::span<const double> coeffs, double scale, std::span<double> out);

 private:
  struct Plans;
  GridSpec grid_;
  int padded_ = 0;
  std::unique_ptr<Plans> plans_;
};

/// Spectrum of the unit-strength (k = 1) kernel for this grid and lambda,
/// shared across callers through a small thread-safe cache.
std::shared_ptr<const Spectrum> unit_kernel_spectrum(Convolver& conv, double lambda, NearRadius mode);

/// Riemann convolution sum  sum_s G~(x - s; k, lambda) f(s) * cell_volume
/// evaluated at every cell center.
std::vector<double> bessel_apply(std::span<const double> field, const KernelParams& p, const GridSpec& grid,
                                 NearRadius mode = NearRadius::quarter_cell);

/// Element-wise version for 3-vector fields.
std::vector<Vec3> bessel_apply(std::span<const Vec3> field, const KernelParams& p, const GridSpec& grid,
                               NearRadius mode = NearRadius::quarter_cell);

}  // namespace flockid
