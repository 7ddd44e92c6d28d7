#include "flockid/nonlocal.hpp"

#include <fftw3.h>

#include <cmath>
#include <deque>
#include <mutex>
#include <stdexcept>
#include <tuple>

namespace flockid {

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

double near_radius(const GridSpec& grid, NearRadius mode) {
  return mode == NearRadius::quarter_cell ? grid.half_width / (2.0 * grid.cells) : grid.half_width / grid.cells;
}

double kernel_eval(double r, const KernelParams& p, double r_near) {
  if (p.lambda == 0.0) throw std::invalid_argument("kernel_eval: lambda must be nonzero");
  if (r < 0.0) throw std::invalid_argument("kernel_eval: negative radius");
  if (r >= r_near) return p.k * std::exp(-p.lambda * r) / r;
  const double a = p.lambda * r_near;
  // 1 - e^{-a}(a + 1) loses digits for small a; expm1 keeps them.
  const double num = -std::expm1(-a) - a * std::exp(-a);
  return 3.0 * p.k * num / (a * a);
}

struct Convolver::Plans {
  double* real = nullptr;
  fftw_complex* cplx = nullptr;
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
};

Convolver::Convolver(const GridSpec& grid) : grid_(grid), padded_(2 * grid.cells), plans_(std::make_unique<Plans>()) {
  grid_.validate();
  const std::size_t nreal = static_cast<std::size_t>(padded_) * padded_ * padded_;
  std::lock_guard lock(planner_mutex());
  plans_->real = fftw_alloc_real(nreal);
  plans_->cplx = fftw_alloc_complex(spectrum_size());
  plans_->r2c = fftw_plan_dft_r2c_3d(padded_, padded_, padded_, plans_->real, plans_->cplx, FFTW_ESTIMATE);
  plans_->c2r = fftw_plan_dft_c2r_3d(padded_, padded_, padded_, plans_->cplx, plans_->real, FFTW_ESTIMATE);
  if (!plans_->r2c || !plans_->c2r) throw std::runtime_error("Convolver: FFTW planning failed");
}

Convolver::~Convolver() {
  if (!plans_) return;
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plans_->r2c);
  fftw_destroy_plan(plans_->c2r);
  fftw_free(plans_->real);
  fftw_free(plans_->cplx);
}

std::size_t Convolver::spectrum_size() const {
  return static_cast<std::size_t>(padded_) * padded_ * (padded_ / 2 + 1);
}

// FFTW arrays are row-major with the last index fastest; we map (k, j, i) so
// that x stays the fastest-varying axis, matching GridSpec::index.
Spectrum Convolver::kernel_spectrum(const std::function<double(double, double, double)>& kernel) {
  const int n = grid_.cells, P = padded_;
  const double h = grid_.h();
  double* buf = plans_->real;
  std::fill(buf, buf + static_cast<std::size_t>(P) * P * P, 0.0);
  for (int dk = -(n - 1); dk <= n - 1; ++dk) {
    const std::size_t kk = static_cast<std::size_t>((dk + P) % P);
    for (int dj = -(n - 1); dj <= n - 1; ++dj) {
      const std::size_t jj = static_cast<std::size_t>((dj + P) % P);
      for (int di = -(n - 1); di <= n - 1; ++di) {
        const std::size_t ii = static_cast<std::size_t>((di + P) % P);
        buf[(kk * P + jj) * P + ii] = kernel(di * h, dj * h, dk * h);
      }
    }
  }
  fftw_execute(plans_->r2c);
  Spectrum out(spectrum_size());
  const auto* src = reinterpret_cast<const std::complex<double>*>(plans_->cplx);
  std::copy(src, src + out.size(), out.begin());
  return out;
}

void Convolver::forward(std::span<const double> field, Spectrum& out) {
  const int n = grid_.cells, P = padded_;
  if (field.size() != grid_.size()) throw std::invalid_argument("Convolver::forward: field size mismatch");
  double* buf = plans_->real;
  std::fill(buf, buf + static_cast<std::size_t>(P) * P * P, 0.0);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        buf[(static_cast<std::size_t>(k) * P + j) * P + i] = field[grid_.index(i, j, k)];
  fftw_execute(plans_->r2c);
  out.resize(spectrum_size());
  const auto* src = reinterpret_cast<const std::complex<double>*>(plans_->cplx);
  std::copy(src, src + out.size(), out.begin());
}

void Convolver::convolve(const Spectrum& field_hat, const Spectrum& kernel_hat, double scale, std::span<double> out) {
  const Spectrum* k[] = {&kernel_hat};
  const double c[] = {1.0};
  convolve_sum(field_hat, k, c, scale, out);
}

void Convolver::convolve_sum(const Spectrum& field_hat, std::span<const Spectrum* const> kernels,
                             std::span<const double> coeffs, double scale, std::span<double> out) {
  const int n = grid_.cells, P = padded_;
  if (out.size() != grid_.size()) throw std::invalid_argument("Convolver::convolve: output size mismatch");
  if (kernels.size() != coeffs.size()) throw std::invalid_argument("Convolver::convolve: coefficient count");
  auto* dst = reinterpret_cast<std::complex<double>*>(plans_->cplx);
  const std::size_t m = spectrum_size();
  for (std::size_t s = 0; s < m; ++s) {
    std::complex<double> kh{0.0, 0.0};
    for (std::size_t q = 0; q < kernels.size(); ++q) kh += coeffs[q] * (*kernels[q])[s];
    dst[s] = field_hat[s] * kh;
  }
  fftw_execute(plans_->c2r);
  const double norm = scale / (static_cast<double>(P) * P * P);
  const double* buf = plans_->real;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        out[grid_.index(i, j, k)] = norm * buf[(static_cast<std::size_t>(k) * P + j) * P + i];
}

namespace {

struct CacheKey {
  int cells;
  double half_width;
  double lambda;
  NearRadius mode;
  bool operator==(const CacheKey&) const = default;
};

class KernelCache {
 public:
  std::shared_ptr<const Spectrum> find(const CacheKey& key) {
    std::lock_guard lock(mu_);
    for (const auto& [k, v] : entries_)
      if (k == key) return v;
    return nullptr;
  }
  void insert(const CacheKey& key, std::shared_ptr<const Spectrum> value) {
    std::lock_guard lock(mu_);
    for (const auto& [k, v] : entries_)
      if (k == key) return;
    entries_.emplace_back(key, std::move(value));
    if (entries_.size() > kCapacity) entries_.pop_front();
  }

 private:
  static constexpr std::size_t kCapacity = 64;
  std::mutex mu_;
  std::deque<std::pair<CacheKey, std::shared_ptr<const Spectrum>>> entries_;
};

KernelCache& kernel_cache() {
  static KernelCache cache;
  return cache;
}

}  // namespace

std::shared_ptr<const Spectrum> unit_kernel_spectrum(Convolver& conv, double lambda, NearRadius mode) {
  const GridSpec& g = conv.grid();
  const CacheKey key{g.cells, g.half_width, lambda, mode};
  if (auto hit = kernel_cache().find(key)) return hit;
  const double r_near = near_radius(g, mode);
  const KernelParams unit{1.0, lambda};
  auto spec = std::make_shared<const Spectrum>(conv.kernel_spectrum([&](double x, double y, double z) {
    return kernel_eval(std::sqrt(x * x + y * y + z * z), unit, r_near);
  }));
  kernel_cache().insert(key, spec);
  return spec;
}

std::vector<double> bessel_apply(std::span<const double> field, const KernelParams& p, const GridSpec& grid,
                                 NearRadius mode) {
  if (p.lambda == 0.0) throw std::invalid_argument("bessel_apply: lambda must be nonzero");
  Convolver conv(grid);
  const auto kernel = unit_kernel_spectrum(conv, p.lambda, mode);
  Spectrum fh;
  conv.forward(field, fh);
  std::vector<double> out(grid.size());
  conv.convolve(fh, *kernel, p.k * grid.cell_volume(), out);
  return out;
}

std::vector<Vec3> bessel_apply(std::span<const Vec3> field, const KernelParams& p, const GridSpec& grid,
                               NearRadius mode) {
  if (p.lambda == 0.0) throw std::invalid_argument("bessel_apply: lambda must be nonzero");
  if (field.size() != grid.size()) throw std::invalid_argument("bessel_apply: field size mismatch");
  Convolver conv(grid);
  const auto kernel = unit_kernel_spectrum(conv, p.lambda, mode);
  std::vector<Vec3> out(grid.size());
  std::vector<double> comp(grid.size()), res(grid.size());
  Spectrum fh;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t c = 0; c < comp.size(); ++c) comp[c] = field[c][a];
    conv.forward(comp, fh);
    conv.convolve(fh, *kernel, p.k * grid.cell_volume(), res);
    for (std::size_t c = 0; c < comp.size(); ++c) out[c][a] = res[c];
  }
  return out;
}

}  // namespace flockid
