#include "flockid/hydro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "flockid/errors.hpp"

namespace flockid {

PdeParams PdeParams::from_array(std::span<const double> a) {
  if (a.size() != kSize) throw std::invalid_argument("PdeParams: expected 10 values");
  PdeParams p;
  p.k_a = a[0], p.k_c = a[1], p.k_r = a[2], p.k_p = a[3], p.k_o = a[4];
  p.lambda_a = a[5], p.lambda_c = a[6], p.lambda_r = a[7], p.lambda_p = a[8], p.lambda_o = a[9];
  return p;
}

const std::array<const char*, PdeParams::kSize>& PdeParams::names() {
  static const std::array<const char*, kSize> n{"k_a",      "k_c",      "k_r",      "k_p",      "k_o",
                                                "lambda_a", "lambda_c", "lambda_r", "lambda_p", "lambda_o"};
  return n;
}

void PdeParams::validate() const {
  const auto a = to_array();
  for (std::size_t i = 0; i < kSize; ++i) {
    if (!std::isfinite(a[i])) throw std::invalid_argument(std::string("PdeParams: non-finite ") + names()[i]);
    if (is_scale(i) && !(a[i] > 0.0))
      throw std::invalid_argument(std::string("PdeParams: ") + names()[i] + " must be > 0");
  }
}

double minmod(double a, double b) {
  if (a > 0.0 && b > 0.0) return std::min(a, b);
  if (a < 0.0 && b < 0.0) return std::max(a, b);
  return 0.0;
}

double speed_response(double s, double lambda_p) {
  return 1.0 + std::tanh(s * s / (lambda_p * lambda_p) - 1.0);
}

LimitedFlux positivity_limit(const FaceFlux& low, const FaceFlux& high, double rho_left, double rho_right,
                             double dt_over_h, double eps, int faces_per_cell) {
  LimitedFlux out{high, 1.0};
  if (high.mass == low.mass) return out;
  const double share = 1.0 / faces_per_cell;
  const double target = eps * share;
  double theta = 1.0;
  // g(theta) = g0 + theta (g1 - g0) must stay >= target on both sides.
  auto restrict = [&](double g0, double g1) {
    if (g1 >= target) return;
    if (g0 >= target)
      theta = std::min(theta, (g0 - target) / (g0 - g1));
    else
      theta = 0.0;
  };
  restrict(rho_left * share - dt_over_h * low.mass, rho_left * share - dt_over_h * high.mass);
  restrict(rho_right * share + dt_over_h * low.mass, rho_right * share + dt_over_h * high.mass);
  theta = std::clamp(theta, 0.0, 1.0);
  out.theta = theta;
  out.flux.mass = low.mass + theta * (high.mass - low.mass);
  out.flux.momentum = low.momentum + theta * (high.momentum - low.momentum);
  return out;
}

std::vector<double> obstacle_potential(const Workspace& w, const GridSpec& grid, double k_o, double width) {
  if (!(width > 0.0)) throw std::invalid_argument("obstacle_potential: width must be > 0");
  std::vector<double> out(grid.size(), 0.0);
  if (k_o == 0.0) return out;
  const std::vector<double> indicator = indicator_grid(w, grid, width);

  auto bump = [width](double x, double y, double z) {
    const double s = (x * x + y * y + z * z) / (width * width);
    return s < 1.0 ? std::exp(1.0 / (s - 1.0)) : 0.0;
  };
  // Normalize on the grid stencil so a constant indicator maps to exactly k_o.
  const int n = grid.cells;
  const double h = grid.h();
  double total = 0.0;
  for (int k = -(n - 1); k <= n - 1; ++k)
    for (int j = -(n - 1); j <= n - 1; ++j)
      for (int i = -(n - 1); i <= n - 1; ++i) total += bump(i * h, j * h, k * h);
  total *= grid.cell_volume();

  Convolver conv(grid);
  const Spectrum kh = conv.kernel_spectrum([&](double x, double y, double z) { return bump(x, y, z) / total; });
  Spectrum fh;
  conv.forward(indicator, fh);
  conv.convolve(fh, kh, k_o * grid.cell_volume(), out);
  return out;
}

std::size_t cap_velocity(FieldState& s, double u_max) {
  if (!(u_max > 0.0)) throw std::invalid_argument("cap_velocity: u_max must be positive");
  std::size_t changed = 0;
  for (std::size_t c = 0; c < s.rho.size(); ++c) {
    const double peak = norm_inf(s.j[c]);
    if (peak == 0.0 || peak <= u_max * s.rho[c]) continue;
    s.j[c] = (u_max * s.rho[c] / peak) * s.j[c];
    ++changed;
  }
  return changed;
}

FieldState ssp_rk2(const FieldState& s, double dt, const FieldRhs& rhs,
                   const std::function<void(FieldState&)>& post_stage) {
  const std::size_t n = s.rho.size();
  std::vector<double> dr;
  std::vector<Vec3> dj;

  rhs(s, dr, dj);
  FieldState u1;
  u1.t = s.t + dt;
  u1.rho.resize(n);
  u1.j.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    u1.rho[c] = s.rho[c] + dt * dr[c];
    u1.j[c] = s.j[c] + dt * dj[c];
  }
  if (post_stage) post_stage(u1);

  rhs(u1, dr, dj);
  FieldState u2;
  u2.t = s.t + dt;
  u2.rho.resize(n);
  u2.j.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    u2.rho[c] = 0.5 * s.rho[c] + 0.5 * (u1.rho[c] + dt * dr[c]);
    u2.j[c] = 0.5 * s.j[c] + 0.5 * (u1.j[c] + dt * dj[c]);
  }
  if (post_stage) post_stage(u2);
  return u2;
}

HydroSolver::HydroSolver(const Workspace& w, const GridSpec& grid, const PdeParams& params, SolverConfig cfg)
    : ws_(&w), grid_(grid), params_(params), cfg_(cfg), mask_(cell_mask(w, grid)), conv_(grid) {
  params_.validate();
  if (!(cfg_.cfl > 0.0 && cfg_.cfl < 1.0)) throw std::invalid_argument("HydroSolver: cfl must lie in (0, 1)");
  if (!(cfg_.dt_max > 0.0)) throw std::invalid_argument("HydroSolver: dt_max must be > 0");
  potential_ = obstacle_potential(w, grid_, params_.k_o, params_.lambda_o);
  kernel_a_ = unit_kernel_spectrum(conv_, params_.lambda_a, cfg_.near);
  kernel_c_ = unit_kernel_spectrum(conv_, params_.lambda_c, cfg_.near);
  kernel_r_ = unit_kernel_spectrum(conv_, params_.lambda_r, cfg_.near);
}

Vec3 HydroSolver::velocity(double rho, const Vec3& j) const {
  return rho >= cfg_.rho_eps ? j / rho : Vec3{};
}

void HydroSolver::apply_mask(FieldState& s) const {
  for (std::size_t c = 0; c < mask_.size(); ++c) {
    if (mask_[c] != CellKind::fluid) {
      s.rho[c] = 0.0;
      s.j[c] = Vec3{};
    }
  }
}

double HydroSolver::mass(const FieldState& s) const {
  double m = 0.0;
  for (std::size_t c = 0; c < mask_.size(); ++c)
    if (mask_[c] == CellKind::fluid) m += s.rho[c];
  return m * grid_.cell_volume();
}

std::vector<Vec3> HydroSolver::source_term(const FieldState& s) {
  const std::size_t n = grid_.size();
  const double vol = grid_.cell_volume();
  std::vector<Vec3> out(n);

  const bool align = params_.k_a != 0.0;
  const bool interact = params_.k_c != 0.0 || params_.k_r != 0.0;
  Spectrum rho_hat, comp_hat;
  if (align || interact) conv_.forward(s.rho, rho_hat);

  if (align) {
    std::vector<double> pi_rho(n), comp(n), pi_comp(n);
    conv_.convolve(rho_hat, *kernel_a_, params_.k_a * vol, pi_rho);
    std::vector<Vec3> pi_j(n);
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t c = 0; c < n; ++c) comp[c] = s.j[c][a];
      conv_.forward(comp, comp_hat);
      conv_.convolve(comp_hat, *kernel_a_, params_.k_a * vol, pi_comp);
      for (std::size_t c = 0; c < n; ++c) pi_j[c][a] = pi_comp[c];
    }
    for (std::size_t c = 0; c < n; ++c) {
      if (mask_[c] != CellKind::fluid) continue;
      out[c] += s.rho[c] * pi_j[c] - pi_rho[c] * s.j[c];
    }
  }

  std::vector<double> phi = potential_;
  if (interact) {
    std::vector<double> v(n);
    const Spectrum* ks[] = {kernel_c_.get(), kernel_r_.get()};
    const double coeffs[] = {params_.k_c, params_.k_r};
    conv_.convolve_sum(rho_hat, ks, coeffs, vol, v);
    for (std::size_t c = 0; c < n; ++c) phi[c] += v[c];
  }

  // Central differences; one-sided where a neighbour is off-grid or non-fluid.
  const int nc = grid_.cells;
  const double h = grid_.h();
  auto is_fluid = [&](int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= nc || j >= nc || k >= nc) return false;
    return mask_[grid_.index(i, j, k)] == CellKind::fluid;
  };
  for (std::size_t c = 0; c < n; ++c) {
    if (mask_[c] != CellKind::fluid) continue;
    const auto ijk = grid_.ijk(c);
    Vec3 grad;
    for (std::size_t a = 0; a < 3; ++a) {
      auto m = ijk, p = ijk;
      --m[a];
      ++p[a];
      const bool fm = is_fluid(m[0], m[1], m[2]);
      const bool fp = is_fluid(p[0], p[1], p[2]);
      if (fm && fp)
        grad[a] = (phi[grid_.index(p[0], p[1], p[2])] - phi[grid_.index(m[0], m[1], m[2])]) / (2.0 * h);
      else if (fp)
        grad[a] = (phi[grid_.index(p[0], p[1], p[2])] - phi[c]) / h;
      else if (fm)
        grad[a] = (phi[c] - phi[grid_.index(m[0], m[1], m[2])]) / h;
    }
    out[c] -= s.rho[c] * grad;

    if (params_.k_p != 0.0 && s.rho[c] >= cfg_.rho_eps) {
      const double speed = norm(s.j[c]) / s.rho[c];
      out[c] += (params_.k_p * (1.0 - speed_response(speed, params_.lambda_p))) * s.j[c];
    }
  }
  return out;
}

namespace {

struct Prim {
  double rho = 0.0;
  Vec3 u;
};

Prim mirror(Prim p, std::size_t axis) {
  p.u[axis] = -p.u[axis];
  return p;
}

FaceFlux physical_flux(const Prim& p, std::size_t axis) {
  const double m = p.rho * p.u[axis];
  return {m, m * p.u};
}

/// Central flux 1/2 (f(L) + f(R)) - a/2 (U_R - U_L) with a = max |u_axis|.
FaceFlux central_flux(const Prim& L, const Prim& R, std::size_t axis) {
  const double a = std::max(std::abs(L.u[axis]), std::abs(R.u[axis]));
  const FaceFlux fl = physical_flux(L, axis), fr = physical_flux(R, axis);
  FaceFlux f;
  f.mass = 0.5 * (fl.mass + fr.mass) - 0.5 * a * (R.rho - L.rho);
  f.momentum = 0.5 * (fl.momentum + fr.momentum) - (0.5 * a) * (R.rho * R.u - L.rho * L.u);
  return f;
}

}  // namespace

void HydroSolver::flux_divergence(const FieldState& s, double dt, std::vector<double>& div_rho,
                                  std::vector<Vec3>& div_j) const {
  const std::size_t n = grid_.size();
  const int nc = grid_.cells;
  const double h = grid_.h();
  div_rho.assign(n, 0.0);
  div_j.assign(n, Vec3{});

  std::vector<Prim> prim(n);
  for (std::size_t c = 0; c < n; ++c)
    if (mask_[c] == CellKind::fluid) prim[c] = {s.rho[c], velocity(s.rho[c], s.j[c])};

  // Reconstructed states at the low (-) and high (+) faces of each cell.
  std::vector<Prim> lo_face(n), hi_face(n);
  const double lambda = dt > 0.0 ? dt / h : 0.0;

  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto neighbour = [&](std::size_t c, int step, std::size_t& out) {
      auto ijk = grid_.ijk(c);
      ijk[axis] += step;
      if (ijk[axis] < 0 || ijk[axis] >= nc) return false;
      out = grid_.index(ijk[0], ijk[1], ijk[2]);
      return mask_[out] == CellKind::fluid;
    };

    for (std::size_t c = 0; c < n; ++c) {
      if (mask_[c] != CellKind::fluid) continue;
      std::size_t im = 0, ip = 0;
      const Prim pm = neighbour(c, -1, im) ? prim[im] : mirror(prim[c], axis);
      const Prim pp = neighbour(c, +1, ip) ? prim[ip] : mirror(prim[c], axis);
      const Prim& pc = prim[c];
      const double sr = 0.5 * minmod(pc.rho - pm.rho, pp.rho - pc.rho);
      Vec3 su;
      for (std::size_t q = 0; q < 3; ++q) su[q] = 0.5 * minmod(pc.u[q] - pm.u[q], pp.u[q] - pc.u[q]);
      lo_face[c] = {pc.rho - sr, pc.u - su};
      hi_face[c] = {pc.rho + sr, pc.u + su};
    }

    // Faces are indexed by their high-side cell coordinate 0..nc along the axis.
    for (int k = 0; k < (axis == 2 ? nc + 1 : nc); ++k) {
      for (int j = 0; j < (axis == 1 ? nc + 1 : nc); ++j) {
        for (int i = 0; i < (axis == 0 ? nc + 1 : nc); ++i) {
          std::array<int, 3> hi{i, j, k};
          std::array<int, 3> lo = hi;
          --lo[axis];
          const bool lo_in = lo[axis] >= 0;
          const bool hi_in = hi[axis] < nc;
          const std::size_t cl = lo_in ? grid_.index(lo[0], lo[1], lo[2]) : 0;
          const std::size_t cr = hi_in ? grid_.index(hi[0], hi[1], hi[2]) : 0;
          const bool fl = lo_in && mask_[cl] == CellKind::fluid;
          const bool fr = hi_in && mask_[cr] == CellKind::fluid;
          if (!fl && !fr) continue;

          FaceFlux flux;
          if (fl && fr) {
            const FaceFlux high = central_flux(hi_face[cl], lo_face[cr], axis);
            if (lambda > 0.0) {
              const FaceFlux low = central_flux(prim[cl], prim[cr], axis);
              flux = positivity_limit(low, high, s.rho[cl], s.rho[cr], lambda, cfg_.pos_eps).flux;
            } else {
              flux = high;
            }
          } else if (fl) {
            flux = central_flux(hi_face[cl], mirror(hi_face[cl], axis), axis);
            flux.mass = 0.0;
          } else {
            flux = central_flux(mirror(lo_face[cr], axis), lo_face[cr], axis);
            flux.mass = 0.0;
          }

          const double inv_h = 1.0 / h;
          if (fl) {
            div_rho[cl] += flux.mass * inv_h;
            div_j[cl] += inv_h * flux.momentum;
          }
          if (fr) {
            div_rho[cr] -= flux.mass * inv_h;
            div_j[cr] -= inv_h * flux.momentum;
          }
        }
      }
    }
  }
}

double HydroSolver::cfl_dt(const FieldState& s) const {
  double max_speed = 0.0;
  for (std::size_t c = 0; c < mask_.size(); ++c) {
    if (mask_[c] != CellKind::fluid) continue;
    max_speed = std::max(max_speed, norm_inf(velocity(s.rho[c], s.j[c])));
  }
  if (max_speed * cfg_.dt_max <= cfg_.cfl * grid_.h()) return cfg_.dt_max;
  return cfg_.cfl * grid_.h() / max_speed;
}

FieldState HydroSolver::ssp_rk2_step(const FieldState& s, double dt) {
  std::vector<double> div_rho;
  std::vector<Vec3> div_j;
  auto rhs = [&](const FieldState& u, std::vector<double>& dr, std::vector<Vec3>& dj) {
    flux_divergence(u, dt, div_rho, div_j);
    const std::vector<Vec3> src = source_term(u);
    dr.resize(div_rho.size());
    dj.resize(div_j.size());
    for (std::size_t c = 0; c < dr.size(); ++c) {
      dr[c] = -div_rho[c];
      dj[c] = src[c] - div_j[c];
    }
  };
  FieldState next = ssp_rk2(s, dt, rhs, [this](FieldState& u) { apply_mask(u); });
  for (std::size_t c = 0; c < next.rho.size(); ++c) {
    if (!std::isfinite(next.rho[c]) || !std::isfinite(next.j[c][0]) || !std::isfinite(next.j[c][1]) ||
        !std::isfinite(next.j[c][2]))
      throw NumericalError("hydro: non-finite state at t = " + std::to_string(next.t));
  }
  return next;
}

FieldTrajectory HydroSolver::solve(const FieldState& initial, double t_final, std::span<const double> output_times,
                                   SolveStats* stats) {
  if (initial.rho.size() != grid_.size() || initial.j.size() != grid_.size())
    throw std::invalid_argument("solve_forward: initial field size mismatch");
  if (t_final < initial.t) throw std::invalid_argument("solve_forward: t_final precedes the initial time");
  for (std::size_t q = 0; q < output_times.size(); ++q) {
    if (output_times[q] < initial.t || output_times[q] > t_final || (q > 0 && output_times[q] < output_times[q - 1]))
      throw std::invalid_argument("solve_forward: output times must be sorted and inside [t0, t_final]");
  }

  FieldState s = initial;
  apply_mask(s);
  SolveStats st;
  st.initial_mass = mass(s);
  st.min_rho = std::numeric_limits<double>::infinity();
  st.min_dt = std::numeric_limits<double>::infinity();
  auto observe = [&](const FieldState& u) {
    const double m = mass(u);
    if (st.initial_mass > 0.0) st.max_mass_drift = std::max(st.max_mass_drift, std::abs(m - st.initial_mass) / st.initial_mass);
    for (std::size_t c = 0; c < mask_.size(); ++c)
      if (mask_[c] == CellKind::fluid) st.min_rho = std::min(st.min_rho, u.rho[c]);
  };
  observe(s);

  FieldTrajectory out;
  std::size_t next_out = 0;
  auto record_landed = [&]() {
    while (next_out < output_times.size() && output_times[next_out] <= s.t) {
      FieldState snap = s;
      snap.t = output_times[next_out++];
      out.snapshots.push_back(std::move(snap));
    }
  };
  record_landed();

  const double t_tol = 1e-12 * std::max(1.0, std::abs(t_final));
  while (s.t < t_final - t_tol) {
    if (st.steps >= cfg_.max_steps)
      throw NumericalError("hydro: exceeded " + std::to_string(cfg_.max_steps) + " steps before t = " +
                           std::to_string(t_final));
    double dt = cfl_dt(s);
    double target = t_final;
    if (cfg_.matching == TimeMatching::land && next_out < output_times.size()) target = output_times[next_out];
    bool lands = false;
    if (s.t + dt >= target - t_tol) {
      dt = target - s.t;
      lands = true;
    }
    FieldState next = ssp_rk2_step(s, dt);
    if (lands) next.t = target;
    ++st.steps;
    st.min_dt = std::min(st.min_dt, dt);
    observe(next);

    if (cfg_.matching == TimeMatching::land) {
      s = std::move(next);
      record_landed();
    } else {
      while (next_out < output_times.size() && output_times[next_out] <= next.t) {
        const double w = (output_times[next_out] - s.t) / (next.t - s.t);
        FieldState snap;
        snap.t = output_times[next_out++];
        snap.rho.resize(next.rho.size());
        snap.j.resize(next.j.size());
        for (std::size_t c = 0; c < snap.rho.size(); ++c) {
          snap.rho[c] = (1.0 - w) * s.rho[c] + w * next.rho[c];
          snap.j[c] = (1.0 - w) * s.j[c] + w * next.j[c];
        }
        out.snapshots.push_back(std::move(snap));
      }
      s = std::move(next);
    }
  }
  // Output times equal to t_final within tolerance.
  while (next_out < output_times.size()) {
    FieldState snap = s;
    snap.t = output_times[next_out++];
    out.snapshots.push_back(std::move(snap));
  }
  if (!std::isfinite(st.min_dt)) st.min_dt = 0.0;
  if (stats) *stats = st;
  return out;
}

FieldTrajectory solve_forward(const FieldState& initial, const PdeParams& params, const Workspace& w,
                              const GridSpec& grid, double t_final, std::span<const double> output_times,
                              const SolverConfig& cfg, SolveStats* stats) {
  HydroSolver solver(w, grid, params, cfg);
  return solver.solve(initial, t_final, output_times, stats);
}

}  // namespace flockid
