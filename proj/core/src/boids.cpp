#include "flockid/boids.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <exception>
#include <thread>

#include "flockid/errors.hpp"

namespace flockid {

namespace {

struct ForceSums {
  Vec3 align, cohesion, separation;
  std::size_t n_align = 0, n_cohesion = 0, n_separation = 0;
};

struct PairRadii {
  double align_sq, cohesion_sq, separation_sq;
  explicit PairRadii(const BoidForceParams& p)
      : align_sq(p.align_radius * p.align_radius),
        cohesion_sq(p.cohesion_radius * p.cohesion_radius),
        separation_sq(p.separation_radius * p.separation_radius) {}
};

inline void accumulate_pair(ForceSums& s, const PairRadii& r, std::size_t i, std::size_t j, const Vec3& xi,
                            const Vec3& vi, const Vec3& xj, const Vec3& vj) {
  const Vec3 dx = xj - xi;
  const double r2 = norm_sq(dx);
  if (r2 <= r.cohesion_sq) {
    s.cohesion += dx;
    ++s.n_cohesion;
  }
  if (r2 <= r.align_sq) {
    s.align += vj - vi;
    ++s.n_align;
  }
  if (r2 <= r.separation_sq) {
    ++s.n_separation;
    if (i != j) {
      if (r2 == 0.0)
        throw NumericalError("boids: agents " + std::to_string(i) + " and " + std::to_string(j) +
                             " coincide inside the separation radius");
      s.separation += (-1.0 / r2) * dx;
    }
  }
}

Vec3 combine(const ForceSums& s, const BoidForceParams& p, const Workspace& w, const Vec3& x, const Vec3& v) {
  Vec3 f;
  // Each neighborhood contains the agent itself, so the counts are >= 1.
  if (s.n_align) f += s.align / static_cast<double>(s.n_align);
  if (s.n_cohesion) f += s.cohesion / static_cast<double>(s.n_cohesion);
  if (s.n_separation) f += s.separation / static_cast<double>(s.n_separation);
  f += -(p.speed_coeff * norm_sq(v) - 1.0) * v;

  for (std::size_t m = 0; m < w.region_count(); ++m) {
    const double d = w.boundary_distance(x, m);
    if (!(d < p.wall_range)) continue;
    const Vec3 r = x - w.region(m).center;
    const double rn = norm(r);
    if (rn == 0.0) continue;
    // Outer wall: push back toward the center. Obstacles: push away from them.
    const double sign = (m == 0) ? -1.0 : 1.0;
    f += (sign * p.wall_strength / std::max(d, p.wall_distance_floor) / rn) * r;
  }
  return f;
}

/// Uniform buckets of edge >= radius / 2 over [-R, R]^3 with agents stored
/// contiguously in bucket order.
class BucketGrid {
 public:
  static constexpr int kReach = 2;

  BucketGrid(double half_width, double radius, const std::vector<Vec3>& x, const std::vector<Vec3>& v)
      : half_(half_width) {
    nb_ = std::max(1, static_cast<int>(std::floor(2.0 * kReach * half_width / radius)));
    width_ = 2.0 * half_width / nb_;
    const std::size_t nbuckets = static_cast<std::size_t>(nb_) * nb_ * nb_;
    start_.assign(nbuckets + 1, 0);
    std::vector<std::size_t> bucket_of(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      bucket_of[i] = bucket_index(coords(x[i]));
      ++start_[bucket_of[i] + 1];
    }
    for (std::size_t b = 0; b < nbuckets; ++b) start_[b + 1] += start_[b];
    items_.resize(x.size());
    xs_.resize(x.size());
    vs_.resize(x.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t slot = fill[bucket_of[i]]++;
      items_[slot] = i;
      xs_[slot] = x[i];
      vs_[slot] = v[i];
    }
  }

  std::array<int, 3> coords(const Vec3& p) const {
    std::array<int, 3> c{};
    for (std::size_t a = 0; a < 3; ++a) c[a] = GridSpec::bin(p[a], -half_, width_, nb_);
    return c;
  }
  std::size_t bucket_index(const std::array<int, 3>& c) const {
    return (static_cast<std::size_t>(c[2]) * nb_ + c[1]) * nb_ + c[0];
  }

  /// Calls fn(index, x, v) for every agent in buckets within kReach of p's.
  template <class Fn>
  void for_each_candidate(const Vec3& p, Fn&& fn) const {
    const auto c = coords(p);
    const int x0 = std::max(0, c[0] - kReach), x1 = std::min(nb_ - 1, c[0] + kReach);
    for (int z = std::max(0, c[2] - kReach); z <= std::min(nb_ - 1, c[2] + kReach); ++z) {
      for (int y = std::max(0, c[1] - kReach); y <= std::min(nb_ - 1, c[1] + kReach); ++y) {
        // Buckets along x are adjacent in storage.
        const std::size_t lo = start_[bucket_index({x0, y, z})];
        const std::size_t hi = start_[bucket_index({x1, y, z}) + 1];
        for (std::size_t s = lo; s < hi; ++s) fn(items_[s], xs_[s], vs_[s]);
      }
    }
  }

 private:
  double half_;
  int nb_ = 1;
  double width_ = 1.0;
  std::vector<std::size_t> start_, items_;
  std::vector<Vec3> xs_, vs_;
};

}  // namespace

std::vector<std::size_t> neighborhood(const BoidState& state, std::size_t i, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("neighborhood: eps must be > 0");
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < state.size(); ++j)
    if (norm(state.x[j] - state.x[i]) <= eps) out.push_back(j);
  return out;
}

Vec3 total_force(const BoidState& state, const Workspace& w, std::size_t i, const BoidForceParams& params) {
  ForceSums s;
  const PairRadii radii(params);
  for (std::size_t j = 0; j < state.size(); ++j)
    accumulate_pair(s, radii, i, j, state.x[i], state.v[i], state.x[j], state.v[j]);
  return combine(s, params, w, state.x[i], state.v[i]);
}

BoidForces::BoidForces(const Workspace& w, BoidForceParams params, unsigned threads)
    : ws_(&w), params_(params), threads_(std::max(1u, threads)) {}

void BoidForces::operator()(const std::vector<Vec3>& x, const std::vector<Vec3>& v,
                            std::vector<Vec3>& accel) const {
  const std::size_t n = x.size();
  accel.assign(n, Vec3{});
  if (n == 0) return;
  const double radius =
      std::max({params_.align_radius, params_.cohesion_radius, params_.separation_radius});
  const BucketGrid buckets(ws_->outer_half_width(), radius, x, v);

  const PairRadii radii(params_);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      ForceSums s;
      buckets.for_each_candidate(x[i], [&](std::size_t j, const Vec3& xj, const Vec3& vj) {
        accumulate_pair(s, radii, i, j, x[i], v[i], xj, vj);
      });
      accel[i] = combine(s, params_, *ws_, x[i], v[i]);
    }
  };

  const std::size_t nthreads = std::min<std::size_t>(threads_, n);
  if (nthreads <= 1) {
    work(0, n);
    return;
  }
  std::vector<std::exception_ptr> errors(nthreads);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + nthreads - 1) / nthreads;
    for (std::size_t t = 0; t < nthreads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t * chunk, std::min(n, (t + 1) * chunk));
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Vec3 specular_reflect(const Vec3& v, const Vec3& n) { return v - (2.0 * dot(n, v)) * n; }

BoidState verlet_step(const BoidState& state, const Workspace& w, double dt, const AccelerationFn& accel,
                      int max_reflections) {
  if (!(dt > 0.0)) throw std::invalid_argument("verlet_step: dt must be > 0");
  const std::size_t n = state.size();
  std::vector<Vec3> a;
  accel(state.x, state.v, a);

  BoidState next;
  next.t = state.t + dt;
  next.x.resize(n);
  std::vector<Vec3> v_half(n);
  for (std::size_t i = 0; i < n; ++i) {
    v_half[i] = state.v[i] + (0.5 * dt) * a[i];

    // Drift along straight rays, reflecting at each boundary crossing.
    Vec3 p = state.x[i];
    Vec3 vel = v_half[i];
    double remaining = dt;
    int bounces = 0;
    while (remaining > 0.0) {
      const Vec3 target = p + remaining * vel;
      const auto hit = w.trace(p, target);
      if (!hit) {
        p = target;
        break;
      }
      if (++bounces > max_reflections)
        throw NumericalError("verlet_step: agent " + std::to_string(i) + " exceeded " +
                             std::to_string(max_reflections) + " reflections in one step; reduce dt");
      p = hit->point;
      vel = specular_reflect(vel, hit->normal);
      remaining *= (1.0 - hit->t);
    }
    // A drift ending exactly on a (closed) obstacle face is nudged off it.
    if (!w.contains(p)) {
      for (std::size_t m = 1; m < w.region_count() && !w.contains(p); ++m) {
        if (!w.in_obstacle(p, m)) continue;
        const Cube& c = w.region(m);
        const Vec3 r = p - c.center;
        std::size_t axis = 0;
        for (std::size_t k = 1; k < 3; ++k)
          if (std::abs(r[k]) > std::abs(r[axis])) axis = k;
        p[axis] = std::nextafter(c.center[axis] + (r[axis] >= 0.0 ? 1.0 : -1.0) * c.half_width,
                                 r[axis] >= 0.0 ? 1e300 : -1e300);
      }
      if (!w.contains(p))
        throw NumericalError("verlet_step: agent " + std::to_string(i) + " left the workspace");
    }
    next.x[i] = p;
    v_half[i] = vel;
  }

  std::vector<Vec3> a_pred;
  accel(next.x, v_half, a_pred);
  std::vector<Vec3> v_pred(n);
  for (std::size_t i = 0; i < n; ++i) v_pred[i] = v_half[i] + (0.5 * dt) * a_pred[i];
  std::vector<Vec3> a_new;
  accel(next.x, v_pred, a_new);
  next.v.resize(n);
  for (std::size_t i = 0; i < n; ++i) next.v[i] = v_half[i] + (0.5 * dt) * a_new[i];
  return next;
}

BoidState sample_initial(const Workspace& w, const InitialSampling& cfg) {
  if (!(cfg.position_stddev > 0.0) || !(cfg.velocity_stddev >= 0.0))
    throw std::invalid_argument("sample_initial: standard deviations must be positive");
  constexpr std::size_t kMaxDraws = 1'000'000;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  BoidState s;
  s.x.reserve(cfg.count);
  s.v.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    Vec3 p;
    std::size_t draws = 0;
    do {
      if (++draws > kMaxDraws)
        throw NumericalError("sample_initial: rejection sampling failed; initial Gaussian misses the workspace");
      for (std::size_t a = 0; a < 3; ++a) p[a] = cfg.position_mean[a] + cfg.position_stddev * unit(rng);
    } while (!w.contains(p));
    s.x.push_back(p);
  }
  for (std::size_t i = 0; i < cfg.count; ++i) {
    Vec3 q;
    for (std::size_t a = 0; a < 3; ++a) q[a] = cfg.velocity_mean[a] + cfg.velocity_stddev * unit(rng);
    s.v.push_back(q);
  }
  return s;
}

BoidTrajectory simulate(const BoidState& initial, const Workspace& w, double dt, double duration,
                        std::size_t sample_every, const AccelerationFn& accel, int max_reflections) {
  if (!(dt > 0.0) || !(duration >= 0.0)) throw std::invalid_argument("simulate: need dt > 0 and duration >= 0");
  if (sample_every == 0) throw std::invalid_argument("simulate: sample_every must be >= 1");
  const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
  BoidTrajectory traj;
  traj.dt = dt;
  traj.sample_every = sample_every;
  traj.samples.push_back(initial);
  BoidState s = initial;
  for (std::size_t k = 1; k <= steps; ++k) {
    s = verlet_step(s, w, dt, accel, max_reflections);
    s.t = initial.t + static_cast<double>(k) * dt;
    if (k % sample_every == 0) traj.samples.push_back(s);
  }
  return traj;
}

}  // namespace flockid
