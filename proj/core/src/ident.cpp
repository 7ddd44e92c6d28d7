#include "flockid/ident.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "flockid/errors.hpp"
#include "flockid/observation.hpp"

namespace flockid {

void IdentProblem::validate() const {
  if (!(tf >= t0)) throw std::invalid_argument("IdentProblem: tf must be >= t0");
  if (initial.rho.size() != grid.size() || initial.j.size() != grid.size())
    throw std::invalid_argument("IdentProblem: initial fields do not match the grid");
  if (observations.empty()) throw std::invalid_argument("IdentProblem: no observations");
  for (std::size_t s = 0; s < observations.size(); ++s) {
    const double t = observations[s].t;
    if (t < t0 || t > tf) throw std::invalid_argument("IdentProblem: observation time outside [t0, tf]");
    if (s > 0 && !(t > observations[s - 1].t))
      throw std::invalid_argument("IdentProblem: observation times must be strictly increasing");
    if (observations[s].q.values.size() != grid.size())
      throw std::invalid_argument("IdentProblem: observation field does not match the grid");
  }
}

void SolveMonitor::record(const SolveStats& s) {
  std::lock_guard lock(mu_);
  ++solves_;
  max_drift_ = std::max(max_drift_, s.max_mass_drift);
  min_rho_ = std::min(min_rho_, s.min_rho);
}

void SolveMonitor::record_failure() {
  std::lock_guard lock(mu_);
  ++failures_;
}

std::size_t SolveMonitor::solves() const {
  std::lock_guard lock(mu_);
  return solves_;
}

std::size_t SolveMonitor::failures() const {
  std::lock_guard lock(mu_);
  return failures_;
}

double SolveMonitor::max_mass_drift() const {
  std::lock_guard lock(mu_);
  return max_drift_;
}

double SolveMonitor::min_rho() const {
  std::lock_guard lock(mu_);
  return min_rho_;
}

LossEval loss_L2(const PdeParams& params, const IdentProblem& problem) {
  params.validate();
  LossEval out;
  std::vector<double> times;
  times.reserve(problem.observations.size());
  for (const auto& o : problem.observations) times.push_back(o.t);

  FieldTrajectory traj;
  try {
    FieldState init = problem.initial;
    init.t = problem.t0;
    HydroSolver solver(problem.workspace, problem.grid, params, problem.solver);
    traj = solver.solve(init, problem.tf, times, &out.stats);
  } catch (const NumericalError& e) {
    out.value = problem.failure_loss;
    out.failed = true;
    out.failure = e.what();
    if (problem.monitor) problem.monitor->record_failure();
    return out;
  }
  if (problem.monitor) problem.monitor->record(out.stats);

  const std::size_t S = problem.observations.size();
  out.h2.resize(S);
  for (std::size_t s = 0; s < S; ++s) {
    const DensityField rho(problem.grid, traj.snapshots[s].rho);
    out.h2[s] = hellinger_sq(rho, problem.observations[s].q);
  }
  const double span = problem.tf - problem.t0;
  if (!(span > 0.0)) {
    out.value = out.h2.front();
    return out;
  }
  double acc = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    const double next = (s + 1 < S) ? times[s + 1] : problem.tf;
    acc += out.h2[s] * (next - times[s]);
  }
  out.value = acc / span;
  return out;
}

namespace {

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

double norm2(std::span<const double> v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }
double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

FdGradient fd_gradient(const Objective& f, std::span<const double> x, double h_rel, const std::vector<bool>& positive,
                       unsigned threads) {
  if (!(h_rel > 0.0)) throw std::invalid_argument("fd_gradient: h_rel must be > 0");
  const std::size_t n = x.size();
  FdGradient out;
  out.g.assign(n, 0.0);
  out.unreliable.assign(n, false);

  auto step_for = [&](std::size_t i, double scale) {
    double h = scale * h_rel * std::max(std::abs(x[i]), 1.0);
    if (!positive.empty() && positive[i] && x[i] - h <= 0.0) h = 0.5 * x[i];
    return h;
  };
  auto evaluate = [&](std::size_t i, double h, ObjectiveValue& plus, ObjectiveValue& minus) {
    std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
    xp[i] += h;
    xm[i] -= h;
    plus = f(xp);
    minus = f(xm);
  };

  std::vector<ObjectiveValue> plus(n), minus(n);
  std::vector<double> steps(n);
  parallel_for(n, threads, [&](std::size_t i) {
    steps[i] = step_for(i, 1.0);
    evaluate(i, steps[i], plus[i], minus[i]);
  });
  out.evaluations = 2 * n;

  std::vector<std::size_t> retry;
  for (std::size_t i = 0; i < n; ++i)
    if (plus[i].failed || minus[i].failed) retry.push_back(i);
  parallel_for(retry.size(), threads, [&](std::size_t r) {
    const std::size_t i = retry[r];
    steps[i] = step_for(i, 0.5);
    evaluate(i, steps[i], plus[i], minus[i]);
  });
  out.evaluations += 2 * retry.size();

  for (std::size_t i = 0; i < n; ++i) {
    if (plus[i].failed || minus[i].failed) {
      out.unreliable[i] = true;
      continue;
    }
    out.g[i] = (plus[i].value - minus[i].value) / (2.0 * steps[i]);
  }
  return out;
}

NewtonResult newton_cg(const Objective& f, const GradientFn& grad, std::vector<double> x, const NewtonConfig& cfg,
                       const std::vector<bool>& positive, const NewtonProgress& progress) {
  const std::size_t n = x.size();
  auto clamp = [&](std::vector<double>& v) {
    if (positive.empty()) return;
    for (std::size_t i = 0; i < n; ++i)
      if (positive[i]) v[i] = std::max(v[i], cfg.positive_floor);
  };

  NewtonResult res;
  ObjectiveValue fx = f(x);
  std::size_t evals = 1;
  std::vector<double> g = grad(x);
  res.loss_trace.push_back(fx.value);
  res.grad_norms.push_back(norm2(g));
  res.termination = "max_iterations";

  for (std::size_t it = 0; it < cfg.max_newton; ++it) {
    const double gnorm = norm2(g);
    if (gnorm <= cfg.grad_tol) {
      res.termination = "gradient_tolerance";
      break;
    }

    auto hess_vec = [&](const std::vector<double>& v) {
      const double vn = norm2(v);
      std::vector<double> hv(n, 0.0);
      if (vn == 0.0) return hv;
      double delta = cfg.hv_rel * std::max(1.0, norm2(x)) / vn;
      for (std::size_t i = 0; i < positive.size(); ++i)
        if (positive[i] && x[i] + delta * v[i] < 0.5 * x[i]) delta = 0.5 * x[i] / -v[i];
      std::vector<double> xs(n);
      for (std::size_t i = 0; i < n; ++i) xs[i] = x[i] + delta * v[i];
      const std::vector<double> gs = grad(xs);
      for (std::size_t i = 0; i < n; ++i) hv[i] = (gs[i] - g[i]) / delta;
      return hv;
    };

    // Truncated CG on H p = -g.
    std::vector<double> p(n, 0.0), r(n), d(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = d[i] = -g[i];
    double rr = dot(r, r);
    std::size_t cg_its = 0;
    bool unbounded = false;
    for (std::size_t k = 0; k < cfg.max_cg; ++k) {
      const std::vector<double> hd = hess_vec(d);
      ++cg_its;
      const double curv = dot(d, hd);
      if (!(curv > 0.0)) {
        // Steepest descent; the model gives no step length, so start from a
        // trust-region-sized one and let the line search rescale it.
        if (k == 0) {
          const double scale = cfg.curvature_step * std::max(1.0, norm2(x)) / norm2(d);
          for (std::size_t i = 0; i < n; ++i) p[i] = scale * d[i];
          unbounded = true;
        }
        break;
      }
      const double alpha = rr / curv;
      for (std::size_t i = 0; i < n; ++i) {
        p[i] += alpha * d[i];
        r[i] -= alpha * hd[i];
      }
      const double rr_new = dot(r, r);
      if (std::sqrt(rr_new) <= cfg.cg_tol * gnorm) break;
      const double beta = rr_new / rr;
      for (std::size_t i = 0; i < n; ++i) d[i] = r[i] + beta * d[i];
      rr = rr_new;
    }
    double slope = dot(g, p);
    if (!(slope < 0.0)) {
      for (std::size_t i = 0; i < n; ++i) p[i] = -g[i];
      slope = -gnorm * gnorm;
    }

    // Armijo backtracking.
    const std::size_t evals_before = evals;
    double step = 1.0;
    bool accepted = false;
    std::vector<double> trial(n);
    ObjectiveValue ft;
    for (std::size_t b = 0; b <= cfg.max_backtracks; ++b, step *= cfg.backtrack) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + step * p[i];
      clamp(trial);
      ft = f(trial);
      ++evals;
      if (!ft.failed && ft.value <= fx.value + cfg.armijo * step * slope) {
        accepted = true;
        break;
      }
    }
    // Along negative curvature a full first step may still be short: keep
    // growing it while the loss keeps falling.
    if (accepted && unbounded && step == 1.0) {
      std::vector<double> longer(n);
      for (std::size_t b = 0; b < cfg.max_backtracks; ++b) {
        const double next = step / cfg.backtrack;
        for (std::size_t i = 0; i < n; ++i) longer[i] = x[i] + next * p[i];
        clamp(longer);
        const ObjectiveValue fl = f(longer);
        ++evals;
        if (fl.failed || !(fl.value < ft.value) || fl.value > fx.value + cfg.armijo * next * slope) break;
        step = next;
        trial = longer;
        ft = fl;
      }
    }
    res.total_cg += cg_its;
    if (!accepted) {
      res.termination = "line_search_failure";
      break;
    }
    x = trial;
    fx = ft;
    g = grad(x);
    NewtonIteration rec;
    rec.loss = fx.value;
    rec.grad_norm = norm2(g);
    rec.step = step;
    rec.cg_iterations = cg_its;
    rec.evaluations = evals - evals_before;
    res.iterations.push_back(rec);
    if (progress) progress(it + 1, rec);
    res.loss_trace.push_back(fx.value);
    res.grad_norms.push_back(rec.grad_norm);
  }
  if (res.termination == "max_iterations" && !res.grad_norms.empty() && res.grad_norms.back() <= cfg.grad_tol)
    res.termination = "gradient_tolerance";
  res.x = std::move(x);
  res.evaluations = evals;
  return res;
}

std::vector<bool> pde_positive_mask() {
  std::vector<bool> m(PdeParams::kSize);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = PdeParams::is_scale(i);
  return m;
}

FdGradient fd_gradient(const PdeParams& params, const IdentProblem& problem, double h_rel, unsigned threads) {
  params.validate();
  const Objective f = [&](std::span<const double> x) {
    const LossEval e = loss_L2(PdeParams::from_array(x), problem);
    return ObjectiveValue{e.value, e.failed};
  };
  const auto a = params.to_array();
  return fd_gradient(f, a, h_rel, pde_positive_mask(), threads);
}

NewtonResult identify(const IdentProblem& problem, const PdeParams& initial_guess, const NewtonConfig& cfg,
                      unsigned threads, const NewtonProgress& progress) {
  problem.validate();
  initial_guess.validate();
  const auto positive = pde_positive_mask();
  std::size_t loss_evals = 0;
  Objective f = [&](std::span<const double> x) {
    const LossEval e = loss_L2(PdeParams::from_array(x), problem);
    return ObjectiveValue{e.value, e.failed};
  };
  GradientFn grad = [&](std::span<const double> x) {
    const FdGradient fd = fd_gradient(f, x, cfg.h_rel, positive, threads);
    loss_evals += fd.evaluations;
    return fd.g;
  };
  const auto a = initial_guess.to_array();
  NewtonResult res = newton_cg(f, grad, std::vector<double>(a.begin(), a.end()), cfg, positive, progress);
  res.evaluations += loss_evals;
  return res;
}

}  // namespace flockid
