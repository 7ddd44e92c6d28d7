#include "pipeline.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "flockid/errors.hpp"
#include "flockid/initfit.hpp"
#include "flockid/observation.hpp"

namespace flockid::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void say(const Options& opt, const std::string& msg) {
  if (opt.log) opt.log(msg);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

json params_json(const PdeParams& p) {
  json j = json::object();
  const auto a = p.to_array();
  for (std::size_t i = 0; i < PdeParams::kSize; ++i) j[PdeParams::names()[i]] = a[i];
  return j;
}

GridSpec run_grid(const RunConfig& cfg, double v_max) {
  GridSpec g;
  g.cells = cfg.grid.cells;
  g.half_width = cfg.workspace.half_width;
  g.v_max = v_max;
  return g;
}

int slice_plane(const RunConfig& cfg) { return cfg.output.slice_plane < 0 ? cfg.grid.cells / 2 : cfg.output.slice_plane; }

std::size_t sample_at(const FieldSeries& s, double t) {
  for (std::size_t i = 0; i < s.records.size(); ++i)
    if (std::abs(s.records[i].t - t) <= 1e-9 * std::max(1.0, std::abs(t))) return i;
  throw ConfigError("no observation sample at t = " + format_double(t) +
                    " (ident.t0 must coincide with a sample time)");
}

/// Initial fields from the network, on fluid cells of the run's workspace.
/// Velocities are capped at the dataset's v_max: where the fitted density
/// is nearly zero the fitted momentum would otherwise imply huge speeds.
FieldState network_initial(const NetWeights& net, const GridSpec& grid, const CellMask& mask, double t0) {
  FieldState s;
  s.t = t0;
  s.rho = normalized_density(net, grid, mask).values;
  s.j = net_momentum(net, grid, mask).values;
  cap_velocity(s, grid.v_max);
  return s;
}

struct Problem {
  Workspace workspace;
  IdentProblem problem;
};

Problem build_problem(const RunConfig& cfg, const Dataset& data, const NetWeights& net) {
  Problem p{cfg.make_workspace(), {}};
  IdentProblem& prob = p.problem;
  prob.workspace = p.workspace;
  prob.grid = data.grid;
  prob.t0 = cfg.ident.t0;
  prob.tf = cfg.ident.tf;
  prob.solver = cfg.hydro;
  prob.solver.matching = cfg.ident.matching;
  prob.failure_loss = cfg.ident.failure_loss;
  prob.initial = network_initial(net, data.grid, cell_mask(p.workspace, data.grid), cfg.ident.t0);
  const double tol = 1e-9 * std::max(1.0, cfg.ident.tf);
  for (const auto& rec : data.density.records)
    if (rec.t >= cfg.ident.t0 - tol && rec.t <= cfg.ident.tf + tol)
      prob.observations.push_back({rec.t, DensityField(data.grid, rec.values)});
  if (prob.observations.empty()) throw ConfigError("no observations inside [ident.t0, ident.tf]");
  prob.observations.front().t = std::max(prob.observations.front().t, prob.t0);
  prob.observations.back().t = std::min(prob.observations.back().t, prob.tf);
  return p;
}

void write_snapshots(const RunConfig& cfg, const IdentProblem& prob, const PdeParams& theta, const fs::path& out) {
  const auto& times = cfg.output.snapshot_times;
  if (times.empty()) return;
  SolveStats stats;
  const auto traj = solve_forward(prob.initial, theta, prob.workspace, prob.grid, prob.tf, times, prob.solver, &stats);
  if (prob.monitor) prob.monitor->record(stats);
  const int k = slice_plane(cfg);
  std::vector<std::vector<double>> index;
  for (std::size_t s = 0; s < traj.snapshots.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "%03zu", s);
    write_slice_csv(out / ("slice_rho_" + std::string(name) + ".csv"), prob.grid, traj.snapshots[s].rho, k);
    write_slice_csv(out / ("slice_j_" + std::string(name) + ".csv"), prob.grid, traj.snapshots[s].j, k);
    index.push_back({static_cast<double>(s), traj.snapshots[s].t, static_cast<double>(k)});
  }
  write_csv(out / "slices.csv", {"index", "t", "plane"}, index);
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  if (!fs::exists(dir / kManifest)) throw IoError("no dataset at " + dir.string() + " (missing manifest.json)");
  Dataset d;
  d.config_hash = read_json(dir / kManifest).value("config_hash", "");
  d.density = read_fields(dir / kDensity);
  d.momentum = read_fields(dir / kMomentum);
  d.grid = d.density.grid;
  if (d.density.components != 1 || d.momentum.components != 3 ||
      d.momentum.records.size() != d.density.records.size())
    throw IoError(dir.string() + ": inconsistent density/momentum files");
  return d;
}

void cmd_generate(const RunConfig& cfg, const fs::path& out, const Options& opt) {
  cfg.validate();
  ensure_dir(out);
  const Workspace w = cfg.make_workspace();
  say(opt, "sampling " + std::to_string(cfg.boids.sampling.count) + " agents");
  const BoidState initial = sample_initial(w, cfg.boids.sampling);
  const BoidForces forces(w, {}, opt.threads);
  const BoidTrajectory traj = simulate(initial, w, cfg.boids.dt, cfg.boids.duration, cfg.boids.sample_every,
                                       forces, cfg.boids.max_reflections);
  say(opt, "simulated " + std::to_string(traj.samples.size()) + " samples");

  double v_max = cfg.grid.v_max;
  if (v_max == 0.0) v_max = max_speed_component(traj);
  if (!(v_max > 0.0)) v_max = 1.0;
  const GridSpec grid = run_grid(cfg, v_max);

  std::vector<PVHistogram> hists;
  FieldSeries density{grid, 1, {}}, momentum{grid, 3, {}};
  std::vector<std::vector<double>> sample_rows;
  for (std::size_t s = 0; s < traj.samples.size(); ++s) {
    hists.push_back(build_histogram(traj.samples[s], grid));
    const auto& h = hists.back();
    density.records.push_back(to_record(h.t, position_density(h).values));
    momentum.records.push_back(to_record(h.t, momentum_density(h).values));
    sample_rows.push_back({static_cast<double>(s), h.t, h.total_mass()});
  }

  write_trajectory(out / kTrajectory, traj);
  write_histograms(out / kHistograms, hists);
  write_fields(out / kDensity, density);
  write_fields(out / kMomentum, momentum);
  write_csv(out / "samples.csv", {"sample", "t", "binned_mass"}, sample_rows);
  if (!traj.samples.empty()) {
    if (traj.samples.front().size() <= 10000) write_state_csv(out / "initial_state.csv", traj.samples.front());
    const int k = slice_plane(cfg);
    write_slice_csv(out / "slice_q0.csv", grid, density.records.front().values, k);
  }

  const std::string text = print_config(cfg);
  write_text(out / "config.ini", text);
  json m;
  m["command"] = "generate";
  m["config_hash"] = fnv1a_hex(text);
  m["seed"] = cfg.boids.sampling.seed;
  m["agents"] = cfg.boids.sampling.count;
  m["samples"] = traj.samples.size();
  m["dt"] = cfg.boids.dt;
  m["sample_every"] = cfg.boids.sample_every;
  m["grid"] = {{"cells", grid.cells}, {"half_width", grid.half_width}, {"v_max", grid.v_max}};
  m["files"] = {kTrajectory, kHistograms, kDensity, kMomentum, "samples.csv", "config.ini"};
  m["config"] = text;
  write_json(out / kManifest, m);
}

FitSummary cmd_fit_init(const RunConfig& cfg, const fs::path& dataset, const fs::path& out, const Options& opt) {
  cfg.validate();
  const Dataset data = load_dataset(dataset);
  ensure_dir(out);
  const Workspace w = cfg.make_workspace();
  const CellMask mask = cell_mask(w, data.grid);
  const std::size_t s0 = sample_at(data.density, cfg.ident.t0);
  const DensityField q0(data.grid, data.density.records[s0].values);
  MomentumField j0(data.grid);
  j0.values = vectors_of(data.momentum.records[s0]);

  say(opt, "training network (" + std::to_string(cfg.initfit.adam.steps) + " ADAM steps)");
  const InitFitResult fit = adam_train(q0, j0, mask, cfg.initfit);
  write_net(out / kCheckpoint, fit.weights);

  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < fit.curve.size(); ++i) rows.push_back({static_cast<double>(i), fit.curve[i]});
  write_csv(out / "fit_curve.csv", {"iteration", "loss"}, rows);

  FitSummary sum;
  sum.initial_loss = fit.curve.empty() ? 0.0 : fit.curve.front();
  sum.final_loss = loss_L1(fit.weights, q0, j0, mask);
  sum.parameters = fit.weights.w.size();

  const int k = slice_plane(cfg);
  write_slice_csv(out / "slice_rho0_fit.csv", data.grid, normalized_density(fit.weights, data.grid, mask).values, k);
  write_slice_csv(out / "slice_j0_fit.csv", data.grid, net_momentum(fit.weights, data.grid, mask).values, k);

  const std::string text = print_config(cfg);
  json r;
  r["command"] = "fit-init";
  r["config_hash"] = fnv1a_hex(text);
  r["dataset_hash"] = data.config_hash;
  r["seed"] = cfg.initfit.seed;
  r["sample_time"] = data.density.records[s0].t;
  r["parameters"] = sum.parameters;
  r["initial_loss"] = sum.initial_loss;
  r["final_loss"] = sum.final_loss;
  r["config"] = text;
  write_json(out / "fit_report.json", r);
  say(opt, "L1: " + format_double(sum.initial_loss) + " -> " + format_double(sum.final_loss));
  return sum;
}

IdentSummary cmd_identify(const RunConfig& cfg, const fs::path& dataset, const fs::path& checkpoint,
                          const fs::path& out, bool twin, const Options& opt) {
  cfg.validate();
  const Dataset data = load_dataset(dataset);
  const NetWeights net = read_net(checkpoint);
  ensure_dir(out);
  Problem p = build_problem(cfg, data, net);
  IdentProblem& prob = p.problem;
  prob.workspace = p.workspace;
  prob.monitor = opt.monitor;

  PdeParams start = cfg.ident.initial;
  if (twin) {
    std::vector<double> times;
    for (const auto& o : prob.observations) times.push_back(o.t);
    SolveStats stats;
    const auto traj =
        solve_forward(prob.initial, cfg.twin.truth, prob.workspace, prob.grid, prob.tf, times, prob.solver, &stats);
    if (opt.monitor) opt.monitor->record(stats);
    for (std::size_t s = 0; s < times.size(); ++s) prob.observations[s].q.values = traj.snapshots[s].rho;
    auto a = cfg.twin.truth.to_array();
    for (auto& x : a) x *= 1.0 + cfg.twin.perturbation;
    start = PdeParams::from_array(a);
  }

  say(opt, "identifying with " + std::to_string(prob.observations.size()) + " observations" +
               (twin ? " (twin)" : ""));
  const auto progress = [&](std::size_t it, const NewtonIteration& rec) {
    say(opt, "newton " + std::to_string(it) + ": loss " + format_double(rec.loss) + " |g| " +
                 format_double(rec.grad_norm) + " step " + format_double(rec.step) + " cg " +
                 std::to_string(rec.cg_iterations));
  };
  IdentSummary sum;
  sum.result = identify(prob, start, cfg.ident.newton, opt.threads, progress);
  sum.theta = PdeParams::from_array(sum.result.x);
  sum.initial_loss = sum.result.loss_trace.front();

  const LossEval final_eval = loss_L2(sum.theta, prob);
  sum.final_loss = final_eval.value;
  sum.h2 = final_eval.h2;
  for (const auto& o : prob.observations) sum.times.push_back(o.t);

  const auto& res = sum.result;
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < res.loss_trace.size(); ++i) {
    const bool has_iter = i > 0 && i - 1 < res.iterations.size();
    rows.push_back({static_cast<double>(i), res.loss_trace[i], res.grad_norms[i],
                    has_iter ? res.iterations[i - 1].step : 0.0,
                    has_iter ? static_cast<double>(res.iterations[i - 1].cg_iterations) : 0.0});
  }
  write_csv(out / "loss_trace.csv", {"iteration", "loss", "grad_norm", "step", "cg_iterations"}, rows);
  rows.clear();
  for (std::size_t s = 0; s < sum.times.size(); ++s) rows.push_back({sum.times[s], sum.h2.empty() ? 0.0 : sum.h2[s]});
  write_csv(out / "hellinger_trace.csv", {"t", "h2"}, rows);
  rows.clear();
  const auto a = sum.theta.to_array();
  for (std::size_t i = 0; i < a.size(); ++i) rows.push_back({static_cast<double>(i), a[i]});
  write_csv(out / "theta.csv", {"index", "value"}, rows);
  write_theta(out / kTheta, sum.theta);
  write_snapshots(cfg, prob, sum.theta, out);

  const std::string text = print_config(cfg);
  json r;
  r["command"] = "identify";
  r["mode"] = twin ? "twin" : "data";
  r["config_hash"] = fnv1a_hex(text);
  r["dataset_hash"] = data.config_hash;
  r["theta"] = params_json(sum.theta);
  r["start"] = params_json(start);
  r["loss_trace"] = res.loss_trace;
  r["grad_norms"] = res.grad_norms;
  r["termination"] = res.termination;
  r["newton_iterations"] = res.iterations.size();
  r["cg_iterations"] = res.total_cg;
  r["loss_evaluations"] = res.evaluations;
  r["initial_loss"] = sum.initial_loss;
  r["final_loss"] = sum.final_loss;
  r["final_solve"] = {{"steps", final_eval.stats.steps},
                      {"max_mass_drift", final_eval.stats.max_mass_drift},
                      {"min_rho", final_eval.stats.min_rho}};
  if (twin) r["truth"] = params_json(cfg.twin.truth);
  r["config"] = text;
  write_json(out / "ident_report.json", r);
  return sum;
}

EvalSummary cmd_evaluate(const RunConfig& cfg, const fs::path& dataset, const fs::path& checkpoint,
                         const fs::path& theta_file, const fs::path& out, const Options& opt) {
  cfg.validate();
  const Dataset data = load_dataset(dataset);
  const NetWeights net = read_net(checkpoint);
  const PdeParams theta = read_theta(theta_file);
  ensure_dir(out);
  Problem p = build_problem(cfg, data, net);
  IdentProblem& prob = p.problem;
  prob.workspace = p.workspace;
  prob.monitor = opt.monitor;

  const auto start = std::chrono::steady_clock::now();
  const LossEval eval = loss_L2(theta, prob);
  const double runtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (eval.failed) throw NumericalError("forward solve failed: " + eval.failure);

  std::vector<double> times;
  for (const auto& o : prob.observations) times.push_back(o.t);
  HydroSolver solver(prob.workspace, prob.grid, theta, prob.solver);
  const auto traj = solver.solve(prob.initial, prob.tf, times);
  const double m0 = solver.mass(prob.initial);
  std::vector<std::vector<double>> rows;
  for (std::size_t s = 0; s < times.size(); ++s) {
    const auto& snap = traj.snapshots[s];
    double min_rho = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < snap.rho.size(); ++c)
      if (solver.mask()[c] == CellKind::fluid) min_rho = std::min(min_rho, snap.rho[c]);
    const double m = solver.mass(snap);
    rows.push_back({times[s], eval.h2[s], m, std::abs(m - m0) / m0, min_rho});
  }
  write_csv(out / "metrics.csv", {"t", "h2", "mass", "mass_drift", "min_rho"}, rows);

  EvalSummary sum{eval.value, eval.stats.max_mass_drift, eval.stats.min_rho, eval.stats.steps};
  json r;
  r["command"] = "evaluate";
  r["config_hash"] = fnv1a_hex(print_config(cfg));
  r["theta"] = params_json(theta);
  r["loss"] = sum.loss;
  r["max_mass_drift"] = sum.max_mass_drift;
  r["min_rho"] = sum.min_rho;
  r["steps"] = sum.steps;
  r["runtime_seconds"] = runtime;
  write_json(out / "evaluate_report.json", r);
  say(opt, "L2 = " + format_double(sum.loss));
  return sum;
}

void write_theta(const fs::path& path, const PdeParams& p) {
  json j;
  j["names"] = PdeParams::names();
  const auto a = p.to_array();
  j["values"] = std::vector<double>(a.begin(), a.end());
  write_json(path, j);
}

PdeParams read_theta(const fs::path& path) {
  const json j = read_json(path);
  try {
    const auto values = j.at("values").get<std::vector<double>>();
    if (values.size() != PdeParams::kSize) throw IoError(path.string() + ": expected 10 values");
    PdeParams p = PdeParams::from_array(values);
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace flockid::pipeline
