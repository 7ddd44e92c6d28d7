#include "flockid/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "flockid/errors.hpp"
#include "flockid/records.hpp"

namespace flockid {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

std::string num(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::string nums(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? " " : "") + num(xs[i]);
  return s;
}

struct Line {
  int number;
  std::string value;
};

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ConfigError("line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& tok, int line) {
  double v = 0.0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size() || !std::isfinite(v))
    fail(line, "expected a number, got '" + tok + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& tok, int line) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (r.ec != std::errc() || r.ptr != tok.data() + tok.size())
    fail(line, "expected a non-negative integer, got '" + tok + "'");
  return v;
}

std::vector<double> parse_doubles(const Line& l, std::size_t expected = 0) {
  std::vector<double> out;
  for (const auto& tok : split_ws(l.value)) out.push_back(parse_double(tok, l.number));
  if (expected && out.size() != expected)
    fail(l.number, "expected " + std::to_string(expected) + " numbers, got " + std::to_string(out.size()));
  return out;
}

Vec3 parse_vec3(const Line& l) {
  const auto v = parse_doubles(l, 3);
  return {v[0], v[1], v[2]};
}

PdeParams parse_params(const Line& l) {
  const auto v = parse_doubles(l, PdeParams::kSize);
  try {
    const PdeParams p = PdeParams::from_array(v);
    p.validate();
    return p;
  } catch (const std::invalid_argument& e) {
    fail(l.number, e.what());
  }
}

std::string params_text(const PdeParams& p) {
  const auto a = p.to_array();
  return nums(std::vector<double>(a.begin(), a.end()));
}

using Handler = std::function<void(const Line&)>;

}  // namespace

Workspace RunConfig::make_workspace() const {
  try {
    return Workspace(workspace.half_width, workspace.obstacles);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("workspace: ") + e.what());
  }
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  make_workspace();
  require(boids.dt > 0.0, "boids.dt must be > 0");
  require(boids.duration >= 0.0, "boids.duration must be >= 0");
  require(boids.sample_every >= 1, "boids.sample_every must be >= 1");
  require(boids.sampling.position_stddev > 0.0, "boids.position_stddev must be > 0");
  require(boids.sampling.velocity_stddev > 0.0, "boids.velocity_stddev must be > 0");
  require(boids.max_reflections >= 1, "boids.max_reflections must be >= 1");
  require(grid.cells >= 1, "grid.cells must be >= 1");
  require(grid.v_max >= 0.0, "grid.v_max must be >= 0 (0 = from data)");
  require(!initfit.hidden.empty(), "initfit.hidden needs at least one layer");
  for (int width : initfit.hidden) require(width >= 1, "initfit.hidden widths must be >= 1");
  require(initfit.adam.steps >= 1, "initfit.steps must be >= 1");
  require(initfit.adam.base_rate > 0.0, "initfit.base_rate must be > 0");
  require(initfit.adam.decay_iterations > 0.0, "initfit.decay_iterations must be > 0");
  require(hydro.cfl > 0.0 && hydro.cfl < 1.0, "hydro.cfl must be in (0, 1)");
  require(hydro.dt_max > 0.0, "hydro.dt_max must be > 0");
  require(hydro.rho_eps > 0.0 && hydro.pos_eps >= 0.0, "hydro.rho_eps must be > 0 and pos_eps >= 0");
  require(hydro.max_steps >= 1, "hydro.max_steps must be >= 1");
  require(ident.tf > ident.t0, "ident.tf must be > ident.t0");
  require(ident.t0 >= 0.0, "ident.t0 must be >= 0");
  require(ident.newton.h_rel > 0.0 && ident.newton.hv_rel > 0.0, "ident.h_rel and ident.hv_rel must be > 0");
  require(ident.newton.cg_tol > 0.0, "ident.cg_tol must be > 0");
  require(ident.newton.max_cg >= 1, "ident.max_cg must be >= 1");
  require(ident.newton.armijo > 0.0 && ident.newton.armijo < 1.0, "ident.armijo must be in (0, 1)");
  require(ident.newton.backtrack > 0.0 && ident.newton.backtrack < 1.0, "ident.backtrack must be in (0, 1)");
  require(ident.newton.curvature_step > 0.0, "ident.curvature_step must be > 0");
  require(twin.perturbation > -1.0, "twin.perturbation must be > -1");
  require(!output.dir.empty(), "output.dir must not be empty");
  require(output.slice_plane >= -1 && output.slice_plane < grid.cells, "output.slice_plane out of range");
  for (double t : output.snapshot_times)
    require(t >= ident.t0 && t <= ident.tf, "output.snapshot_times must lie in [ident.t0, ident.tf]");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  bool obstacles_seen = false;

  std::map<std::string, std::map<std::string, Handler>> sections;
  auto& ws = sections["workspace"];
  ws["half_width"] = [&](const Line& l) { cfg.workspace.half_width = parse_doubles(l, 1)[0]; };
  ws["obstacle"] = [&](const Line& l) {
    if (!obstacles_seen) cfg.workspace.obstacles.clear();
    obstacles_seen = true;
    if (trim(l.value) == "none") return;
    const auto v = parse_doubles(l, 4);
    cfg.workspace.obstacles.push_back({{v[0], v[1], v[2]}, v[3]});
  };

  auto& bo = sections["boids"];
  bo["count"] = [&](const Line& l) { cfg.boids.sampling.count = parse_u64(trim(l.value), l.number); };
  bo["dt"] = [&](const Line& l) { cfg.boids.dt = parse_doubles(l, 1)[0]; };
  bo["duration"] = [&](const Line& l) { cfg.boids.duration = parse_doubles(l, 1)[0]; };
  bo["sample_every"] = [&](const Line& l) { cfg.boids.sample_every = parse_u64(trim(l.value), l.number); };
  bo["seed"] = [&](const Line& l) { cfg.boids.sampling.seed = parse_u64(trim(l.value), l.number); };
  bo["position_mean"] = [&](const Line& l) { cfg.boids.sampling.position_mean = parse_vec3(l); };
  bo["position_stddev"] = [&](const Line& l) { cfg.boids.sampling.position_stddev = parse_doubles(l, 1)[0]; };
  bo["velocity_mean"] = [&](const Line& l) { cfg.boids.sampling.velocity_mean = parse_vec3(l); };
  bo["velocity_stddev"] = [&](const Line& l) { cfg.boids.sampling.velocity_stddev = parse_doubles(l, 1)[0]; };
  bo["max_reflections"] = [&](const Line& l) {
    cfg.boids.max_reflections = static_cast<int>(parse_u64(trim(l.value), l.number));
  };

  auto& gr = sections["grid"];
  gr["cells"] = [&](const Line& l) { cfg.grid.cells = static_cast<int>(parse_u64(trim(l.value), l.number)); };
  gr["v_max"] = [&](const Line& l) {
    cfg.grid.v_max = trim(l.value) == "auto" ? 0.0 : parse_doubles(l, 1)[0];
  };

  auto& nf = sections["initfit"];
  nf["hidden"] = [&](const Line& l) {
    cfg.initfit.hidden.clear();
    for (const auto& tok : split_ws(l.value)) cfg.initfit.hidden.push_back(static_cast<int>(parse_u64(tok, l.number)));
  };
  nf["steps"] = [&](const Line& l) { cfg.initfit.adam.steps = parse_u64(trim(l.value), l.number); };
  nf["base_rate"] = [&](const Line& l) { cfg.initfit.adam.base_rate = parse_doubles(l, 1)[0]; };
  nf["decay_iterations"] = [&](const Line& l) { cfg.initfit.adam.decay_iterations = parse_doubles(l, 1)[0]; };
  nf["seed"] = [&](const Line& l) { cfg.initfit.seed = parse_u64(trim(l.value), l.number); };

  auto& hy = sections["hydro"];
  hy["cfl"] = [&](const Line& l) { cfg.hydro.cfl = parse_doubles(l, 1)[0]; };
  hy["dt_max"] = [&](const Line& l) { cfg.hydro.dt_max = parse_doubles(l, 1)[0]; };
  hy["rho_eps"] = [&](const Line& l) { cfg.hydro.rho_eps = parse_doubles(l, 1)[0]; };
  hy["pos_eps"] = [&](const Line& l) { cfg.hydro.pos_eps = parse_doubles(l, 1)[0]; };
  hy["max_steps"] = [&](const Line& l) { cfg.hydro.max_steps = parse_u64(trim(l.value), l.number); };
  hy["near_radius"] = [&](const Line& l) {
    const auto v = trim(l.value);
    if (v == "quarter_cell") cfg.hydro.near = NearRadius::quarter_cell;
    else if (v == "half_cell") cfg.hydro.near = NearRadius::half_cell;
    else fail(l.number, "near_radius must be quarter_cell or half_cell");
  };

  auto& id = sections["ident"];
  id["t0"] = [&](const Line& l) { cfg.ident.t0 = parse_doubles(l, 1)[0]; };
  id["tf"] = [&](const Line& l) { cfg.ident.tf = parse_doubles(l, 1)[0]; };
  id["max_newton"] = [&](const Line& l) { cfg.ident.newton.max_newton = parse_u64(trim(l.value), l.number); };
  id["max_cg"] = [&](const Line& l) { cfg.ident.newton.max_cg = parse_u64(trim(l.value), l.number); };
  id["cg_tol"] = [&](const Line& l) { cfg.ident.newton.cg_tol = parse_doubles(l, 1)[0]; };
  id["h_rel"] = [&](const Line& l) { cfg.ident.newton.h_rel = parse_doubles(l, 1)[0]; };
  id["hv_rel"] = [&](const Line& l) { cfg.ident.newton.hv_rel = parse_doubles(l, 1)[0]; };
  id["armijo"] = [&](const Line& l) { cfg.ident.newton.armijo = parse_doubles(l, 1)[0]; };
  id["backtrack"] = [&](const Line& l) { cfg.ident.newton.backtrack = parse_doubles(l, 1)[0]; };
  id["max_backtracks"] = [&](const Line& l) { cfg.ident.newton.max_backtracks = parse_u64(trim(l.value), l.number); };
  id["grad_tol"] = [&](const Line& l) { cfg.ident.newton.grad_tol = parse_doubles(l, 1)[0]; };
  id["positive_floor"] = [&](const Line& l) { cfg.ident.newton.positive_floor = parse_doubles(l, 1)[0]; };
  id["curvature_step"] = [&](const Line& l) { cfg.ident.newton.curvature_step = parse_doubles(l, 1)[0]; };
  id["failure_loss"] = [&](const Line& l) { cfg.ident.failure_loss = parse_doubles(l, 1)[0]; };
  id["time_matching"] = [&](const Line& l) {
    const auto v = trim(l.value);
    if (v == "interpolate") cfg.ident.matching = TimeMatching::interpolate;
    else if (v == "land") cfg.ident.matching = TimeMatching::land;
    else fail(l.number, "time_matching must be interpolate or land");
  };
  id["initial"] = [&](const Line& l) { cfg.ident.initial = parse_params(l); };

  auto& tw = sections["twin"];
  tw["truth"] = [&](const Line& l) { cfg.twin.truth = parse_params(l); };
  tw["perturbation"] = [&](const Line& l) { cfg.twin.perturbation = parse_doubles(l, 1)[0]; };

  auto& out = sections["output"];
  out["dir"] = [&](const Line& l) {
    cfg.output.dir = trim(l.value);
    if (cfg.output.dir.empty()) fail(l.number, "dir must not be empty");
  };
  out["snapshot_times"] = [&](const Line& l) { cfg.output.snapshot_times = parse_doubles(l); };
  out["slice_plane"] = [&](const Line& l) {
    const auto v = trim(l.value);
    cfg.output.slice_plane = v == "middle" ? -1 : static_cast<int>(parse_u64(v, l.number));
  };

  std::istringstream is(text);
  std::string raw;
  int number = 0;
  std::map<std::string, Handler>* current = nullptr;
  std::string current_name;
  std::map<std::string, int> seen;
  while (std::getline(is, raw)) {
    ++number;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(number, "malformed section header");
      current_name = trim(line.substr(1, line.size() - 2));
      const auto it = sections.find(current_name);
      if (it == sections.end()) fail(number, "unknown section [" + current_name + "]");
      current = &it->second;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(number, "expected key = value");
    if (!current) fail(number, "key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const auto h = current->find(key);
    if (h == current->end()) fail(number, "unknown key '" + key + "' in [" + current_name + "]");
    const std::string full = current_name + "." + key;
    if (key != "obstacle") {
      if (const auto prev = seen.find(full); prev != seen.end())
        fail(number, "duplicate key '" + key + "' (first set on line " + std::to_string(prev->second) + ")");
      seen[full] = number;
    }
    h->second(Line{number, line.substr(eq + 1)});
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_text(path)); }

std::string print_config(const RunConfig& c) {
  std::ostringstream os;
  os << "[workspace]\n";
  os << "half_width = " << num(c.workspace.half_width) << "\n";
  if (c.workspace.obstacles.empty()) os << "obstacle = none\n";
  for (const auto& o : c.workspace.obstacles)
    os << "obstacle = " << nums({o.center[0], o.center[1], o.center[2], o.half_width}) << "\n";

  const auto& b = c.boids;
  os << "\n[boids]\n";
  os << "count = " << b.sampling.count << "\n";
  os << "dt = " << num(b.dt) << "\n";
  os << "duration = " << num(b.duration) << "\n";
  os << "sample_every = " << b.sample_every << "\n";
  os << "seed = " << b.sampling.seed << "\n";
  const auto& pm = b.sampling.position_mean;
  const auto& vm = b.sampling.velocity_mean;
  os << "position_mean = " << nums({pm[0], pm[1], pm[2]}) << "\n";
  os << "position_stddev = " << num(b.sampling.position_stddev) << "\n";
  os << "velocity_mean = " << nums({vm[0], vm[1], vm[2]}) << "\n";
  os << "velocity_stddev = " << num(b.sampling.velocity_stddev) << "\n";
  os << "max_reflections = " << b.max_reflections << "\n";

  os << "\n[grid]\n";
  os << "cells = " << c.grid.cells << "\n";
  os << "v_max = " << (c.grid.v_max == 0.0 ? std::string("auto") : num(c.grid.v_max)) << "\n";

  os << "\n[initfit]\nhidden =";
  for (int width : c.initfit.hidden) os << " " << width;
  os << "\n";
  os << "steps = " << c.initfit.adam.steps << "\n";
  os << "base_rate = " << num(c.initfit.adam.base_rate) << "\n";
  os << "decay_iterations = " << num(c.initfit.adam.decay_iterations) << "\n";
  os << "seed = " << c.initfit.seed << "\n";

  os << "\n[hydro]\n";
  os << "cfl = " << num(c.hydro.cfl) << "\n";
  os << "dt_max = " << num(c.hydro.dt_max) << "\n";
  os << "rho_eps = " << num(c.hydro.rho_eps) << "\n";
  os << "pos_eps = " << num(c.hydro.pos_eps) << "\n";
  os << "max_steps = " << c.hydro.max_steps << "\n";
  os << "near_radius = " << (c.hydro.near == NearRadius::quarter_cell ? "quarter_cell" : "half_cell") << "\n";

  const auto& n = c.ident.newton;
  os << "\n[ident]\n";
  os << "t0 = " << num(c.ident.t0) << "\n";
  os << "tf = " << num(c.ident.tf) << "\n";
  os << "max_newton = " << n.max_newton << "\n";
  os << "max_cg = " << n.max_cg << "\n";
  os << "cg_tol = " << num(n.cg_tol) << "\n";
  os << "h_rel = " << num(n.h_rel) << "\n";
  os << "hv_rel = " << num(n.hv_rel) << "\n";
  os << "armijo = " << num(n.armijo) << "\n";
  os << "backtrack = " << num(n.backtrack) << "\n";
  os << "max_backtracks = " << n.max_backtracks << "\n";
  os << "grad_tol = " << num(n.grad_tol) << "\n";
  os << "positive_floor = " << num(n.positive_floor) << "\n";
  os << "curvature_step = " << num(n.curvature_step) << "\n";
  os << "failure_loss = " << num(c.ident.failure_loss) << "\n";
  os << "time_matching = " << (c.ident.matching == TimeMatching::interpolate ? "interpolate" : "land") << "\n";
  os << "initial = " << params_text(c.ident.initial) << "\n";

  os << "\n[twin]\n";
  os << "truth = " << params_text(c.twin.truth) << "\n";
  os << "perturbation = " << num(c.twin.perturbation) << "\n";

  os << "\n[output]\n";
  os << "dir = " << c.output.dir << "\n";
  os << "snapshot_times = " << nums(c.output.snapshot_times) << "\n";
  os << "slice_plane = " << (c.output.slice_plane < 0 ? std::string("middle") : std::to_string(c.output.slice_plane))
     << "\n";
  return os.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace flockid
