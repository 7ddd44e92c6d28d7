#include "flockid/records.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flockid/errors.hpp"

namespace flockid {

namespace {

constexpr std::size_t kMagicSize = 8;

class Writer {
 public:
  Writer(const std::filesystem::path& path, const char* magic) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    out_.write(magic, kMagicSize);
  }
  void u64(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) v = byteswap(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void f64(double d) { u64(std::bit_cast<std::uint64_t>(d)); }
  void close() {
    out_.close();
    if (!out_) throw IoError("write failed: " + path_.string());
  }

  static std::uint64_t byteswap(std::uint64_t v) {
    std::uint64_t r = 0;
    for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffu) << (8 * (7 - b));
    return r;
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  Reader(const std::filesystem::path& path, const char* magic) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
    char tag[kMagicSize];
    in_.read(tag, kMagicSize);
    if (!in_ || std::memcmp(tag, magic, kMagicSize) != 0)
      throw IoError(path.string() + ": not a " + std::string(magic, kMagicSize) + " file");
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) throw IoError(path_.string() + ": truncated file");
    if constexpr (std::endian::native == std::endian::big) v = Writer::byteswap(v);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  /// Guards allocations driven by header counts.
  std::size_t count(std::uint64_t limit = std::uint64_t{1} << 40) {
    const std::uint64_t v = u64();
    if (v > limit) throw IoError(path_.string() + ": implausible count in header");
    return static_cast<std::size_t>(v);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

void write_grid(Writer& w, const GridSpec& g) {
  w.u64(static_cast<std::uint64_t>(g.cells));
  w.f64(g.half_width);
  w.f64(g.v_max);
}

GridSpec read_grid(Reader& r) {
  GridSpec g;
  g.cells = static_cast<int>(r.count(1u << 12));
  g.half_width = r.f64();
  g.v_max = r.f64();
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("bad grid header: ") + e.what());
  }
  return g;
}

}  // namespace

void write_trajectory(const std::filesystem::path& path, const BoidTrajectory& traj) {
  Writer w(path, "FLKTRJ01");
  const std::size_t n = traj.samples.empty() ? 0 : traj.samples.front().size();
  w.u64(n);
  w.u64(3);
  w.f64(traj.dt);
  w.u64(traj.sample_every);
  w.u64(traj.samples.size());
  for (const auto& s : traj.samples) {
    if (s.size() != n) throw std::invalid_argument("write_trajectory: agent count changes between samples");
    w.f64(s.t);
    for (const auto& x : s.x)
      for (std::size_t a = 0; a < 3; ++a) w.f64(x[a]);
    for (const auto& v : s.v)
      for (std::size_t a = 0; a < 3; ++a) w.f64(v[a]);
  }
  w.close();
}

BoidTrajectory read_trajectory(const std::filesystem::path& path) {
  Reader r(path, "FLKTRJ01");
  BoidTrajectory traj;
  const std::size_t n = r.count();
  if (r.u64() != 3) throw IoError(path.string() + ": expected 3 dimensions");
  traj.dt = r.f64();
  traj.sample_every = r.count();
  const std::size_t samples = r.count();
  traj.samples.resize(samples);
  for (auto& s : traj.samples) {
    s.t = r.f64();
    s.x.resize(n);
    s.v.resize(n);
    for (auto& x : s.x)
      for (std::size_t a = 0; a < 3; ++a) x[a] = r.f64();
    for (auto& v : s.v)
      for (std::size_t a = 0; a < 3; ++a) v[a] = r.f64();
  }
  return traj;
}

void write_fields(const std::filesystem::path& path, const FieldSeries& series) {
  Writer w(path, "FLKFLD01");
  write_grid(w, series.grid);
  w.u64(series.components);
  w.u64(series.records.size());
  const std::size_t len = series.grid.size() * series.components;
  for (const auto& rec : series.records) {
    if (rec.values.size() != len) throw std::invalid_argument("write_fields: record size mismatch");
    w.f64(rec.t);
    for (double v : rec.values) w.f64(v);
  }
  w.close();
}

FieldSeries read_fields(const std::filesystem::path& path) {
  Reader r(path, "FLKFLD01");
  FieldSeries s;
  s.grid = read_grid(r);
  s.components = r.count(3);
  if (s.components != 1 && s.components != 3) throw IoError(path.string() + ": components must be 1 or 3");
  s.records.resize(r.count());
  for (auto& rec : s.records) {
    rec.t = r.f64();
    rec.values.resize(s.grid.size() * s.components);
    for (auto& v : rec.values) v = r.f64();
  }
  return s;
}

FieldRecord to_record(double t, const std::vector<double>& rho) { return {t, rho}; }

FieldRecord to_record(double t, const std::vector<Vec3>& j) {
  FieldRecord r{t, {}};
  r.values.reserve(3 * j.size());
  for (const auto& v : j)
    for (std::size_t a = 0; a < 3; ++a) r.values.push_back(v[a]);
  return r;
}

std::vector<Vec3> vectors_of(const FieldRecord& r) {
  if (r.values.size() % 3 != 0) throw std::invalid_argument("vectors_of: size not divisible by 3");
  std::vector<Vec3> out(r.values.size() / 3);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = {r.values[3 * c], r.values[3 * c + 1], r.values[3 * c + 2]};
  return out;
}

void write_histograms(const std::filesystem::path& path, const std::vector<PVHistogram>& hists) {
  Writer w(path, "FLKHST01");
  const GridSpec g = hists.empty() ? GridSpec{} : hists.front().grid;
  write_grid(w, g);
  w.u64(hists.size());
  for (const auto& h : hists) {
    w.f64(h.t);
    w.u64(h.agents);
    w.u64(h.counts.size());
    for (const auto& [key, count] : h.counts) {
      w.u64(key);
      w.u64(count);
    }
  }
  w.close();
}

std::vector<PVHistogram> read_histograms(const std::filesystem::path& path) {
  Reader r(path, "FLKHST01");
  const GridSpec g = read_grid(r);
  std::vector<PVHistogram> out(r.count());
  for (auto& h : out) {
    h.grid = g;
    h.t = r.f64();
    h.agents = r.u64();
    const std::size_t entries = r.count();
    for (std::size_t e = 0; e < entries; ++e) {
      const std::uint64_t key = r.u64();
      h.counts[key] = r.u64();
    }
  }
  return out;
}

void write_net(const std::filesystem::path& path, const NetWeights& net) {
  net.validate();
  Writer w(path, "FLKNET01");
  w.u64(net.hidden.size());
  for (int width : net.hidden) w.u64(static_cast<std::uint64_t>(width));
  w.f64(net.input_scale);
  w.f64(net.momentum_bound);
  w.u64(net.w.size());
  for (double x : net.w) w.f64(x);
  w.close();
}

NetWeights read_net(const std::filesystem::path& path) {
  Reader r(path, "FLKNET01");
  NetWeights net;
  net.hidden.resize(r.count(64));
  for (auto& width : net.hidden) width = static_cast<int>(r.count(1u << 20));
  net.input_scale = r.f64();
  net.momentum_bound = r.f64();
  net.w.resize(r.count());
  for (auto& x : net.w) x = r.f64();
  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return net;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ostringstream os;
  for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << format_double(row[c]);
    os << '\n';
  }
  write_text(path, os.str());
}

void write_slice_csv(const std::filesystem::path& path, const GridSpec& grid, const std::vector<double>& values,
                     int k) {
  if (k < 0 || k >= grid.cells) throw std::invalid_argument("write_slice_csv: plane out of range");
  std::vector<std::vector<double>> rows;
  for (int j = 0; j < grid.cells; ++j)
    for (int i = 0; i < grid.cells; ++i)
      rows.push_back({grid.center_coord(i), grid.center_coord(j), values[grid.index(i, j, k)]});
  write_csv(path, {"x", "y", "value"}, rows);
}

void write_slice_csv(const std::filesystem::path& path, const GridSpec& grid, const std::vector<Vec3>& values,
                     int k) {
  if (k < 0 || k >= grid.cells) throw std::invalid_argument("write_slice_csv: plane out of range");
  std::vector<std::vector<double>> rows;
  for (int j = 0; j < grid.cells; ++j)
    for (int i = 0; i < grid.cells; ++i) {
      const Vec3& v = values[grid.index(i, j, k)];
      rows.push_back({grid.center_coord(i), grid.center_coord(j), v[0], v[1], v[2]});
    }
  write_csv(path, {"x", "y", "jx", "jy", "jz"}, rows);
}

void write_state_csv(const std::filesystem::path& path, const BoidState& state) {
  std::vector<std::vector<double>> rows;
  rows.reserve(state.size());
  for (std::size_t i = 0; i < state.size(); ++i)
    rows.push_back({static_cast<double>(i), state.x[i][0], state.x[i][1], state.x[i][2], state.v[i][0],
                    state.v[i][1], state.v[i][2]});
  write_csv(path, {"agent", "x", "y", "z", "vx", "vy", "vz"}, rows);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace flockid
