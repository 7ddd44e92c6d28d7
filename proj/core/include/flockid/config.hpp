#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flockid/boids.hpp"
#include "flockid/hydro.hpp"
#include "flockid/ident.hpp"
#include "flockid/initfit.hpp"
#include "flockid/workspace.hpp"

namespace flockid {

/// Everything a pipeline run needs. Loaded from a sectioned key = value text
/// file; see configs/README.md for the grammar.
struct RunConfig {
  struct WorkspaceSection {
    double half_width = 5.0;
    std::vector<Cube> obstacles = Workspace::standard().obstacles();
  } workspace;

  struct BoidsSection {
    InitialSampling sampling;
    double dt = 1e-3;
    double duration = 5.0;
    std::size_t sample_every = 50;
    int max_reflections = 8;
  } boids;

  struct GridSection {
    int cells = 11;
    double v_max = 0.0;  ///< 0 = take the maximum from the trajectory
  } grid;

  InitFitConfig initfit;
  SolverConfig hydro;

  struct IdentSection {
    double t0 = 0.0;
    double tf = 1.0;
    NewtonConfig newton;
    double failure_loss = 10.0;
    TimeMatching matching = TimeMatching::interpolate;
    PdeParams initial;
  } ident;

  struct TwinSection {
    PdeParams truth;
    double perturbation = 0.2;
  } twin;

  struct OutputSection {
    std::string dir = "out";
    std::vector<double> snapshot_times{0.0};
    int slice_plane = -1;  ///< -1 = middle plane
  } output;

  Workspace make_workspace() const;
  /// Cross-field checks. Throws ConfigError.
  void validate() const;
};

/// Throws ConfigError with "line N:" prefixes on syntax errors, unknown
/// sections or keys, and malformed values.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text: every key in a fixed order, shortest round-trip numbers.
std::string print_config(const RunConfig& cfg);

/// FNV-1a 64-bit hash of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace flockid
