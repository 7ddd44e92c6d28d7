#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "flockid/config.hpp"
#include "flockid/ident.hpp"
#include "flockid/records.hpp"

namespace flockid::pipeline {

using Log = std::function<void(const std::string&)>;

struct Options {
  unsigned threads = 1;
  Log log;
  SolveMonitor* monitor = nullptr;  ///< receives stats of every forward solve
};

// File names inside a run directory.
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kTrajectory = "trajectory.bin";
inline constexpr const char* kHistograms = "histograms.bin";
inline constexpr const char* kDensity = "density.bin";
inline constexpr const char* kMomentum = "momentum.bin";
inline constexpr const char* kCheckpoint = "net.bin";
inline constexpr const char* kTheta = "theta.json";

/// Loaded dataset: observed densities and momenta at every sample time.
struct Dataset {
  GridSpec grid;
  FieldSeries density;
  FieldSeries momentum;
  std::string config_hash;
};
Dataset load_dataset(const std::filesystem::path& dir);

/// Boid simulation, histograms, q and j fields, manifest.
void cmd_generate(const RunConfig& cfg, const std::filesystem::path& out, const Options& opt = {});

struct FitSummary {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t parameters = 0;
};
/// Trains the initial-condition network on the sample at ident.t0.
FitSummary cmd_fit_init(const RunConfig& cfg, const std::filesystem::path& dataset,
                        const std::filesystem::path& out, const Options& opt = {});

struct IdentSummary {
  NewtonResult result;
  PdeParams theta;
  std::vector<double> times;
  std::vector<double> h2;  ///< Hellinger trace at theta
  double final_loss = 0.0;
  double initial_loss = 0.0;
};
/// Newton-CG identification. With `twin`, observations come from the solver
/// at twin.truth and the start point is truth * (1 + perturbation).
IdentSummary cmd_identify(const RunConfig& cfg, const std::filesystem::path& dataset,
                          const std::filesystem::path& checkpoint, const std::filesystem::path& out, bool twin,
                          const Options& opt = {});

struct EvalSummary {
  double loss = 0.0;
  double max_mass_drift = 0.0;
  double min_rho = 0.0;
  std::size_t steps = 0;
};
/// Forward solve at the parameters stored in `theta_file`.
EvalSummary cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& dataset,
                         const std::filesystem::path& checkpoint, const std::filesystem::path& theta_file,
                         const std::filesystem::path& out, const Options& opt = {});

void write_theta(const std::filesystem::path& path, const PdeParams& p);
PdeParams read_theta(const std::filesystem::path& path);

}  // namespace flockid::pipeline
