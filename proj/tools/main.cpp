#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "flockid/errors.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;
using namespace flockid;

int main(int argc, char** argv) {
  CLI::App app{"flockid: Boid data generation and hydrodynamic parameter identification"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  unsigned threads = 1;
  bool quiet = false;
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--seed", seed, "override boids.seed");
  app.add_option("--out", out_dir, "output directory (default: output.dir)");
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 256u));
  app.add_flag("-q,--quiet", quiet, "suppress progress messages");

  std::string dataset, checkpoint, theta;
  bool twin = false;
  auto* gen = app.add_subcommand("generate", "simulate Boids and write histograms and densities");
  auto* fit = app.add_subcommand("fit-init", "fit the initial-condition network");
  fit->add_option("--dataset", dataset, "dataset directory (default: --out)");
  auto* ident = app.add_subcommand("identify", "identify the PDE parameters");
  ident->add_option("--dataset", dataset, "dataset directory (default: --out)");
  ident->add_option("--checkpoint", checkpoint, "network checkpoint (default: <out>/net.bin)");
  ident->add_flag("--twin", twin, "fit data generated by the solver at twin.truth");
  auto* eval = app.add_subcommand("evaluate", "forward solve and metrics at given parameters");
  eval->add_option("--dataset", dataset, "dataset directory (default: --out)");
  eval->add_option("--checkpoint", checkpoint, "network checkpoint (default: <out>/net.bin)");
  eval->add_option("--theta", theta, "parameter file (default: <out>/theta.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) cfg.boids.sampling.seed = *seed;
    cfg.validate();
    const fs::path out = out_dir.empty() ? fs::path(cfg.output.dir) : fs::path(out_dir);
    const fs::path data = dataset.empty() ? out : fs::path(dataset);
    const fs::path ckpt = checkpoint.empty() ? out / pipeline::kCheckpoint : fs::path(checkpoint);

    pipeline::Options opt;
    opt.threads = threads;
    if (!quiet) opt.log = [](const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); };

    if (gen->parsed()) {
      pipeline::cmd_generate(cfg, out, opt);
    } else if (fit->parsed()) {
      pipeline::cmd_fit_init(cfg, data, out, opt);
    } else if (ident->parsed()) {
      const auto sum = pipeline::cmd_identify(cfg, data, ckpt, out, twin, opt);
      std::printf("final L2 %s after %zu Newton iterations (%s)\n", format_double(sum.final_loss).c_str(),
                  sum.result.iterations.size(), sum.result.termination.c_str());
    } else if (eval->parsed()) {
      const fs::path th = theta.empty() ? out / pipeline::kTheta : fs::path(theta);
      const auto sum = pipeline::cmd_evaluate(cfg, data, ckpt, th, out, opt);
      std::printf("L2 %s, mass drift %s, min rho %s\n", format_double(sum.loss).c_str(),
                  format_double(sum.max_mass_drift).c_str(), format_double(sum.min_rho).c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }
  return 0;
}
