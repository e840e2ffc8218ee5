// phasefold: runs the ensemble / EKF / EOM comparison pipeline.
//
//   phasefold full --config study.ini --out runs/traj1
//   phasefold simulate --trajectory 2 --particles 20000 --out runs/t2
//
// Exit status: 0 success, 1 runtime failure, 2 usage/config/input error,
// 3 a propagator left its validity region (partial results and error.json).

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "phasefold/experiment.hpp"
#include "phasefold/io.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<int> trajectory;
  std::optional<std::size_t> particles;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
  std::optional<double> viscous;
  bool paper_scale = false;
  std::optional<std::string> out;
};

phasefold::ExperimentConfig resolve(const Overrides& o) {
  phasefold::ExperimentConfig cfg;
  if (!o.config.empty()) cfg = phasefold::load_config(o.config);
  if (o.trajectory) cfg.trajectory = *o.trajectory;
  if (o.paper_scale) cfg.particles = phasefold::kPaperScaleParticles;
  if (o.particles) cfg.particles = *o.particles;
  if (o.seed) cfg.seed = *o.seed;
  if (o.noise) cfg.noise = *o.noise;
  if (o.viscous) cfg.viscous = *o.viscous;
  if (o.out) cfg.out_dir = *o.out;
  cfg.validate("command line");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty propagation for a stochastically forced rigid body: Monte-Carlo "
               "ensembles versus EKF and EOM moment propagators."};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--trajectory", o.trajectory, "Built-in momentum trajectory")
      ->check(CLI::IsMember({1, 2}));
  auto* particles = app.add_option("--particles", o.particles, "Particle count N")
                        ->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "Base seed of the noise streams");
  app.add_option("--noise", o.noise, "Diffusion coefficient b (B' = b I)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--viscous", o.viscous, "Viscous coefficient c (C = c I)")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--paper-scale", o.paper_scale, "Use 5e6 particles")->excludes(particles);
  app.add_option("--out", o.out, "Output directory");

  using Stage = int (*)(const phasefold::ExperimentConfig&);
  Stage stage = nullptr;
  auto add = [&](const char* name, const char* help, Stage fn) {
    app.add_subcommand(name, help)->callback([&stage, fn] { stage = fn; });
  };
  add("simulate", "Sample the particle ensemble (ensemble.bin)", phasefold::run_simulate);
  add("propagate-ekf", "Propagate the EKF baseline (ekf_series.csv)", phasefold::run_propagate_ekf);
  add("propagate-eom", "Propagate the EOM moments (eom_series.csv)", phasefold::run_propagate_eom);
  add("evaluate", "Compare propagators with the ensemble (metrics.csv)", phasefold::run_evaluate);
  add("full", "Run all four stages in order", phasefold::run_full);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : phasefold::kExitUsage;
  }

  try {
    const int rc = stage(resolve(o));
    if (rc == phasefold::kExitValidityLost) {
      std::cerr << "phasefold: a propagator lost validity; see error.json in the output directory\n";
    }
    return rc;
  } catch (const phasefold::ConfigError& e) {
    std::cerr << "phasefold: config error: " << e.what() << '\n';
    return phasefold::kExitUsage;
  } catch (const phasefold::MissingInputError& e) {
    std::cerr << "phasefold: " << e.what() << '\n';
    return phasefold::kExitUsage;
  } catch (const phasefold::io::FormatError& e) {
    std::cerr << "phasefold: " << e.what() << '\n';
    return phasefold::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "phasefold: error: " << e.what() << '\n';
    return phasefold::kExitFailure;
  }
}
