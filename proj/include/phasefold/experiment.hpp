#pragma once

// Configuration and pipeline stages of the ensemble-vs-propagator study.
// Stages exchange data only through files in the output directory, so any
// stage can be rerun or diffed on its own.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasefold/dynamics.hpp"
#include "phasefold/eom.hpp"
#include "phasefold/estimator.hpp"
#include "phasefold/sampler.hpp"

namespace phasefold {

/// Malformed configuration. `line` is 0 when the problem is not tied to a
/// line of the file (for example a command-line override).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& field,
              const std::string& message);
  int line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }
  const std::string& message() const noexcept { return message_; }

 private:
  int line_;
  std::string field_;
  std::string message_;
};

/// Upstream artifacts that a stage needs but cannot find.
class MissingInputError : public std::runtime_error {
 public:
  explicit MissingInputError(std::vector<std::filesystem::path> missing);
  const std::vector<std::filesystem::path>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::filesystem::path> missing_;
};

struct ExperimentConfig {
  Vec3 inertia{2.070, 1.532, 1.236};
  double viscous = 1.0;
  double noise = 1.0;
  /// 1 or 2 selects a built-in trajectory; 0 means `custom_coeffs`.
  int trajectory = 1;
  TrajectorySpec custom_coeffs;
  std::size_t particles = 100000;
  double dt = 1e-3;
  double horizon = 1.0;
  std::uint64_t seed = 1;
  double snapshot_stride = 0.05;
  double mean_tolerance = 1e-6;
  int mean_max_iterations = 100;
  double covariance_bound = 1.0;
  bool particles_csv = false;
  bool svg = true;
  std::filesystem::path out_dir = "phasefold_out";

  BodyParams body() const;
  TrajectorySpec trajectory_spec() const;
  SimConfig sim_config() const;
  MeanOptions mean_options() const;
  EomOptions eom_options() const;

  /// Throws ConfigError naming the first invalid field.
  void validate(const std::string& source = "config") const;
};

inline constexpr std::size_t kPaperScaleParticles = 5000000;

/// Parses INI text. Unknown sections or keys and unparsable values raise
/// ConfigError with the offending line.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every setting that influences results, in the same INI dialect, so the
/// file can be fed back through load_config. The output directory is
/// deliberately left out.
std::string resolved_config(const ExperimentConfig& cfg);

namespace files {
inline constexpr const char* kConfig = "config.resolved";
inline constexpr const char* kEnsemble = "ensemble.bin";
inline constexpr const char* kEkf = "ekf_series.csv";
inline constexpr const char* kEom = "eom_series.csv";
inline constexpr const char* kMetrics = "metrics.csv";
inline constexpr const char* kSvg = "metrics.svg";
inline constexpr const char* kError = "error.json";
}  // namespace files

/// Process exit codes of the stages.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitValidityLost = 3,
};

/// Each stage writes config.resolved plus its own artifacts and returns an
/// ExitCode. A propagator that leaves its validity region flushes the states
/// computed so far, records the event in error.json and returns
/// kExitValidityLost.
int run_simulate(const ExperimentConfig& cfg);
int run_propagate_ekf(const ExperimentConfig& cfg);
int run_propagate_eom(const ExperimentConfig& cfg);
/// Throws MissingInputError listing every absent upstream file.
int run_evaluate(const ExperimentConfig& cfg);
/// The four stages in order, through the same files.
int run_full(const ExperimentConfig& cfg);

}  // namespace phasefold
