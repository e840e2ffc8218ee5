#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "phasefold/dynamics.hpp"
#include "phasefold/lie.hpp"

namespace phasefold {

struct SimConfig {
  std::size_t particles = 100000;
  double dt = 1e-3;
  double horizon = 1.0;
  std::uint64_t seed = 1;
  /// Sorted times in [0, horizon], each a multiple of dt within 1e-12.
  std::vector<double> snapshot_times;
  /// 0 selects resolve_workers().
  unsigned workers = 0;
};

/// Particle states at one time, stored column-wise: rotation[r][i] is entry r
/// (row-major) of particle i's rotation matrix, momentum[c][i] likewise.
struct Snapshot {
  double t = 0.0;
  std::array<std::vector<double>, 9> rotation;
  std::array<std::vector<double>, 3> momentum;

  explicit Snapshot(double time = 0.0, std::size_t n = 0);

  std::size_t size() const { return momentum[0].size(); }
  PhaseElement element(std::size_t i) const;
  void set(std::size_t i, const Mat3& r, const Vec3& l);
  std::vector<PhaseElement> elements() const;
};

struct Ensemble {
  std::vector<Snapshot> snapshots;

  /// Snapshot recorded at time t (within 1e-9). Throws std::out_of_range.
  const Snapshot& at(double t) const;
};

/// Standard-normal 3-vector scaled by sqrt(dt): the Wiener increment of
/// particle `particle` over step `step`. A pure function of its arguments.
Vec3 wiener_increment(std::uint64_t seed, std::uint64_t particle, std::uint64_t step, double dt);

/// Heun step of dl = momentum_rate dt + B' dW, reusing dW in both stages.
Vec3 step_momentum(const BodyParams& p, const Vec3& l, const Vec3& torque_now,
                   const Vec3& torque_next, double dt, const Vec3& dw);

/// R exp((dt/2)(I^-1 l_now + I^-1 l_next)).
Mat3 step_rotation(const Mat3& r, const BodyParams& p, const Vec3& l_now, const Vec3& l_next,
                   double dt);

/// Simulates cfg.particles independent bodies from R = I, l = l*(0) and
/// records the requested snapshots. Output is bit-identical for any worker
/// count. Throws std::invalid_argument for zero particles or off-grid
/// snapshot times.
Ensemble simulate_ensemble(const BodyParams& p, const TrajectorySpec& spec, const SimConfig& cfg);

/// Streaming form of simulate_ensemble: advances all particles between
/// consecutive snapshot times and passes each snapshot to `sink` as soon as it
/// is reached. Only one snapshot is held in memory.
void simulate_snapshots(const BodyParams& p, const TrajectorySpec& spec, const SimConfig& cfg,
                        const std::function<void(const Snapshot&)>& sink);

/// FNV-1a hash over the bytes of I, C, B' and the trajectory coefficients.
std::uint64_t params_hash(const BodyParams& p, const TrajectorySpec& spec);

/// Evenly spaced times stride, 2 stride, ..., horizon.
std::vector<double> snapshot_grid(double stride, double horizon, double dt);

}  // namespace phasefold
