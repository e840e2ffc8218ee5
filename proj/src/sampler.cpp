#include "phasefold/sampler.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>
#include <string>

#include "phasefold/parallel.hpp"

namespace phasefold {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform on the open interval (0, 1).
double to_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

Snapshot::Snapshot(double time, std::size_t n) : t(time) {
  for (auto& c : rotation) c.assign(n, 0.0);
  for (auto& c : momentum) c.assign(n, 0.0);
}

PhaseElement Snapshot::element(std::size_t i) const {
  PhaseElement h;
  for (int r = 0; r < 9; ++r) h.rotation(r / 3, r % 3) = rotation[r][i];
  for (int c = 0; c < 3; ++c) h.momentum(c) = momentum[c][i];
  return h;
}

void Snapshot::set(std::size_t i, const Mat3& r, const Vec3& l) {
  for (int k = 0; k < 9; ++k) rotation[k][i] = r(k / 3, k % 3);
  for (int c = 0; c < 3; ++c) momentum[c][i] = l(c);
}

std::vector<PhaseElement> Snapshot::elements() const {
  std::vector<PhaseElement> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = element(i);
  return out;
}

const Snapshot& Ensemble::at(double t) const {
  for (const auto& s : snapshots) {
    if (std::abs(s.t - t) < 1e-9) return s;
  }
  throw std::out_of_range("ensemble has no snapshot at t = " + std::to_string(t));
}

Vec3 wiener_increment(std::uint64_t seed, std::uint64_t particle, std::uint64_t step, double dt) {
  const std::uint64_t key = splitmix64(splitmix64(splitmix64(seed) ^ particle) ^ step);
  std::array<double, 4> z{};
  for (int pair = 0; pair < 2; ++pair) {
    const double u1 = to_unit(splitmix64(key + 2 * pair));
    const double u2 = to_unit(splitmix64(key + 2 * pair + 1));
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    z[2 * pair] = r * std::cos(phi);
    z[2 * pair + 1] = r * std::sin(phi);
  }
  return std::sqrt(dt) * Vec3(z[0], z[1], z[2]);
}

Vec3 step_momentum(const BodyParams& p, const Vec3& l, const Vec3& torque_now,
                   const Vec3& torque_next, double dt, const Vec3& dw) {
  const Vec3 noise = p.diffusion() * dw;
  const Vec3 k1 = momentum_rate(p, l, torque_now) * dt + noise;
  const Vec3 k2 = momentum_rate(p, l + k1, torque_next) * dt + noise;
  return l + 0.5 * (k1 + k2);
}

Mat3 step_rotation(const Mat3& r, const BodyParams& p, const Vec3& l_now, const Vec3& l_next,
                   double dt) {
  return r * lie::exp_so3(0.5 * dt * (p.inertia_inv() * (l_now + l_next)));
}

std::vector<double> snapshot_grid(double stride, double horizon, double dt) {
  const std::size_t per = step_count(dt, stride);
  const std::size_t total = step_count(dt, horizon);
  if (per == 0) throw std::invalid_argument("snapshot stride must be at least dt");
  std::vector<double> out;
  for (std::size_t k = per; k <= total; k += per) out.push_back(static_cast<double>(k) * dt);
  return out;
}

namespace {

// Step index of each snapshot time, validated against the grid.
std::vector<std::size_t> snapshot_steps(const SimConfig& cfg, std::size_t n_steps) {
  std::vector<std::size_t> steps;
  for (double t : cfg.snapshot_times) {
    const double k = std::round(t / cfg.dt);
    if (t < 0.0 || std::abs(k * cfg.dt - t) > 1e-12 || k > static_cast<double>(n_steps)) {
      throw std::invalid_argument("snapshot time " + std::to_string(t) +
                                  " is not on the dt grid within [0, horizon]");
    }
    const auto ks = static_cast<std::size_t>(k);
    if (!steps.empty() && ks <= steps.back()) {
      throw std::invalid_argument("snapshot times must be strictly increasing");
    }
    steps.push_back(ks);
  }
  return steps;
}

}  // namespace

void simulate_snapshots(const BodyParams& p, const TrajectorySpec& spec, const SimConfig& cfg,
                        const std::function<void(const Snapshot&)>& sink) {
  if (cfg.particles == 0) throw std::invalid_argument("simulate_ensemble: particle count is zero");
  const std::size_t n_steps = step_count(cfg.dt, cfg.horizon);
  const std::vector<std::size_t> steps = snapshot_steps(cfg, n_steps);

  std::vector<Vec3> torque(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k) {
    torque[k] = torque_star(spec, p, static_cast<double>(k) * cfg.dt);
  }

  // The working state doubles as the snapshot buffer handed to the sink.
  Snapshot state(0.0, cfg.particles);
  const Vec3 l0 = momentum_star(spec, 0.0);
  for (std::size_t i = 0; i < cfg.particles; ++i) state.set(i, Mat3::Identity(), l0);

  const unsigned workers = resolve_workers(cfg.workers);
  std::size_t done = 0;
  for (std::size_t target : steps) {
    parallel_for(cfg.particles, workers, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const PhaseElement h = state.element(i);
        Mat3 r = h.rotation;
        Vec3 l = h.momentum;
        for (std::size_t k = done; k < target; ++k) {
          const Vec3 dw = wiener_increment(cfg.seed, i, k, cfg.dt);
          const Vec3 l_next = step_momentum(p, l, torque[k], torque[k + 1], cfg.dt, dw);
          r = step_rotation(r, p, l, l_next, cfg.dt);
          l = l_next;
        }
        state.set(i, r, l);
      }
    });
    done = target;
    state.t = static_cast<double>(target) * cfg.dt;
    sink(state);
  }
}

Ensemble simulate_ensemble(const BodyParams& p, const TrajectorySpec& spec, const SimConfig& cfg) {
  Ensemble ens;
  simulate_snapshots(p, spec, cfg, [&ens](const Snapshot& s) { ens.snapshots.push_back(s); });
  return ens;
}

std::uint64_t params_hash(const BodyParams& p, const TrajectorySpec& spec) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const double* data, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &data[i], sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  };
  feed(p.inertia().data(), 9);
  feed(p.viscous().data(), 9);
  feed(p.diffusion().data(), 9);
  for (const auto& c : spec.coeffs) feed(c.data(), 3);
  return h;
}

}  // namespace phasefold
