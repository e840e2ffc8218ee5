#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "phasefold/lie.hpp"

namespace phasefold {

/// Rigid-body parameters: inertia I, viscous coefficient C and the momentum
/// diffusion B' of dl = (...) dt + B' dW.
class BodyParams {
 public:
  /// Throws std::invalid_argument unless I is symmetric positive definite.
  BodyParams(const Mat3& inertia, const Mat3& viscous, const Mat3& diffusion);

  /// I = diag(inertia), C = c I3, B' = b I3.
  static BodyParams diagonal(const Vec3& inertia, double c, double b);
  /// Inertia diag(2.070, 1.532, 1.236) with c = b = 1.
  static BodyParams paper_default();

  const Mat3& inertia() const { return inertia_; }
  const Mat3& inertia_inv() const { return inertia_inv_; }
  const Mat3& viscous() const { return viscous_; }
  const Mat3& diffusion() const { return diffusion_; }

  /// The 6x6 B = [[0, 0], [0, B']].
  Mat6 noise_matrix() const;
  /// B B^T.
  Mat6 noise_covariance() const;

 private:
  Mat3 inertia_;
  Mat3 inertia_inv_;
  Mat3 viscous_;
  Mat3 diffusion_;
};

/// Prescribed momentum trajectory l*(t) = sum_k coeffs[k] t^k, degree <= 3.
struct TrajectorySpec {
  std::array<Vec3, 4> coeffs{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};

  /// l*(t) = (0, t, 2t).
  static TrajectorySpec one();
  /// l*(t) = (0, t + 1, 2t + 1).
  static TrajectorySpec two();
  /// Throws std::invalid_argument for ids other than 1 and 2.
  static TrajectorySpec by_id(int id);
};

using TorqueFn = std::function<Vec3(double)>;

Vec3 momentum_star(const TrajectorySpec& spec, double t);
Vec3 momentum_star_dot(const TrajectorySpec& spec, double t);

/// Deterministic torque that makes l*(t) an exact noise-free solution of
/// dl/dt + (I^-1 l) x l = -C I^-1 l + N*.
Vec3 torque_star(const TrajectorySpec& spec, const BodyParams& p, double t);
TorqueFn torque_fn(const TrajectorySpec& spec, const BodyParams& p);

/// Noise-free Euler right-hand side -(I^-1 l) x l - C I^-1 l + N.
Vec3 momentum_rate(const BodyParams& p, const Vec3& l, const Vec3& torque);

/// Deterministic part of vee6(dh/dt h^-1): (I^-1 l; -C I^-1 l + N).
Vec6 drift(const BodyParams& p, const Vec3& l, const Vec3& torque);
Vec6 drift(const BodyParams& p, const TrajectorySpec& spec, const Vec3& l, double t);

struct DeterministicSample {
  double t = 0.0;
  Vec3 x = Vec3::Zero();  ///< exponential coordinate of R
  Vec3 l = Vec3::Zero();
};

/// Right-hand side of the coordinate-form deterministic system:
/// dx/dt = J_r^-1(x) I^-1 l, dl/dt = momentum_rate(l).
std::pair<Vec3, Vec3> deterministic_rate(const BodyParams& p, const Vec3& x, const Vec3& l,
                                         const Vec3& torque);

/// Coordinates closer than this to pi count as escaped.
inline constexpr double kCoordinateEscapeMargin = 1e-3;

/// Number of steps of size dt covering [0, horizon]. Throws
/// std::invalid_argument if dt <= 0 or horizon is not a multiple of dt.
std::size_t step_count(double dt, double horizon);

/// Heun integration of the deterministic system from (x0, l0); returns
/// step_count + 1 samples on the grid k dt. Throws CoordinateEscapeError if
/// |x| gets within kCoordinateEscapeMargin of pi.
std::vector<DeterministicSample> integrate_deterministic(const BodyParams& p, const TorqueFn& torque,
                                                         const Vec3& x0, const Vec3& l0, double dt,
                                                         double horizon);
/// Starts from x = 0, l = l*(0) and uses torque_star.
std::vector<DeterministicSample> integrate_deterministic(const BodyParams& p,
                                                         const TrajectorySpec& spec, double dt,
                                                         double horizon);

}  // namespace phasefold
