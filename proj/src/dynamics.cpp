#include "phasefold/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Geometry>

#include "phasefold/errors.hpp"

namespace phasefold {

BodyParams::BodyParams(const Mat3& inertia, const Mat3& viscous, const Mat3& diffusion)
    : inertia_(inertia), viscous_(viscous), diffusion_(diffusion) {
  if (!inertia.allFinite() || !viscous.allFinite() || !diffusion.allFinite()) {
    throw std::invalid_argument("BodyParams: non-finite entry");
  }
  if ((inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12 * inertia.norm()) {
    throw std::invalid_argument("BodyParams: inertia is not symmetric");
  }
  Eigen::LLT<Mat3> llt(inertia);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("BodyParams: inertia is not positive definite");
  }
  inertia_inv_ = llt.solve(Mat3::Identity());
  inertia_inv_ = 0.5 * (inertia_inv_ + inertia_inv_.transpose()).eval();
}

BodyParams BodyParams::diagonal(const Vec3& inertia, double c, double b) {
  if (c < 0.0 || b < 0.0) throw std::invalid_argument("BodyParams: c and b must be >= 0");
  return {inertia.asDiagonal().toDenseMatrix(), c * Mat3::Identity(), b * Mat3::Identity()};
}

BodyParams BodyParams::paper_default() { return diagonal({2.070, 1.532, 1.236}, 1.0, 1.0); }

Mat6 BodyParams::noise_matrix() const {
  Mat6 b = Mat6::Zero();
  b.bottomRightCorner<3, 3>() = diffusion_;
  return b;
}

Mat6 BodyParams::noise_covariance() const {
  const Mat6 b = noise_matrix();
  return b * b.transpose();
}

TrajectorySpec TrajectorySpec::one() {
  TrajectorySpec s;
  s.coeffs[1] = Vec3(0.0, 1.0, 2.0);
  return s;
}

TrajectorySpec TrajectorySpec::two() {
  TrajectorySpec s;
  s.coeffs[0] = Vec3(0.0, 1.0, 1.0);
  s.coeffs[1] = Vec3(0.0, 1.0, 2.0);
  return s;
}

TrajectorySpec TrajectorySpec::by_id(int id) {
  switch (id) {
    case 1:
      return one();
    case 2:
      return two();
    default:
      throw std::invalid_argument("unknown trajectory id " + std::to_string(id));
  }
}

Vec3 momentum_star(const TrajectorySpec& spec, double t) {
  const auto& c = spec.coeffs;
  return c[0] + t * (c[1] + t * (c[2] + t * c[3]));
}

Vec3 momentum_star_dot(const TrajectorySpec& spec, double t) {
  const auto& c = spec.coeffs;
  return c[1] + t * (2.0 * c[2] + t * 3.0 * c[3]);
}

Vec3 torque_star(const TrajectorySpec& spec, const BodyParams& p, double t) {
  const Vec3 l = momentum_star(spec, t);
  const Vec3 w = p.inertia_inv() * l;
  return momentum_star_dot(spec, t) + w.cross(l) + p.viscous() * w;
}

TorqueFn torque_fn(const TrajectorySpec& spec, const BodyParams& p) {
  return [spec, p](double t) { return torque_star(spec, p, t); };
}

Vec3 momentum_rate(const BodyParams& p, const Vec3& l, const Vec3& torque) {
  const Vec3 w = p.inertia_inv() * l;
  return -w.cross(l) - p.viscous() * w + torque;
}

Vec6 drift(const BodyParams& p, const Vec3& l, const Vec3& torque) {
  const Vec3 w = p.inertia_inv() * l;
  Vec6 v;
  v.head<3>() = w;
  v.tail<3>() = -p.viscous() * w + torque;
  return v;
}

Vec6 drift(const BodyParams& p, const TrajectorySpec& spec, const Vec3& l, double t) {
  return drift(p, l, torque_star(spec, p, t));
}

std::pair<Vec3, Vec3> deterministic_rate(const BodyParams& p, const Vec3& x, const Vec3& l,
                                         const Vec3& torque) {
  return {lie::jac_right_inv_so3(x) * (p.inertia_inv() * l), momentum_rate(p, l, torque)};
}

std::size_t step_count(double dt, double horizon) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  if (!(horizon >= 0.0)) throw std::invalid_argument("horizon must be non-negative");
  const double n = std::round(horizon / dt);
  if (std::abs(n * dt - horizon) > 1e-9 * std::max(1.0, horizon)) {
    throw std::invalid_argument("horizon " + std::to_string(horizon) +
                                " is not a multiple of dt " + std::to_string(dt));
  }
  return static_cast<std::size_t>(n);
}

std::vector<DeterministicSample> integrate_deterministic(const BodyParams& p, const TorqueFn& torque,
                                                         const Vec3& x0, const Vec3& l0, double dt,
                                                         double horizon) {
  const std::size_t n = step_count(dt, horizon);
  std::vector<DeterministicSample> out;
  out.reserve(n + 1);
  out.push_back({0.0, x0, l0});

  Vec3 x = x0;
  Vec3 l = l0;
  Vec3 torque_now = torque(0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double t_next = static_cast<double>(k + 1) * dt;
    const Vec3 torque_next = torque(t_next);

    const auto [dx1, dl1] = deterministic_rate(p, x, l, torque_now);
    const Vec3 x_pred = x + dt * dx1;
    const Vec3 l_pred = l + dt * dl1;
    const auto [dx2, dl2] = deterministic_rate(p, x_pred, l_pred, torque_next);
    x += 0.5 * dt * (dx1 + dx2);
    l += 0.5 * dt * (dl1 + dl2);

    if (x.norm() > std::numbers::pi - kCoordinateEscapeMargin) {
      throw CoordinateEscapeError(
          "deterministic rotation coordinate reached |x| = " + std::to_string(x.norm()) +
              " at t = " + std::to_string(t_next),
          t_next);
    }
    out.push_back({t_next, x, l});
    torque_now = torque_next;
  }
  return out;
}

std::vector<DeterministicSample> integrate_deterministic(const BodyParams& p,
                                                         const TrajectorySpec& spec, double dt,
                                                         double horizon) {
  return integrate_deterministic(p, torque_fn(spec, p), Vec3::Zero(), momentum_star(spec, 0.0), dt,
                                 horizon);
}

}  // namespace phasefold
