#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace phasefold {

/// A logarithm was requested at (or numerically at) the cut locus, angle ~ pi.
/// `fallback` holds the reduced-precision answer built from the symmetric
/// part of the rotation so callers may recover deliberately.
class DegenerateAngleError : public std::runtime_error {
 public:
  DegenerateAngleError(const std::string& what, double angle,
                       const Eigen::Vector3d& fallback)
      : std::runtime_error(what), angle_(angle), fallback_(fallback) {}

  double angle() const noexcept { return angle_; }
  const Eigen::Vector3d& fallback() const noexcept { return fallback_; }

 private:
  double angle_;
  Eigen::Vector3d fallback_;
};

/// The rotational exponential coordinate of a deterministic path came too
/// close to pi; the coordinate-based propagators are no longer meaningful.
class CoordinateEscapeError : public std::runtime_error {
 public:
  CoordinateEscapeError(const std::string& what, double time)
      : std::runtime_error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// A moment propagator left its region of validity (singular mean-equation
/// coefficient, or covariance beyond the configured bound).
class ValidityLostError : public std::runtime_error {
 public:
  ValidityLostError(const std::string& what, double time)
      : std::runtime_error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, int iterations, double residual)
      : std::runtime_error(what), iterations_(iterations), residual_(residual) {}
  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

}  // namespace phasefold
