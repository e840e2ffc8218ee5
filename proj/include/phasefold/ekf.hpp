#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phasefold/dynamics.hpp"
#include "phasefold/lie.hpp"

namespace phasefold {

/// Why and when a propagator stopped early.
struct PropagationFailure {
  std::string reason;
  double time = 0.0;
};

/// Mean (x*, l*) in exponential coordinates of SO(3) x R^3 with covariance.
struct EkfState {
  double t = 0.0;
  Vec3 x = Vec3::Zero();
  Vec3 l = Vec3::Zero();
  Mat6 covariance = Mat6::Zero();
};

struct EkfTrajectory {
  std::vector<EkfState> states;
  std::optional<PropagationFailure> failure;
};

/// Linearization of the coordinate-form dynamics about (x*, l*):
///
///   A = [ S   J_r^-1(x*) I^-1                      ]
///       [ 0   -hat(I^-1 l*) + hat(l*) I^-1 - C I^-1 ]
///
/// where column k of S is (d J_r^-1 / d x_k)(x*) I^-1 l*.
Mat6 system_matrix(const BodyParams& p, const Vec3& x, const Vec3& l);

/// Right-hand side A Sigma + Sigma A^T + B B^T.
Mat6 lyapunov_rate(const Mat6& a, const Mat6& sigma, const Mat6& noise_cov);

/// Propagates the mean along the deterministic path from (0, l*(0)) and the
/// covariance by Heun on the grid k dt, symmetrizing after every step
/// and clipping round-off negative eigenvalues to zero. Stops
/// early (with `failure` set) if the path escapes the coordinate chart.
EkfTrajectory propagate_ekf(const BodyParams& p, const TrajectorySpec& spec, const Mat6& sigma0,
                            double dt, double horizon);

/// z_i = (log R_i - x*; l_i - l*). Propagates DegenerateAngleError.
std::vector<Vec6> ekf_nll_inputs(std::span<const PhaseElement> hs, const EkfState& state);

}  // namespace phasefold
