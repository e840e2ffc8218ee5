#pragma once

// Second-moment closure of the Fokker-Planck equation on the phase group.
//
// The mean mu and covariance Sigma are defined through k = h mu^-1, so that
// E[log k] = 0 and Sigma = E[log k log k^T]. Differentiating both moments
// under the Fokker-Planck flow and dropping third and higher moments of log k
// gives
//
//   G1 + G2 + G3 + G4 = 0            (implicit equation for (dmu/dt mu^-1)^vee)
//   dSigma/dt = F1 + F2 + F3 + F4
//
// Two matrices summarize the second moments: A1 = E[ad_X ad_X] (6x6, acts on
// algebra vectors) and A2 = E[X X] (4x4, acts on homogeneous points such as
// mu e4 = (l_mu; 1)).

#include <optional>
#include <vector>

#include "phasefold/dynamics.hpp"
#include "phasefold/ekf.hpp"
#include "phasefold/lie.hpp"

namespace phasefold {

struct EomState {
  double t = 0.0;
  PhaseElement mean;
  Mat6 covariance = Mat6::Zero();
};

struct EomTrajectory {
  std::vector<EomState> states;
  std::optional<PropagationFailure> failure;
};

struct EomOptions {
  /// Largest admissible covariance eigenvalue.
  double covariance_bound = 1.0;
  /// Largest admissible condition number of I + A1/12.
  double condition_limit = 1e6;
};

/// Q_G = [-I^-1; C I^-1] [I3 | 0], so that the negated drift is
/// m = Q_G (h e4) - tau.
Mat64 build_qg(const BodyParams& p);
/// tau = (0; N*).
Vec6 build_tau(const Vec3& torque);

struct SigmaBlocks {
  Mat3 prime;         ///< E[hat(a) hat(a)]
  Mat3 double_prime;  ///< E[hat(a) hat(b) + hat(b) hat(a)]
  Vec3 sigma;         ///< E[-hat(a) b] = -E[a x b]
};

SigmaBlocks sigma_blocks(const Mat6& sigma);
/// [[S', 0], [S'', S']]
Mat6 a1_of_sigma(const Mat6& sigma);
/// [[S', s], [0, 0]]
Mat4 a2_of_sigma(const Mat6& sigma);

struct GTerms {
  Vec6 g1 = Vec6::Zero();
  Vec6 g2 = Vec6::Zero();
  Vec6 g3 = Vec6::Zero();
  /// G4 = g4_coefficient * (dmu/dt mu^-1)^vee, with g4_coefficient = -(I + A1/12).
  Mat6 g4_coefficient = -Mat6::Identity();
};

GTerms g_terms(const BodyParams& p, const Vec3& torque, const PhaseElement& mu, const Mat6& sigma);

/// Solves G1 + G2 + G3 + G4 = 0 for (dmu/dt mu^-1)^vee. Throws
/// ValidityLostError when I + A1/12 is too ill-conditioned.
Vec6 mu_dot(const BodyParams& p, const Vec3& torque, const PhaseElement& mu, const Mat6& sigma,
            double t = 0.0, const EomOptions& opts = {});

struct FTerms {
  Mat6 f1 = Mat6::Zero();
  Mat6 f2 = Mat6::Zero();
  Mat6 f3 = Mat6::Zero();
  Mat6 f4 = Mat6::Zero();

  Mat6 total() const { return f1 + f2 + f3 + f4; }
};

/// The four covariance-rate terms given the mean velocity v = (dmu/dt mu^-1)^vee.
FTerms f_terms(const BodyParams& p, const Vec3& torque, const PhaseElement& mu, const Mat6& sigma,
               const Vec6& v);

/// Symmetrized F1 + F2 + F3 + F4.
Mat6 covariance_rate(const BodyParams& p, const Vec3& torque, const PhaseElement& mu,
                     const Mat6& sigma, const Vec6& v);

/// Heun co-integration from mu(0) = h(I, l*(0)), Sigma(0) = 0, with the mean
/// advanced as mu <- exp(dt v) mu. Stops early (with `failure` set) when the
/// mean equation degenerates or the covariance leaves its admissible range.
EomTrajectory propagate_eom(const BodyParams& p, const TrajectorySpec& spec, double dt,
                            double horizon, const EomOptions& opts = {});

}  // namespace phasefold
