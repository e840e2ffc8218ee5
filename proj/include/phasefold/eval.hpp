#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "phasefold/ekf.hpp"
#include "phasefold/eom.hpp"
#include "phasefold/estimator.hpp"
#include "phasefold/sampler.hpp"

namespace phasefold {

/// ||a - b||_F. Throws std::invalid_argument on a shape mismatch.
double frobenius_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Per-sample normalized Gaussian negative log-likelihood
///
///   log((2 pi)^3 |det Sigma|^(1/2)) + (1 / 2N) sum_i z_i^T Sigma^-1 z_i.
///
/// Throws std::domain_error unless Sigma is positive definite with condition
/// number below 1e12, std::invalid_argument for an empty sample.
double nll(std::span<const Vec6> zs, const Mat6& sigma);

/// z_i = log(h_i mu^-1), the exponential-coordinate residuals about the EOM mean.
std::vector<Vec6> eom_nll_inputs(std::span<const PhaseElement> hs, const PhaseElement& mu);

/// Density of the EOM concentrated Gaussian with respect to the invariant
/// measure on the group: the coordinate density at y = log(h mu^-1) divided
/// by |det J_l(y)|.
double eom_group_density(const PhaseElement& h, const EomState& state);

struct MetricRow {
  double t = 0.0;
  double err_rot_ekf = 0.0;
  double err_rot_eom = 0.0;
  double err_mom_ekf = 0.0;
  double err_mom_eom = 0.0;
  double nll_ekf = 0.0;
  double nll_eom = 0.0;
  double nll_diff = 0.0;
};

struct MetricSeries {
  std::vector<MetricRow> rows;
};

/// Convergence record of the two sample means behind one metric row.
struct MeanDiagnostics {
  GroupMeanResult group;
  int product_iterations = 0;
  double product_residual = 0.0;
};

/// Metrics of one snapshot: EOM is compared with the sample group mean, EKF
/// with the sample product mean. A singular propagated covariance yields NaN
/// likelihood columns instead of an exception.
MetricRow evaluate_snapshot(const Snapshot& snap, const EkfState& ekf, const EomState& eom,
                            const MeanOptions& opts = {}, MeanDiagnostics* diagnostics = nullptr);

/// Evaluates every snapshot of the ensemble against the propagator states at
/// the same time. Throws std::invalid_argument when a snapshot time has no
/// matching propagator state.
MetricSeries evaluate_all(const Ensemble& ensemble, std::span<const EkfState> ekf,
                          std::span<const EomState> eom, const MeanOptions& opts = {});

}  // namespace phasefold
