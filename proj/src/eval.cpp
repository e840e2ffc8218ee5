#include "phasefold/eval.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "phasefold/parallel.hpp"

namespace phasefold {
namespace {

template <class State>
const State& state_at(std::span<const State> states, double t, const char* name) {
  for (const auto& s : states) {
    if (std::abs(s.t - t) < 1e-9) return s;
  }
  throw std::invalid_argument(std::string(name) + " series has no state at snapshot t = " +
                              std::to_string(t));
}

// A propagated covariance that is still singular (no noise, or t = 0)
// defines no density; such rows carry NaN likelihoods.
double nll_or_nan(std::span<const Vec6> zs, const Mat6& sigma) {
  try {
    return nll(zs, sigma);
  } catch (const std::domain_error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

double frobenius_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("frobenius_error: shape mismatch");
  }
  return (a - b).norm();
}

double nll(std::span<const Vec6> zs, const Mat6& sigma) {
  if (zs.empty()) throw std::invalid_argument("nll: empty sample");
  const Eigen::SelfAdjointEigenSolver<Mat6> eig(0.5 * (sigma + sigma.transpose()));
  const auto& ev = eig.eigenvalues();
  if (!(ev(0) > 0.0) || !(ev(5) / ev(0) < 1e12)) {
    throw std::domain_error("nll: covariance is singular or ill-conditioned");
  }
  const Eigen::LLT<Mat6> llt(sigma);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();

  // Pairwise accumulation of the quadratic form.
  std::vector<double> q(zs.size());
  for (std::size_t i = 0; i < zs.size(); ++i) {
    q[i] = llt.matrixL().solve(zs[i]).squaredNorm();
  }
  for (std::size_t width = 1; width < q.size(); width *= 2) {
    for (std::size_t i = 0; i + width < q.size(); i += 2 * width) q[i] += q[i + width];
  }
  const double n = static_cast<double>(zs.size());
  return 3.0 * std::log(2.0 * std::numbers::pi) + 0.5 * log_det + q[0] / (2.0 * n);
}

std::vector<Vec6> eom_nll_inputs(std::span<const PhaseElement> hs, const PhaseElement& mu) {
  const PhaseElement mu_inv = lie::inverse(mu);
  std::vector<Vec6> zs(hs.size());
  parallel_for(hs.size(), resolve_workers(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) zs[i] = lie::log_group(lie::compose(hs[i], mu_inv));
  });
  return zs;
}

double eom_group_density(const PhaseElement& h, const EomState& state) {
  const Vec6 y = lie::log_group(lie::compose(h, lie::inverse(state.mean)));
  const Eigen::LLT<Mat6> llt(state.covariance);
  if (llt.info() != Eigen::Success) throw std::domain_error("eom_group_density: singular covariance");
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double quad = llt.matrixL().solve(y).squaredNorm();
  const double coord = std::exp(-0.5 * quad - 0.5 * log_det) / std::pow(2.0 * std::numbers::pi, 3);
  return coord / lie::det_jac_left(y);
}

MetricRow evaluate_snapshot(const Snapshot& snap, const EkfState& ekf, const EomState& eom,
                            const MeanOptions& opts, MeanDiagnostics* diagnostics) {
  const std::vector<PhaseElement> hs = snap.elements();
  const GroupMeanResult gm = group_mean(hs, opts);
  const ProductMean pm = product_mean(hs, opts);
  if (diagnostics != nullptr) *diagnostics = {gm, pm.iterations, pm.residual};

  MetricRow row;
  row.t = snap.t;
  row.err_rot_eom = frobenius_error(gm.mean.rotation, eom.mean.rotation);
  row.err_mom_eom = frobenius_error(gm.mean.momentum, eom.mean.momentum);
  row.err_rot_ekf = frobenius_error(pm.rotation, lie::exp_so3(ekf.x));
  row.err_mom_ekf = frobenius_error(pm.momentum, ekf.l);
  row.nll_ekf = nll_or_nan(ekf_nll_inputs(hs, ekf), ekf.covariance);
  row.nll_eom = nll_or_nan(eom_nll_inputs(hs, eom.mean), eom.covariance);
  row.nll_diff = row.nll_eom - row.nll_ekf;
  return row;
}

MetricSeries evaluate_all(const Ensemble& ensemble, std::span<const EkfState> ekf,
                          std::span<const EomState> eom, const MeanOptions& opts) {
  MetricSeries out;
  for (const Snapshot& snap : ensemble.snapshots) {
    out.rows.push_back(evaluate_snapshot(snap, state_at(ekf, snap.t, "EKF"),
                                         state_at(eom, snap.t, "EOM"), opts));
  }
  return out;
}

}  // namespace phasefold
