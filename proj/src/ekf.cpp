#include "phasefold/ekf.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "phasefold/errors.hpp"

namespace phasefold {
namespace {

// Heun from Sigma = 0 leaves tiny negative eigenvalues while the rotation
// block lags the rotation-momentum coupling; project them out.
Mat6 project_psd(const Mat6& sigma) {
  Mat6 s = 0.5 * (sigma + sigma.transpose());
  const Eigen::SelfAdjointEigenSolver<Mat6> eig(s);
  if (eig.eigenvalues()(0) >= 0.0) return s;
  const auto& v = eig.eigenvectors();
  s = v * eig.eigenvalues().cwiseMax(0.0).asDiagonal() * v.transpose();
  return 0.5 * (s + s.transpose());
}

}  // namespace

Mat6 system_matrix(const BodyParams& p, const Vec3& x, const Vec3& l) {
  const Mat3& inv = p.inertia_inv();
  const Vec3 w = inv * l;
  Mat6 a = Mat6::Zero();
  for (int k = 0; k < 3; ++k) a.block<3, 1>(0, k) = lie::jac_right_inv_partial(x, k) * w;
  a.topRightCorner<3, 3>() = lie::jac_right_inv_so3(x) * inv;
  a.bottomRightCorner<3, 3>() = -lie::hat3(w) + lie::hat3(l) * inv - p.viscous() * inv;
  return a;
}

Mat6 lyapunov_rate(const Mat6& a, const Mat6& sigma, const Mat6& noise_cov) {
  return a * sigma + sigma * a.transpose() + noise_cov;
}

EkfTrajectory propagate_ekf(const BodyParams& p, const TrajectorySpec& spec, const Mat6& sigma0,
                            double dt, double horizon) {
  EkfTrajectory out;
  std::vector<DeterministicSample> path;
  try {
    path = integrate_deterministic(p, spec, dt, horizon);
  } catch (const CoordinateEscapeError& e) {
    out.failure = PropagationFailure{e.what(), e.time()};
    const auto valid_steps = static_cast<std::size_t>(std::floor(e.time() / dt + 0.5)) - 1;
    path = integrate_deterministic(p, spec, dt, static_cast<double>(valid_steps) * dt);
  }

  const Mat6 q = p.noise_covariance();
  Mat6 sigma = project_psd(sigma0);
  out.states.reserve(path.size());
  out.states.push_back({path[0].t, path[0].x, path[0].l, sigma});

  Mat6 a_now = system_matrix(p, path[0].x, path[0].l);
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const Mat6 a_next = system_matrix(p, path[k + 1].x, path[k + 1].l);
    const Mat6 k1 = lyapunov_rate(a_now, sigma, q);
    const Mat6 k2 = lyapunov_rate(a_next, sigma + dt * k1, q);
    sigma = project_psd(sigma + 0.5 * dt * (k1 + k2));
    out.states.push_back({path[k + 1].t, path[k + 1].x, path[k + 1].l, sigma});
    a_now = a_next;
  }
  return out;
}

std::vector<Vec6> ekf_nll_inputs(std::span<const PhaseElement> hs, const EkfState& state) {
  std::vector<Vec6> zs(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    zs[i].head<3>() = lie::log_so3(hs[i].rotation) - state.x;
    zs[i].tail<3>() = hs[i].momentum - state.l;
  }
  return zs;
}

}  // namespace phasefold
