#include "phasefold/eom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "phasefold/errors.hpp"

namespace phasefold {
namespace {

const std::array<Mat6, 6>& ad_basis() {
  static const std::array<Mat6, 6> ads = [] {
    std::array<Mat6, 6> a;
    for (std::size_t i = 0; i < 6; ++i) a[i] = lie::little_ad_basis(i);
    return a;
  }();
  return ads;
}

const std::array<Mat4, 6>& hat_basis() {
  static const std::array<Mat4, 6> es = [] {
    std::array<Mat4, 6> e;
    for (std::size_t i = 0; i < 6; ++i) e[i] = lie::basis(i);
    return e;
  }();
  return es;
}

Vec4 homogeneous_momentum(const PhaseElement& mu) {
  Vec4 m;
  m << mu.momentum, 1.0;
  return m;
}

// Column m is Q_G E_m (mu e4): the first-order change of Q_G (k mu e4) in
// direction x_m.
Mat6 drift_sensitivity(const Mat64& q, const Vec4& m) {
  Mat6 d;
  for (int k = 0; k < 6; ++k) d.col(k) = q * (hat_basis()[k] * m);
  return d;
}

Mat6 sym_ad(const Mat6& sigma, const Mat6& ad) {
  return sigma * ad.transpose() + ad * sigma;
}

}  // namespace

Mat64 build_qg(const BodyParams& p) {
  Mat64 q = Mat64::Zero();
  q.topLeftCorner<3, 3>() = -p.inertia_inv();
  q.bottomLeftCorner<3, 3>() = p.viscous() * p.inertia_inv();
  return q;
}

Vec6 build_tau(const Vec3& torque) {
  Vec6 tau = Vec6::Zero();
  tau.tail<3>() = torque;
  return tau;
}

SigmaBlocks sigma_blocks(const Mat6& sigma) {
  // One-based accessor to match the usual index notation.
  auto s = [&](int i, int j) { return sigma(i - 1, j - 1); };
  SigmaBlocks b;
  // clang-format off
  b.prime <<
      -s(2, 2) - s(3, 3), s(1, 2),             s(1, 3),
       s(1, 2),          -s(1, 1) - s(3, 3),   s(2, 3),
       s(1, 3),           s(2, 3),            -s(1, 1) - s(2, 2);
  b.double_prime <<
      -2.0 * (s(5, 2) + s(6, 3)), s(4, 2) + s(5, 1),           s(4, 3) + s(6, 1),
       s(4, 2) + s(5, 1),         -2.0 * (s(4, 1) + s(6, 3)),  s(5, 3) + s(6, 2),
       s(4, 3) + s(6, 1),          s(5, 3) + s(6, 2),          -2.0 * (s(4, 1) + s(5, 2));
  // clang-format on
  // The rotational block of hat6 is -hat(a), which makes E[X^2] e4 = -E[a x b].
  b.sigma << s(3, 5) - s(6, 2), s(6, 1) - s(3, 4), s(4, 2) - s(5, 1);
  return b;
}

Mat6 a1_of_sigma(const Mat6& sigma) {
  const SigmaBlocks b = sigma_blocks(sigma);
  Mat6 a = Mat6::Zero();
  a.topLeftCorner<3, 3>() = b.prime;
  a.bottomRightCorner<3, 3>() = b.prime;
  a.bottomLeftCorner<3, 3>() = b.double_prime;
  return a;
}

Mat4 a2_of_sigma(const Mat6& sigma) {
  const SigmaBlocks b = sigma_blocks(sigma);
  Mat4 a = Mat4::Zero();
  a.topLeftCorner<3, 3>() = b.prime;
  a.topRightCorner<3, 1>() = b.sigma;
  return a;
}

GTerms g_terms(const BodyParams& p, const Vec3& torque, const PhaseElement& mu, const Mat6& sigma) {
  const auto& ad = ad_basis();
  const Mat64 q = build_qg(p);
  const Vec6 tau = build_tau(torque);
  const Mat6 bb = p.noise_covariance();
  const Mat6 a1 = a1_of_sigma(sigma);
  const Mat4 a2 = a2_of_sigma(sigma);
  const Vec4 m = homogeneous_momentum(mu);
  const Vec6 qm = q * m;
  const Mat6 d = drift_sensitivity(q, m);

  GTerms g;

  // E[J_l^-1 e_i e_j^T k] contracted with Q_G and mu e4, to second order.
  Vec6 bch = Vec6::Zero();
  for (int i = 0; i < 6; ++i) bch += ad[i] * sigma * d.row(i).transpose();
  g.g1 = -(qm + 0.5 * q * (a2 * m) + 0.5 * bch + a1 * qm / 12.0);

  g.g2 = tau + a1 * tau / 12.0;

  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      const double w = bb(i, j);
      if (w == 0.0) continue;
      const Vec6 ej = Vec6::Unit(j);
      const Vec6 ei = Vec6::Unit(i);
      g.g3 += w * (0.25 * ad[i] * ej + ad[i] * a1 * ej / 48.0);
      // (1/48) sum_mn Sigma_mn ([[E_m, E_i], [E_n, E_j]] + [E_m, [[E_j, E_n], E_i]])^vee
      Vec6 acc = Vec6::Zero();
      for (int mi = 0; mi < 6; ++mi) {
        for (int ni = 0; ni < 6; ++ni) {
          const double s = sigma(mi, ni);
          if (s == 0.0) continue;
          acc += s * (lie::little_ad(ad[mi] * ei) * (ad[ni] * ej) +
                      ad[mi] * (lie::little_ad(ad[j] * Vec6::Unit(ni)) * ei));
        }
      }
      g.g3 += w * acc / 48.0;
    }
  }

  g.g4_coefficient = -(Mat6::Identity() + a1 / 12.0);
  return g;
}

Vec6 mu_dot(const BodyParams& p, const Vec3& torque, const PhaseElement& mu, const Mat6& sigma,
            double t, const EomOptions& opts) {
  const GTerms g = g_terms(p, torque, mu, sigma);
  const Mat6 k = -g.g4_coefficient;
  const Eigen::JacobiSVD<Mat6> svd(k);
  const auto& sv = svd.singularValues();
  const double cond = sv(0) / sv(5);
  if (!(cond < opts.condition_limit)) {
    throw ValidityLostError("mean equation coefficient has condition number " +
                                std::to_string(cond) + " at t = " + std::to_string(t),
                            t);
  }
  return k.partialPivLu().solve(g.g1 + g.g2 + g.g3);
}

FTerms f_terms(const BodyParams& p, const Vec3& torque, const PhaseElement& mu, const Mat6& sigma,
               const Vec6& v) {
  const auto& ad = ad_basis();
  const Mat64 q = build_qg(p);
  const Mat6 bb = p.noise_covariance();
  const Mat6 a1 = a1_of_sigma(sigma);
  const Vec4 m = homogeneous_momentum(mu);
  const Mat6 d = drift_sensitivity(q, m);

  FTerms f;
  f.f1 = -(0.5 * sym_ad(sigma, lie::little_ad(q * m)) + sigma * d.transpose() + d * sigma);
  f.f2 = 0.5 * sym_ad(sigma, lie::little_ad(build_tau(torque)));

  Mat6 eighth = Mat6::Zero();
  Mat6 twenty_fourth = Mat6::Zero();
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      const double w = bb(i, j);
      if (w == 0.0) continue;
      const Mat6 eji = Vec6::Unit(j) * Vec6::Unit(i).transpose();
      const Mat6 t1 = ad[i] * ad[j] * sigma;
      const Mat6 t2 = ad[i] * sigma * ad[j].transpose();
      const Mat6 t3 = eji * a1.transpose();
      const Mat6 t4 = a1 * eji;
      const Mat6 t5 = -ad[j] * ad[i] * sigma;
      const Mat6 t6 = -lie::little_ad(ad[j] * Vec6::Unit(i)) * sigma;
      eighth += w * (t1 + t1.transpose() + t2 + t2.transpose());
      twenty_fourth +=
          w * (t3 + t3.transpose() + t4 + t4.transpose() + t5 + t5.transpose() + t6 + t6.transpose());
    }
  }
  f.f3 = bb + eighth / 8.0 + twenty_fourth / 24.0;

  f.f4 = 0.5 * sym_ad(sigma, lie::little_ad(v));
  return f;
}

Mat6 covariance_rate(const BodyParams& p, const Vec3& torque, const PhaseElement& mu,
                     const Mat6& sigma, const Vec6& v) {
  const Mat6 r = f_terms(p, torque, mu, sigma, v).total();
  return 0.5 * (r + r.transpose());
}

namespace {

constexpr double kNegativeEigenTolerance = 1e-6;

// Symmetrizes, clips round-off negative eigenvalues and enforces the bound.
Mat6 admissible_covariance(const Mat6& sigma, double t, const EomOptions& opts) {
  Mat6 s = 0.5 * (sigma + sigma.transpose());
  const Eigen::SelfAdjointEigenSolver<Mat6> eig(s);
  const auto& ev = eig.eigenvalues();
  if (!ev.allFinite()) throw ValidityLostError("covariance is not finite", t);
  if (ev(5) > opts.covariance_bound) {
    throw ValidityLostError("covariance eigenvalue " + std::to_string(ev(5)) +
                                " exceeds bound " + std::to_string(opts.covariance_bound) +
                                " at t = " + std::to_string(t),
                            t);
  }
  // Starting from Sigma = 0 the discrete scheme leaves O(dt^3) negative
  // eigenvalues until the rotational block fills in; those are clipped. A
  // clearly negative eigenvalue means the closure itself has broken down.
  if (ev(0) < -kNegativeEigenTolerance * std::max(1.0, ev(5))) {
    throw ValidityLostError("covariance eigenvalue " + std::to_string(ev(0)) +
                                " is negative at t = " + std::to_string(t),
                            t);
  }
  if (ev(0) < 0.0) {
    const auto& vecs = eig.eigenvectors();
    s = vecs * ev.cwiseMax(0.0).asDiagonal() * vecs.transpose();
    s = 0.5 * (s + s.transpose()).eval();
  }
  return s;
}

}  // namespace

EomTrajectory propagate_eom(const BodyParams& p, const TrajectorySpec& spec, double dt,
                            double horizon, const EomOptions& opts) {
  const std::size_t n = step_count(dt, horizon);
  EomTrajectory out;
  out.states.reserve(n + 1);

  PhaseElement mu{Mat3::Identity(), momentum_star(spec, 0.0)};
  Mat6 sigma = Mat6::Zero();
  out.states.push_back({0.0, mu, sigma});

  Vec3 torque_now = torque_star(spec, p, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double t_next = static_cast<double>(k + 1) * dt;
    const Vec3 torque_next = torque_star(spec, p, t_next);
    try {
      const Vec6 v1 = mu_dot(p, torque_now, mu, sigma, t, opts);
      const Mat6 s1 = covariance_rate(p, torque_now, mu, sigma, v1);
      const PhaseElement mu_pred = lie::compose(lie::exp_group(dt * v1), mu);
      const Mat6 sigma_pred = sigma + dt * s1;

      const Vec6 v2 = mu_dot(p, torque_next, mu_pred, sigma_pred, t_next, opts);
      const Mat6 s2 = covariance_rate(p, torque_next, mu_pred, sigma_pred, v2);

      mu = lie::compose(lie::exp_group(0.5 * dt * (v1 + v2)), mu);
      sigma = admissible_covariance(sigma + 0.5 * dt * (s1 + s2), t_next, opts);
    } catch (const ValidityLostError& e) {
      out.failure = PropagationFailure{e.what(), e.time()};
      return out;
    }
    out.states.push_back({t_next, mu, sigma});
    torque_now = torque_next;
  }
  return out;
}

}  // namespace phasefold
