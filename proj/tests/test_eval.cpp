#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "doctest.h"
#include "phasefold/eval.hpp"
#include "test_support.hpp"

using namespace phasefold;
using phasefold::testing::aa_exp;
using phasefold::testing::Rng;

namespace {

const double kLog2Pi3 = 3.0 * std::log(2.0 * std::numbers::pi);

Snapshot snapshot_of(double t, const std::vector<PhaseElement>& hs) {
  Snapshot s(t, hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) s.set(i, hs[i].rotation, hs[i].momentum);
  return s;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("frobenius_error") {
  const Mat3 r = lie::exp_so3(Vec3(0.3, 0.1, -0.4));
  CHECK(frobenius_error(r, r) == 0.0);
  for (double theta : {1e-4, 0.3, 1.0, 2.5, 3.1}) {
    const double err = frobenius_error(Mat3::Identity(), lie::exp_so3(Vec3(0, 0, theta)));
    CHECK(err == doctest::Approx(2 * std::sqrt(2.0) * std::abs(std::sin(theta / 2))).epsilon(1e-12));
  }
  CHECK(frobenius_error(Mat3::Identity(), lie::exp_so3(Vec3(0, 0, 1e-4))) ==
        doctest::Approx(std::sqrt(2.0) * 1e-4).epsilon(1e-8));
  for (double delta : {-0.7, 1e-9, 3.0}) {
    CHECK(frobenius_error(Vec3(0, 1, 2), Vec3(delta, 1, 2)) == doctest::Approx(std::abs(delta)));
  }
  CHECK_THROWS_AS(frobenius_error(Mat3::Identity(), Vec3::Zero()), std::invalid_argument);

  Rng rng(61);
  for (int i = 0; i < 50; ++i) {
    const Mat3 a = rng.rotation(), b = rng.rotation(), c = rng.rotation();
    CHECK(frobenius_error(a, b) == frobenius_error(b, a));
    CHECK(frobenius_error(a, c) <= frobenius_error(a, b) + frobenius_error(b, c) + 1e-15);
  }
}

TEST_CASE("nll") {
  CHECK(nll(std::vector<Vec6>{Vec6::Zero()}, Mat6::Identity()) == doctest::Approx(kLog2Pi3).epsilon(1e-15));

  Rng rng(62);
  Mat6 sigma = rng.spd6();
  sigma.diagonal().array() += 0.1;

  SUBCASE("scaling of the covariance") {
    std::vector<Vec6> zs;
    for (int i = 0; i < 10; ++i) zs.push_back(rng.vec6());
    double quad = 0.0;
    const Mat6 inv = sigma.inverse();
    for (const auto& z : zs) quad += z.dot(inv * z);
    quad /= 2.0 * zs.size();
    const double base = nll(zs, sigma);
    CHECK(base == doctest::Approx(kLog2Pi3 + 0.5 * std::log(sigma.determinant()) + quad).epsilon(1e-12));
    // |4 Sigma|^(1/2) = 4^3 |Sigma|^(1/2): the log-determinant term grows by
    // 6 log 2 while the quadratic term quarters.
    CHECK(nll(zs, 4.0 * sigma) ==
          doctest::Approx(base + 6.0 * std::log(2.0) - 0.75 * quad).epsilon(1e-12));
  }

  SUBCASE("chi-square expectation") {
    const Mat6 chol = sigma.llt().matrixL();
    const int n = 200000;
    std::vector<Vec6> zs;
    for (int i = 0; i < n; ++i) zs.push_back(chol * rng.vec6());
    // E[z^T Sigma^-1 z] = 6 with variance 12, so the quadratic part has
    // standard error sqrt(12 / N) / 2 ~ 0.004.
    const double expected = kLog2Pi3 + 0.5 * std::log(sigma.determinant()) + 3.0;
    CHECK(std::abs(nll(zs, sigma) - expected) < 0.02);
  }

  SUBCASE("contracts") {
    CHECK_THROWS_AS(nll(std::vector<Vec6>{}, sigma), std::invalid_argument);
    CHECK_THROWS_AS(nll(std::vector<Vec6>{Vec6::Zero()}, Mat6::Zero()), std::domain_error);
    Mat6 stiff = Mat6::Identity();
    stiff(5, 5) = 1e-13;
    CHECK_THROWS_AS(nll(std::vector<Vec6>{Vec6::Zero()}, stiff), std::domain_error);
    stiff(5, 5) = 1e-11;
    CHECK(std::isfinite(nll(std::vector<Vec6>{Vec6::Zero()}, stiff)));
  }
}

TEST_CASE("eom_nll_inputs recover the exponential coordinates") {
  Rng rng(63);
  const PhaseElement mu = rng.element(2.0, 1.0);
  std::vector<Vec6> ys;
  std::vector<PhaseElement> hs;
  for (int i = 0; i < 100; ++i) {
    ys.push_back(rng.algebra(2.5, 1.0));
    hs.push_back(lie::compose(lie::exp_group(ys.back()), mu));
  }
  const auto zs = eom_nll_inputs(hs, mu);
  for (std::size_t i = 0; i < zs.size(); ++i) CHECK((zs[i] - ys[i]).norm() < 1e-11);
}

TEST_CASE("eom_group_density integrates to one against the product measure") {
  // h = (R, l) with Haar measure dR dl, where in exponential coordinates of
  // SO(3) dR = 2 (1 - cos|a|) / |a|^2 da. Importance sampling of
  // R = R_mu exp(a) (a right translation, so dR is unchanged) and
  // l = exp(a)^T l_mu + u (a translation for fixed a, so dl = du), with
  // (a, u) Gaussian with a widened copy of Sigma.
  // The spread is wide enough that leaving out the 1/|det J_l| factor moves
  // the integral by about 20 standard errors.
  Rng rng(64);
  EomState state;
  state.mean = rng.element(1.5, 1.0);
  Mat6 sigma = rng.spd6(0.04);
  sigma.diagonal().array() += 0.02;
  state.covariance = sigma;

  const Mat6 proposal = 1.5 * sigma;
  const Mat6 chol = proposal.llt().matrixL();
  const Mat6 proposal_inv = proposal.inverse();
  const double norm = std::pow(2.0 * std::numbers::pi, 3) * std::sqrt(proposal.determinant());
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec6 s = chol * rng.vec6();
    const Vec3 a = s.head<3>();
    const Mat3 ra = aa_exp(a);
    const PhaseElement h{state.mean.rotation * ra, ra.transpose() * state.mean.momentum + Vec3(s.tail<3>())};
    const double th = a.norm();
    const double haar = th < 1e-8 ? 1.0 : 2.0 * (1.0 - std::cos(th)) / (th * th);
    const double q = std::exp(-0.5 * s.dot(proposal_inv * s)) / norm;
    const double w = eom_group_density(h, state) * haar / q;
    sum += w;
    sum_sq += w * w;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0) < 4 * se);
  CHECK(se < 0.003);
}

TEST_CASE("evaluate_snapshot") {
  Rng rng(65);
  EomState eom;
  eom.t = 0.5;
  eom.mean = rng.element(1.0, 1.0);
  Mat6 sigma = rng.spd6(0.01);
  sigma.diagonal().array() += 0.002;
  eom.covariance = sigma;
  EkfState ekf;
  ekf.t = 0.5;
  ekf.x = lie::log_so3(eom.mean.rotation) + Vec3(0.01, 0, 0);
  ekf.l = eom.mean.momentum;
  ekf.covariance = 1.5 * sigma;

  const Mat6 chol = sigma.llt().matrixL();
  std::vector<PhaseElement> hs;
  for (int i = 0; i < 20000; ++i) hs.push_back(lie::compose(lie::exp_group(chol * rng.vec6()), eom.mean));
  const Snapshot snap = snapshot_of(0.5, hs);

  MeanDiagnostics diag;
  const MetricRow row = evaluate_snapshot(snap, ekf, eom, {}, &diag);
  CHECK(row.t == 0.5);
  CHECK(same_bits(row.nll_diff, row.nll_eom - row.nll_ekf));

  // Each entry agrees with an independent recomputation.
  const GroupMeanResult gm = group_mean(hs);
  const ProductMean pm = product_mean(hs);
  CHECK(row.err_rot_eom == doctest::Approx((gm.mean.rotation - eom.mean.rotation).norm()).epsilon(1e-14));
  CHECK(row.err_mom_eom == doctest::Approx((gm.mean.momentum - eom.mean.momentum).norm()).epsilon(1e-14));
  CHECK(row.err_rot_ekf == doctest::Approx((pm.rotation - lie::exp_so3(ekf.x)).norm()).epsilon(1e-14));
  CHECK(row.err_mom_ekf == doctest::Approx((pm.momentum - ekf.l).norm()).epsilon(1e-14));
  CHECK(diag.group.iterations == gm.iterations);
  CHECK(diag.group.residual < 1e-6);
  CHECK(diag.product_residual < 1e-6);

  // The ensemble is drawn from the EOM law itself.
  const double expected = kLog2Pi3 + 0.5 * std::log(sigma.determinant()) + 3.0;
  CHECK(std::abs(row.nll_eom - expected) < 0.05);
  CHECK(row.nll_diff < 0.0);
  CHECK(row.err_rot_eom < 0.01);

  SUBCASE("singular propagated covariance gives NaN likelihoods") {
    EkfState degenerate = ekf;
    degenerate.covariance.setZero();
    const MetricRow r = evaluate_snapshot(snap, degenerate, eom);
    CHECK(std::isnan(r.nll_ekf));
    CHECK(std::isnan(r.nll_diff));
    CHECK(std::isfinite(r.nll_eom));
  }
}

TEST_CASE("evaluate_all") {
  const BodyParams p = BodyParams::diagonal(Vec3(2.070, 1.532, 1.236), 1.0, 0.0);
  SimConfig cfg;
  cfg.particles = 50;
  cfg.snapshot_times = snapshot_grid(0.25, 1.0, 1e-3);
  for (int id : {1, 2}) {
    const TrajectorySpec spec = TrajectorySpec::by_id(id);
    const Ensemble e = simulate_ensemble(p, spec, cfg);
    const EkfTrajectory ekf = propagate_ekf(p, spec, Mat6::Zero(), 1e-3, 1.0);
    const EomTrajectory eom = propagate_eom(p, spec, 1e-3, 1.0);
    const MetricSeries m = evaluate_all(e, ekf.states, eom.states);
    REQUIRE(m.rows.size() == 4);
    for (const auto& row : m.rows) {
      CHECK(row.err_rot_ekf < 1e-5);
      CHECK(row.err_rot_eom < 1e-5);
      CHECK(row.err_mom_ekf < 1e-5);
      CHECK(row.err_mom_eom < 1e-5);
      CHECK(std::isnan(row.nll_ekf));
    }
  }

  SUBCASE("misaligned grids") {
    const BodyParams noisy = BodyParams::paper_default();
    const Ensemble e = simulate_ensemble(noisy, TrajectorySpec::one(), cfg);
    const EkfTrajectory ekf = propagate_ekf(noisy, TrajectorySpec::one(), Mat6::Zero(), 1e-3, 0.5);
    const EomTrajectory eom = propagate_eom(noisy, TrajectorySpec::one(), 1e-3, 1.0);
    CHECK_THROWS_AS(evaluate_all(e, ekf.states, eom.states), std::invalid_argument);
  }

  SUBCASE("deterministic across worker counts") {
    const BodyParams noisy = BodyParams::paper_default();
    SimConfig small = cfg;
    small.particles = 2000;
    const Ensemble e = simulate_ensemble(noisy, TrajectorySpec::two(), small);
    const EkfTrajectory ekf = propagate_ekf(noisy, TrajectorySpec::two(), Mat6::Zero(), 1e-3, 1.0);
    const EomTrajectory eom = propagate_eom(noisy, TrajectorySpec::two(), 1e-3, 1.0);
    MeanOptions one, three;
    one.workers = 1;
    three.workers = 3;
    const MetricSeries a = evaluate_all(e, ekf.states, eom.states, one);
    const MetricSeries b = evaluate_all(e, ekf.states, eom.states, three);
    for (std::size_t k = 0; k < a.rows.size(); ++k) {
      CHECK(same_bits(a.rows[k].err_rot_eom, b.rows[k].err_rot_eom));
      CHECK(same_bits(a.rows[k].err_rot_ekf, b.rows[k].err_rot_ekf));
      CHECK(same_bits(a.rows[k].nll_eom, b.rows[k].nll_eom));
      CHECK(same_bits(a.rows[k].nll_ekf, b.rows[k].nll_ekf));
    }
  }
}

}  // TEST_SUITE
