#include <cmath>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "phasefold/ekf.hpp"
#include "phasefold/sampler.hpp"
#include "test_support.hpp"

using namespace phasefold;
using phasefold::testing::aa_exp;
using phasefold::testing::aa_log;
using phasefold::testing::expm_series;
using phasefold::testing::Rng;

namespace {

using phasefold::testing::numeric_coordinate_jacobian;

double min_eigenvalue(const Mat6& m) {
  return Eigen::SelfAdjointEigenSolver<Mat6>(m).eigenvalues()(0);
}

}  // namespace

TEST_SUITE("ekf") {

TEST_CASE("system matrix at the origin") {
  const BodyParams p = BodyParams::paper_default();
  const Mat6 a = system_matrix(p, Vec3::Zero(), Vec3::Zero());
  Mat6 expected = Mat6::Zero();
  expected.topRightCorner<3, 3>() = p.inertia_inv();
  expected.bottomRightCorner<3, 3>() = -p.viscous() * p.inertia_inv();
  CHECK((a - expected).norm() < 1e-15);
}

TEST_CASE("system matrix is the Jacobian of the coordinate field") {
  const BodyParams p = BodyParams::paper_default();
  Rng rng(41);
  for (int i = 0; i < 25; ++i) {
    Vec6 s;
    s.head<3>() = rng.ball3(2.5);
    s.tail<3>() = rng.vec3(1.5);
    const Mat6 a = system_matrix(p, s.head<3>(), s.tail<3>());
    CHECK((a - numeric_coordinate_jacobian(p, s)).cwiseAbs().maxCoeff() < 1e-5);
  }

  SUBCASE("along both reference paths") {
    for (int id : {1, 2}) {
      const auto path = integrate_deterministic(p, TrajectorySpec::by_id(id), 1e-3, 1.0);
      for (std::size_t k = 0; k < path.size(); k += 125) {
        Vec6 s;
        s << path[k].x, path[k].l;
        const Mat6 a = system_matrix(p, path[k].x, path[k].l);
        CHECK((a - numeric_coordinate_jacobian(p, s)).cwiseAbs().maxCoeff() < 1e-5);
      }
    }
  }
}

TEST_CASE("isotropic inertia cancels the gyroscopic block") {
  const BodyParams p = BodyParams::diagonal(Vec3::Constant(1.7), 0.6, 1.0);
  Rng rng(42);
  for (int i = 0; i < 10; ++i) {
    const Mat6 a = system_matrix(p, rng.ball3(2.0), rng.vec3(3.0));
    CHECK((a.bottomRightCorner<3, 3>() + (0.6 / 1.7) * Mat3::Identity()).norm() < 1e-14);
    CHECK(a.bottomLeftCorner<3, 3>().isZero(0.0));
  }
}

TEST_CASE("no noise and no initial uncertainty") {
  const BodyParams p = BodyParams::diagonal(Vec3(2.070, 1.532, 1.236), 1.0, 0.0);
  for (int id : {1, 2}) {
    const EkfTrajectory tr = propagate_ekf(p, TrajectorySpec::by_id(id), Mat6::Zero(), 1e-3, 1.0);
    CHECK_FALSE(tr.failure.has_value());
    CHECK(tr.states.size() == 1001);
    for (const auto& s : tr.states) CHECK(s.covariance.isZero(0.0));
  }
}

TEST_CASE("short-time law") {
  const BodyParams p = BodyParams::paper_default();
  for (int id : {1, 2}) {
    const EkfTrajectory tr = propagate_ekf(p, TrajectorySpec::by_id(id), Mat6::Zero(), 1e-3, 0.01);
    for (const auto& s : tr.states) {
      if (s.t == 0.0) continue;
      const Mat3 block = s.covariance.bottomRightCorner<3, 3>();
      CHECK((block - s.t * Mat3::Identity()).norm() / (s.t * std::sqrt(3.0)) < 0.05);
    }
  }
}

TEST_CASE("frozen system matrix against the Van Loan solution") {
  // At the origin with no prescribed motion the mean stays put and A is
  // constant, so Sigma(t) = Phi Sigma0 Phi^T + Qd with Phi and Qd read off
  // exp([[-A, Q], [0, A^T]] t).
  const BodyParams p = BodyParams::paper_default();
  Rng rng(43);
  const Mat6 sigma0 = rng.spd6(0.1);
  const double horizon = 1.0;
  const EkfTrajectory tr = propagate_ekf(p, TrajectorySpec{}, sigma0, 1e-3, horizon);
  const Mat6 a = system_matrix(p, Vec3::Zero(), Vec3::Zero());
  const Mat6 q = p.noise_covariance();
  for (std::size_t k : {std::size_t{100}, std::size_t{500}, std::size_t{1000}}) {
    const double t = tr.states[k].t;
    Eigen::Matrix<double, 12, 12> m = Eigen::Matrix<double, 12, 12>::Zero();
    m.topLeftCorner<6, 6>() = -a * t;
    m.topRightCorner<6, 6>() = q * t;
    m.bottomRightCorner<6, 6>() = a.transpose() * t;
    const Eigen::Matrix<double, 12, 12> e = expm_series(m, 30, 6);
    const Mat6 phi = e.bottomRightCorner<6, 6>().transpose();
    const Mat6 qd = phi * e.topRightCorner<6, 6>();
    const Mat6 oracle = phi * sigma0 * phi.transpose() + qd;
    CHECK((tr.states[k].covariance - oracle).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("covariance stays symmetric positive semi-definite") {
  const BodyParams p = BodyParams::paper_default();
  for (int id : {1, 2}) {
    const EkfTrajectory tr = propagate_ekf(p, TrajectorySpec::by_id(id), Mat6::Zero(), 1e-3, 1.0);
    double worst_asym = 0.0, floor = 0.0;
    for (const auto& s : tr.states) {
      worst_asym = std::max(worst_asym, (s.covariance - s.covariance.transpose()).norm());
      floor = std::min(floor, min_eigenvalue(s.covariance));
      CHECK(s.x.norm() < std::numbers::pi);
    }
    CHECK(worst_asym < 1e-12);
    CHECK(floor >= -1e-10);
  }
}

TEST_CASE("mean follows the noise-free body") {
  // Undamped and noise-free: the EKF mean and a b = 0 sampler ensemble
  // integrate the same body with different schemes.
  const BodyParams p = BodyParams::diagonal(Vec3(2.070, 1.532, 1.236), 0.0, 0.0);
  SimConfig cfg;
  cfg.particles = 2;
  cfg.snapshot_times = snapshot_grid(0.25, 1.0, 1e-3);
  for (int id : {1, 2}) {
    const TrajectorySpec spec = TrajectorySpec::by_id(id);
    const EkfTrajectory tr = propagate_ekf(p, spec, Mat6::Zero(), 1e-3, 1.0);
    const Ensemble e = simulate_ensemble(p, spec, cfg);
    for (const Snapshot& s : e.snapshots) {
      const auto& state = tr.states[static_cast<std::size_t>(std::lround(s.t / 1e-3))];
      CHECK(std::abs(aa_log(s.element(0).rotation).norm() - state.x.norm()) < 1e-5);
      CHECK((aa_exp(state.x) - s.element(0).rotation).norm() < 1e-5);
    }
  }
}

TEST_CASE("coordinate escape stops the propagation") {
  const BodyParams p = BodyParams::diagonal(Vec3::Constant(1.0), 0.0, 1.0);
  TrajectorySpec spin;
  spin.coeffs[0] = Vec3(0, 0, 4.0);
  const EkfTrajectory tr = propagate_ekf(p, spin, Mat6::Zero(), 1e-3, 1.0);
  REQUIRE(tr.failure.has_value());
  // |x*| = 4 t reaches pi at t = 0.785.
  CHECK(tr.failure->time == doctest::Approx(std::numbers::pi / 4).epsilon(0.01));
  CHECK(tr.states.back().t < tr.failure->time);
  CHECK(tr.states.back().x.norm() < std::numbers::pi);
}

TEST_CASE("ekf_nll_inputs") {
  Rng rng(44);
  EkfState state;
  state.x = rng.ball3(2.0);
  state.l = rng.vec3();
  PhaseElement at_mean{aa_exp(state.x), state.l};
  CHECK(ekf_nll_inputs(std::vector<PhaseElement>{at_mean}, state)[0].norm() < 1e-14);

  const Vec3 delta(0.1, -0.2, 0.3);
  PhaseElement offset{aa_exp(state.x), state.l + delta};
  const Vec6 z = ekf_nll_inputs(std::vector<PhaseElement>{offset}, state)[0];
  CHECK(z.head<3>().norm() < 1e-14);
  CHECK((z.tail<3>() - delta).norm() < 1e-15);

  const int n = 20000;
  std::vector<PhaseElement> hs;
  for (int i = 0; i < n; ++i) hs.push_back({aa_exp(state.x), state.l + 0.5 * rng.vec3()});
  Vec6 mean = Vec6::Zero();
  for (const auto& zi : ekf_nll_inputs(hs, state)) mean += zi;
  mean /= n;
  CHECK(mean.head<3>().norm() < 1e-13);
  CHECK(mean.tail<3>().cwiseAbs().maxCoeff() < 4 * 0.5 / std::sqrt(n));
}

}  // TEST_SUITE
