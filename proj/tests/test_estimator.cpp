#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "phasefold/errors.hpp"
#include "phasefold/estimator.hpp"
#include "test_support.hpp"

using namespace phasefold;
using phasefold::testing::aa_exp;
using phasefold::testing::aa_log;
using phasefold::testing::Rng;

namespace {

// Samples exp(eps_i) h0 with eps_i = L z_i, z_i standard normal.
std::vector<PhaseElement> perturbed(const PhaseElement& h0, const Mat6& chol, int n, Rng& rng,
                                    std::vector<Vec6>* eps_out = nullptr) {
  std::vector<PhaseElement> hs;
  hs.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Vec6 eps = chol * rng.vec6();
    if (eps_out) eps_out->push_back(eps);
    hs.push_back(lie::compose(lie::exp_group(eps), h0));
  }
  return hs;
}

double element_distance(const PhaseElement& a, const PhaseElement& b) {
  return (a.matrix() - b.matrix()).norm();
}

}  // namespace

TEST_SUITE("estimator") {

TEST_CASE("pairwise_mean") {
  std::vector<Vec6> ys;
  for (int i = 0; i < 1000; ++i) ys.push_back(Vec6::Constant(0.5 * (i % 7)));
  Vec6 plain = Vec6::Zero();
  for (const auto& y : ys) plain += y;
  CHECK(pairwise_mean(ys) == plain / 1000.0);
  CHECK_THROWS_AS(pairwise_mean(std::span<const Vec6>{}), std::invalid_argument);

  // A million equal terms: a running sum drifts by many ulps, the pairwise
  // tree stays within a few.
  const double value = 1.0 + 1e-10;
  std::vector<Vec6> big(1 << 20, Vec6::Constant(value));
  double running = 0.0;
  for (const auto& y : big) running += y(0);
  const double pairwise_error = std::abs(pairwise_mean(big)(0) - value);
  CHECK(pairwise_error < 1e-14);
  CHECK(pairwise_error < std::abs(running / big.size() - value));
}

TEST_CASE("group_mean of a point mass") {
  Rng rng(31);
  const PhaseElement h0 = rng.element(2.5, 2.0);
  const std::vector<PhaseElement> hs(50, h0);
  const GroupMeanResult r = group_mean(hs);
  CHECK(r.iterations == 1);
  CHECK(r.residual < 1e-14);
  CHECK(element_distance(r.mean, h0) < 1e-14);
  CHECK(group_covariance(hs, r.mean).norm() < 1e-26);
}

TEST_CASE("group_mean of a symmetric pair") {
  Rng rng(32);
  for (int i = 0; i < 20; ++i) {
    const Vec6 x = rng.algebra(0.8, 0.5);
    const std::vector<PhaseElement> hs = {lie::exp_group(x), lie::exp_group(-x)};
    CHECK(element_distance(group_mean(hs).mean, PhaseElement::identity()) < 1e-12);
  }
}

TEST_CASE("group_mean contracts") {
  CHECK_THROWS_AS(group_mean(std::span<const PhaseElement>{}), std::invalid_argument);
  Rng rng(33);
  const auto hs = perturbed(PhaseElement::identity(), 0.3 * Mat6::Identity(), 200, rng);
  MeanOptions opts;
  opts.tolerance = 0.0;
  opts.max_iterations = 3;
  try {
    group_mean(hs, opts);
    FAIL("expected NonConvergenceError");
  } catch (const NonConvergenceError& e) {
    CHECK(e.iterations() == 3);
    CHECK(e.residual() >= 0.0);
  }
}

TEST_CASE("Karcher oracle on a one-parameter family") {
  // Brute-force minimisation of F(s) = sum_i |log(h_i mu(s)^-1)|^2 over
  // mu(s) = exp(s v) h0. The fixed point solves sum_i log(h_i mu^-1) = 0,
  // which is the stationarity condition of F up to terms of second order in
  // the spread, so both must agree to O(sigma^2) and sit within Monte-Carlo
  // error of h0.
  Rng rng(34);
  const PhaseElement h0 = rng.element(1.5, 1.0);
  const double sigma = 0.02;
  const int n = 10000;
  const auto hs = perturbed(h0, sigma * Mat6::Identity(), n, rng);
  const GroupMeanResult gm = group_mean(hs);
  CHECK(element_distance(gm.mean, h0) < 10 * sigma / std::sqrt(n));

  for (int dir = 0; dir < 6; ++dir) {
    const Vec6 v = Vec6::Unit(dir);
    auto objective = [&](double s) {
      const PhaseElement mu_inv = lie::inverse(lie::compose(lie::exp_group(s * v), h0));
      double f = 0.0;
      for (const auto& h : hs) f += lie::log_group(lie::compose(h, mu_inv)).squaredNorm();
      return f;
    };
    // Coarse grid, then a refined grid around the best node.
    double best = 0.0, step = 4e-4;
    for (int pass = 0; pass < 3; ++pass) {
      double best_f = objective(best);
      const double center = best;
      for (int k = -10; k <= 10; ++k) {
        const double s = center + k * step;
        const double f = objective(s);
        if (f < best_f) {
          best_f = f;
          best = s;
        }
      }
      step /= 10.0;
    }
    const double s_fixed_point = lie::log_group(lie::compose(gm.mean, lie::inverse(h0)))(dir);
    CHECK(std::abs(best) < 4 * sigma / std::sqrt(n) + 2 * sigma * sigma);
    CHECK(std::abs(best - s_fixed_point) < 2 * sigma * sigma);
  }
}

TEST_CASE("group_covariance") {
  Rng rng(35);
  const PhaseElement mu = rng.element(2.0, 1.0);
  Mat6 sigma0 = rng.spd6(1e-3);
  sigma0.diagonal().array() += 1e-4;
  const Mat6 chol = sigma0.llt().matrixL();

  SUBCASE("exact at the true mean") {
    // log(exp(eps) mu mu^-1) = eps inside the injectivity domain, so the
    // covariance about mu is exactly the empirical second moment of eps.
    std::vector<Vec6> eps;
    const auto hs = perturbed(mu, chol, 2000, rng, &eps);
    Mat6 oracle = Mat6::Zero();
    for (const auto& e : eps) oracle += e * e.transpose();
    oracle /= 2000.0;
    CHECK((group_covariance(hs, mu) - oracle).norm() < 1e-12 * oracle.norm() + 1e-15);
  }

  SUBCASE("recovers the sampling covariance") {
    const int n = 40000;
    const auto hs = perturbed(mu, chol, n, rng);
    const SampleMoments m = sample_moments(hs);
    CHECK(m.residual < 1e-6);
    CHECK(element_distance(m.mean, mu) < 0.01);
    // Entrywise sampling error is about sqrt(2 / N) of the scale.
    CHECK((m.covariance - sigma0).norm() / sigma0.norm() < 0.03);
    CHECK((m.covariance - m.covariance.transpose()).norm() < 1e-12);
    const Eigen::SelfAdjointEigenSolver<Mat6> es(m.covariance);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  }

  SUBCASE("PSD on a wide ensemble") {
    const auto hs = perturbed(mu, 0.5 * Mat6::Identity(), 500, rng);
    const SampleMoments m = sample_moments(hs);
    const Eigen::SelfAdjointEigenSolver<Mat6> es(m.covariance);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
  }
}

TEST_CASE("right-translation equivariance") {
  Rng rng(36);
  const PhaseElement k = rng.element(2.0, 1.5);

  SUBCASE("point mass") {
    const PhaseElement h0 = rng.element(1.0, 1.0);
    const std::vector<PhaseElement> hs(10, h0);
    const std::vector<PhaseElement> shifted(10, lie::compose(h0, k));
    CHECK(element_distance(group_mean(shifted).mean, lie::compose(group_mean(hs).mean, k)) < 1e-13);
  }

  SUBCASE("ensemble") {
    const auto hs = perturbed(rng.element(1.0, 1.0), 0.2 * Mat6::Identity(), 3000, rng);
    std::vector<PhaseElement> shifted;
    for (const auto& h : hs) shifted.push_back(lie::compose(h, k));
    const PhaseElement mu = group_mean(hs).mean;
    MeanOptions tight;
    tight.tolerance = 1e-12;
    // The fixed point maps exactly; only the start point and tolerance differ.
    CHECK(element_distance(group_mean(shifted, tight).mean, lie::compose(group_mean(hs, tight).mean, k)) <
          1e-10);
    CHECK(element_distance(group_mean(shifted).mean, lie::compose(mu, k)) < 1e-5);
    CHECK((group_covariance(shifted, lie::compose(mu, k)) - group_covariance(hs, mu)).norm() < 1e-12);
  }
}

TEST_CASE("residual decreases monotonically") {
  Rng rng(37);
  MeanOptions tight;
  tight.tolerance = 1e-13;
  for (double spread : {0.05, 0.3, 0.6}) {
    for (int trial = 0; trial < 3; ++trial) {
      const auto hs = perturbed(rng.element(2.0, 1.0), spread * Mat6::Identity(), 1000, rng);
      const GroupMeanResult r = group_mean(hs, tight);
      for (std::size_t i = 1; i < r.residual_history.size(); ++i) {
        CHECK(r.residual_history[i] <= r.residual_history[i - 1]);
      }
      CHECK(r.residual == r.residual_history.back());
    }
  }
}

TEST_CASE("product_mean") {
  Rng rng(38);

  SUBCASE("point mass") {
    const PhaseElement h0 = rng.element(2.0, 1.0);
    const std::vector<PhaseElement> hs(7, h0);
    const ProductMean m = product_mean(hs);
    CHECK((m.rotation - h0.rotation).norm() < 1e-14);
    CHECK((m.momentum - h0.momentum).norm() < 1e-15);
  }

  SUBCASE("arithmetic momentum mean") {
    // Half-integer momenta make every partial sum exact.
    std::vector<PhaseElement> hs;
    Vec3 sum = Vec3::Zero();
    for (int i = 0; i < 300; ++i) {
      PhaseElement h;
      h.rotation = rng.rotation();
      h.momentum = Vec3(0.5 * (i % 5), -1.5 * (i % 3), 2.0);
      sum += h.momentum;
      hs.push_back(h);
    }
    const Vec3 oracle = sum / 300.0;
    CHECK(product_mean(std::vector<PhaseElement>(hs.begin(), hs.begin() + 1)).momentum == hs[0].momentum);
    // The rotation part of a Haar sample is not a valid input for the mean,
    // so check the momentum on a concentrated ensemble with the same momenta.
    for (auto& h : hs) h.rotation = aa_exp(rng.vec3(0.2));
    CHECK(product_mean(hs).momentum == oracle);
  }

  SUBCASE("symmetric rotation pair") {
    for (double x : {0.1, 1.0, 2.5}) {
      PhaseElement a, b;
      a.rotation = lie::exp_so3(Vec3(x, 0, 0));
      b.rotation = lie::exp_so3(Vec3(-x, 0, 0));
      a.momentum = Vec3(1, 2, 3);
      b.momentum = Vec3(3, 2, 1);
      const ProductMean m = product_mean(std::vector<PhaseElement>{a, b});
      CHECK((m.rotation - Mat3::Identity()).norm() < 1e-12);
      CHECK(m.momentum == Vec3(2, 2, 2));
    }
  }

  SUBCASE("matches an independent Karcher iteration on SO(3)") {
    const Mat3 r0 = rng.rotation();
    std::vector<PhaseElement> hs;
    for (int i = 0; i < 2000; ++i) {
      PhaseElement h;
      h.rotation = r0 * aa_exp(rng.vec3(0.3));
      h.momentum = rng.vec3();
      hs.push_back(h);
    }
    Mat3 r = hs[0].rotation;
    for (int it = 0; it < 200; ++it) {
      Vec3 step = Vec3::Zero();
      for (const auto& h : hs) step += aa_log(r.transpose() * h.rotation);
      step /= static_cast<double>(hs.size());
      r = r * aa_exp(step);
      if (step.norm() < 1e-14) break;
    }
    MeanOptions tight;
    tight.tolerance = 1e-12;
    CHECK((product_mean(hs, tight).rotation - r).norm() < 1e-10);
    // The default tolerance bounds the remaining error through a contraction
    // factor well below one for this spread.
    CHECK((product_mean(hs).rotation - r).norm() < 1e-5);
  }
}

}  // TEST_SUITE
