#pragma once

#include <span>
#include <vector>

#include "phasefold/lie.hpp"

namespace phasefold {

struct MeanOptions {
  double tolerance = 1e-6;
  int max_iterations = 100;
  unsigned workers = 0;
};

struct GroupMeanResult {
  PhaseElement mean;
  int iterations = 0;
  /// Frobenius norm of hat6 of the mean residual log at the last iteration.
  double residual = 0.0;
  std::vector<double> residual_history;
};

struct SampleMoments {
  PhaseElement mean;
  Mat6 covariance = Mat6::Zero();
  int iterations = 0;
  double residual = 0.0;
};

struct ProductMean {
  Mat3 rotation = Mat3::Identity();
  Vec3 momentum = Vec3::Zero();
  int iterations = 0;
  double residual = 0.0;
};

/// Mean of 6-vectors by pairwise summation; the reduction tree depends only on
/// the input length.
Vec6 pairwise_mean(std::span<const Vec6> ys);

/// Fixed point of mu <- exp(mean_i log(h_i mu^-1)) mu started from
/// exp(mean_i log h_i). Throws NonConvergenceError after max_iterations,
/// std::invalid_argument for an empty sample, and propagates
/// DegenerateAngleError from the logarithm.
GroupMeanResult group_mean(std::span<const PhaseElement> hs, const MeanOptions& opts = {});

/// mean_i y_i y_i^T with y_i = log(h_i mu^-1).
Mat6 group_covariance(std::span<const PhaseElement> hs, const PhaseElement& mu,
                      unsigned workers = 0);

SampleMoments sample_moments(std::span<const PhaseElement> hs, const MeanOptions& opts = {});

/// Comparison statistic on SO(3) x R^3: the same fixed-point mean applied to
/// the rotations alone, paired with the arithmetic momentum mean.
ProductMean product_mean(std::span<const PhaseElement> hs, const MeanOptions& opts = {});

}  // namespace phasefold
