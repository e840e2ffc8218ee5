#include "phasefold/estimator.hpp"

#include <stdexcept>
#include <string>

#include "phasefold/errors.hpp"
#include "phasefold/parallel.hpp"

namespace phasefold {
namespace {

constexpr std::size_t kPairwiseBlock = 64;

template <class T, class Term>
T pairwise_sum(std::size_t begin, std::size_t end, const Term& term) {
  if (end - begin <= kPairwiseBlock) {
    T s = T::Zero();
    for (std::size_t i = begin; i < end; ++i) s += term(i);
    return s;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  return pairwise_sum<T>(begin, mid, term) + pairwise_sum<T>(mid, end, term);
}

// log(h_i mu^-1) for every particle.
std::vector<Vec6> residual_logs(std::span<const PhaseElement> hs, const PhaseElement& mu,
                                unsigned workers) {
  const PhaseElement mu_inv = lie::inverse(mu);
  std::vector<Vec6> ys(hs.size());
  parallel_for(hs.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) ys[i] = lie::log_group(lie::compose(hs[i], mu_inv));
  });
  return ys;
}

}  // namespace

Vec6 pairwise_mean(std::span<const Vec6> ys) {
  if (ys.empty()) throw std::invalid_argument("pairwise_mean: empty input");
  return pairwise_sum<Vec6>(0, ys.size(), [&](std::size_t i) -> const Vec6& { return ys[i]; }) /
         static_cast<double>(ys.size());
}

GroupMeanResult group_mean(std::span<const PhaseElement> hs, const MeanOptions& opts) {
  if (hs.empty()) throw std::invalid_argument("group_mean: empty ensemble");
  const unsigned workers = resolve_workers(opts.workers);

  GroupMeanResult out;
  out.mean = lie::exp_group(pairwise_mean(residual_logs(hs, PhaseElement::identity(), workers)));

  for (int it = 1; it <= opts.max_iterations; ++it) {
    const Vec6 step = pairwise_mean(residual_logs(hs, out.mean, workers));
    out.mean = lie::compose(lie::exp_group(step), out.mean);
    out.iterations = it;
    out.residual = lie::algebra_frobenius_norm(step);
    out.residual_history.push_back(out.residual);
    if (out.residual < opts.tolerance) return out;
  }
  throw NonConvergenceError("group_mean: residual " + std::to_string(out.residual) +
                                " above tolerance after " + std::to_string(out.iterations) +
                                " iterations",
                            out.iterations, out.residual);
}

Mat6 group_covariance(std::span<const PhaseElement> hs, const PhaseElement& mu, unsigned workers) {
  if (hs.empty()) throw std::invalid_argument("group_covariance: empty ensemble");
  const std::vector<Vec6> ys = residual_logs(hs, mu, resolve_workers(workers));
  Mat6 cov = pairwise_sum<Mat6>(0, ys.size(),
                                [&](std::size_t i) -> Mat6 { return ys[i] * ys[i].transpose(); }) /
             static_cast<double>(ys.size());
  return 0.5 * (cov + cov.transpose());
}

SampleMoments sample_moments(std::span<const PhaseElement> hs, const MeanOptions& opts) {
  const GroupMeanResult m = group_mean(hs, opts);
  return {m.mean, group_covariance(hs, m.mean, opts.workers), m.iterations, m.residual};
}

ProductMean product_mean(std::span<const PhaseElement> hs, const MeanOptions& opts) {
  if (hs.empty()) throw std::invalid_argument("product_mean: empty ensemble");
  // Rotations alone are the elements h(R, 0); the group scheme restricted
  // to them is the SO(3) fixed-point mean in the same convention.
  std::vector<PhaseElement> rotations(hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) rotations[i].rotation = hs[i].rotation;
  const GroupMeanResult m = group_mean(rotations, opts);
  const Vec3 momentum =
      pairwise_sum<Vec3>(0, hs.size(), [&](std::size_t i) -> const Vec3& { return hs[i].momentum; }) /
      static_cast<double>(hs.size());
  return {m.mean.rotation, momentum, m.iterations, m.residual};
}

}  // namespace phasefold
