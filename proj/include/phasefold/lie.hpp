#pragma once

// Lie-group primitives for SO(3) and the cotangent-bundle group
// SO(3)^T x| R^3 whose elements are the 4x4 matrices
//
//     h(R, l) = [ R^T  l ]
//               [ 0^T  1 ]
//
// Algebra vectors are 6-vectors x = (a; b), a rotational, b momentum, with
//
//     hat6(a; b) = [ -hat3(a)  b ]
//                  [   0^T     0 ]
//
// The sign on hat3(a) makes vee6(dh/dt h^-1) = (omega; dl/dt + omega x l)
// for a body with body-frame angular velocity omega = (R^T dR/dt)^vee.

#include <array>
#include <cstddef>

#include <Eigen/Core>

namespace phasefold {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat64 = Eigen::Matrix<double, 6, 4>;

/// Orientation and angular momentum of the body, one element of the phase group.
struct PhaseElement {
  Mat3 rotation = Mat3::Identity();
  Vec3 momentum = Vec3::Zero();

  static PhaseElement identity() { return {}; }

  /// The 4x4 matrix [[R^T, l], [0, 1]].
  Mat4 matrix() const;
  static PhaseElement from_matrix(const Mat4& m);
};

/// Structure constants C^k_ij of the phase-group algebra, [E_i, E_j] = C^k_ij E_k.
/// Indices are zero-based.
class StructureConstants {
 public:
  double operator()(std::size_t k, std::size_t i, std::size_t j) const {
    return data_[(k * 6 + i) * 6 + j];
  }
  double& operator()(std::size_t k, std::size_t i, std::size_t j) {
    return data_[(k * 6 + i) * 6 + j];
  }

 private:
  std::array<double, 216> data_{};
};

namespace lie {

/// Below this angle trigonometric coefficient functions switch to Taylor series.
inline constexpr double kSmallAngle = 1e-6;
/// Logarithms within this distance of pi report a degenerate angle.
inline constexpr double kCutLocusMargin = 1e-6;

Mat3 hat3(const Vec3& v);
Vec3 vee3(const Mat3& m);

Mat3 exp_so3(const Vec3& a);

/// Principal logarithm, |result| <= pi. Throws DegenerateAngleError within
/// kCutLocusMargin of pi.
Vec3 log_so3(const Mat3& r);

/// Right Jacobian of SO(3) in exponential coordinates: J_r(a) da/dt = (R^T dR/dt)^vee.
Mat3 jac_right_so3(const Vec3& a);
Mat3 jac_right_inv_so3(const Vec3& a);
Mat3 jac_left_so3(const Vec3& a);
Mat3 jac_left_inv_so3(const Vec3& a);

/// d(J_r^-1)/d a_k at a, for k in {0, 1, 2}. Throws std::out_of_range otherwise.
Mat3 jac_right_inv_partial(const Vec3& a, int k);

/// Group product h1 * h2 of the 4x4 representation.
PhaseElement compose(const PhaseElement& h1, const PhaseElement& h2);
PhaseElement inverse(const PhaseElement& h);

Mat4 hat6(const Vec6& x);
/// Throws std::invalid_argument if the upper-left block is not skew-symmetric
/// within 1e-9 or the bottom row is nonzero.
Vec6 vee6(const Mat4& m);

/// Basis matrix E_i = hat6(e_i), zero-based.
Mat4 basis(std::size_t i);

PhaseElement exp_group(const Vec6& x);
/// Throws DegenerateAngleError when the rotation angle is within
/// kCutLocusMargin of pi.
Vec6 log_group(const PhaseElement& h);

/// Matrix of ad(hat6(x)) acting on algebra 6-vectors.
Mat6 little_ad(const Vec6& x);
/// little_ad(e_i), zero-based.
Mat6 little_ad_basis(std::size_t i);

StructureConstants structure_constants();

/// |det J_l| of the phase group at x. Equal to |det J_r| (the group is unimodular).
double det_jac_left(const Vec6& x);

/// Frobenius norm of hat6(x).
double algebra_frobenius_norm(const Vec6& x);

}  // namespace lie
}  // namespace phasefold
