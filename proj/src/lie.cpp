#include "phasefold/lie.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "phasefold/errors.hpp"

namespace phasefold {

Mat4 PhaseElement::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation.transpose();
  m.topRightCorner<3, 1>() = momentum;
  return m;
}

PhaseElement PhaseElement::from_matrix(const Mat4& m) {
  return {m.topLeftCorner<3, 3>().transpose(), m.topRightCorner<3, 1>()};
}

namespace lie {
namespace {

// Coefficient functions whose closed forms cancel catastrophically near zero
// switch to series well before kSmallAngle.
constexpr double kSeriesAngle = 0.1;

// sin(t)/t
double sinc(double t) {
  if (t < kSmallAngle) return 1.0 - t * t / 6.0;
  return std::sin(t) / t;
}

// (1 - cos t)/t^2, written through the half angle so it never cancels.
double one_minus_cos_over_sq(double t) {
  if (t < kSmallAngle) return 0.5 - t * t / 24.0;
  const double h = sinc(0.5 * t);
  return 0.5 * h * h;
}

// (t - sin t)/t^3
double t_minus_sin_over_cube(double t) {
  if (t < kSeriesAngle) {
    const double t2 = t * t;
    return 1.0 / 6.0 -
           t2 * (1.0 / 120.0 -
                 t2 * (1.0 / 5040.0 - t2 * (1.0 / 362880.0 - t2 / 39916800.0)));
  }
  return (t - std::sin(t)) / (t * t * t);
}

// 1/t^2 - (1 + cos t)/(2 t sin t), the hat^2 coefficient of J_r^-1.
double inv_jac_coeff(double t) {
  if (t < kSeriesAngle) {
    const double t2 = t * t;
    return 1.0 / 12.0 +
           t2 * (1.0 / 720.0 +
                 t2 * (1.0 / 30240.0 + t2 * (1.0 / 1209600.0 + t2 / 47900160.0)));
  }
  return 1.0 / (t * t) - 1.0 / (2.0 * t * std::tan(0.5 * t));
}

// (d/dt inv_jac_coeff)(t) / t
double inv_jac_coeff_rate(double t) {
  if (t < kSeriesAngle) {
    const double t2 = t * t;
    return 1.0 / 360.0 +
           t2 * (1.0 / 7560.0 +
                 t2 * (1.0 / 201600.0 +
                       t2 * (1.0 / 5987520.0 + t2 * 691.0 / 130767436800.0)));
  }
  const double sh = std::sin(0.5 * t);
  const double t3 = t * t * t;
  return -2.0 / (t3 * t) + (t + std::sin(t)) / (4.0 * t3 * sh * sh);
}

}  // namespace

Mat3 hat3(const Vec3& v) {
  Mat3 m;
  // clang-format off
  m <<  0.0,  -v.z(),  v.y(),
        v.z(),  0.0,  -v.x(),
       -v.y(),  v.x(),  0.0;
  // clang-format on
  return m;
}

Vec3 vee3(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

Mat3 exp_so3(const Vec3& a) {
  const double t = a.norm();
  const Mat3 w = hat3(a);
  return Mat3::Identity() + sinc(t) * w + one_minus_cos_over_sq(t) * w * w;
}

Vec3 log_so3(const Mat3& r) {
  const double c = 0.5 * (r.trace() - 1.0);
  const Vec3 v = 0.5 * vee3(r - r.transpose());  // sin(theta) * axis
  const double s = v.norm();
  const double theta = std::atan2(s, c);

  if (theta < kSmallAngle) return v * (1.0 + theta * theta / 6.0);

  if (std::numbers::pi - theta < kCutLocusMargin) {
    // Symmetric part is cos(theta) I + (1 - cos(theta)) u u^T.
    const Mat3 uu = (0.5 * (r + r.transpose()) - c * Mat3::Identity()) / (1.0 - c);
    Eigen::Index col = 0;
    uu.diagonal().maxCoeff(&col);
    Vec3 axis = uu.col(col).normalized();
    if (axis.dot(v) < 0.0) axis = -axis;
    throw DegenerateAngleError(
        "log_so3: rotation angle " + std::to_string(theta) + " is at the cut locus",
        theta, theta * axis);
  }
  return v * (theta / s);
}

Mat3 jac_right_so3(const Vec3& a) {
  const double t = a.norm();
  const Mat3 w = hat3(a);
  return Mat3::Identity() - one_minus_cos_over_sq(t) * w + t_minus_sin_over_cube(t) * w * w;
}

Mat3 jac_left_so3(const Vec3& a) {
  const double t = a.norm();
  const Mat3 w = hat3(a);
  return Mat3::Identity() + one_minus_cos_over_sq(t) * w + t_minus_sin_over_cube(t) * w * w;
}

Mat3 jac_right_inv_so3(const Vec3& a) {
  const Mat3 w = hat3(a);
  return Mat3::Identity() + 0.5 * w + inv_jac_coeff(a.norm()) * w * w;
}

Mat3 jac_left_inv_so3(const Vec3& a) {
  const Mat3 w = hat3(a);
  return Mat3::Identity() - 0.5 * w + inv_jac_coeff(a.norm()) * w * w;
}

Mat3 jac_right_inv_partial(const Vec3& a, int k) {
  if (k < 0 || k > 2) {
    throw std::out_of_range("jac_right_inv_partial: coordinate index " + std::to_string(k) +
                            " outside 0..2");
  }
  const double t = a.norm();
  const Mat3 w = hat3(a);
  const Mat3 ek = hat3(Vec3::Unit(k));
  return 0.5 * ek + inv_jac_coeff(t) * (ek * w + w * ek) + inv_jac_coeff_rate(t) * a(k) * w * w;
}

PhaseElement compose(const PhaseElement& h1, const PhaseElement& h2) {
  return {h2.rotation * h1.rotation, h1.rotation.transpose() * h2.momentum + h1.momentum};
}

PhaseElement inverse(const PhaseElement& h) {
  return {h.rotation.transpose(), -(h.rotation * h.momentum)};
}

Mat4 hat6(const Vec6& x) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = -hat3(x.head<3>());
  m.topRightCorner<3, 1>() = x.tail<3>();
  return m;
}

Vec6 vee6(const Mat4& m) {
  const Mat3 w = m.topLeftCorner<3, 3>();
  if ((w + w.transpose()).cwiseAbs().maxCoeff() > 1e-9 ||
      m.bottomRows<1>().cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("vee6: matrix is not in the phase-group algebra");
  }
  Vec6 x;
  x.head<3>() = -vee3(0.5 * (w - w.transpose()));
  x.tail<3>() = m.topRightCorner<3, 1>();
  return x;
}

Mat4 basis(std::size_t i) { return hat6(Vec6::Unit(static_cast<Eigen::Index>(i))); }

PhaseElement exp_group(const Vec6& x) {
  const Vec3 a = x.head<3>();
  // exp of [[-hat(a), b], [0, 0]] has upper-left exp(-hat(a)) = R^T and
  // upper-right J_l(-a) b = J_r(a) b.
  return {exp_so3(a), jac_right_so3(a) * x.tail<3>()};
}

Vec6 log_group(const PhaseElement& h) {
  const Vec3 a = log_so3(h.rotation);
  Vec6 x;
  x.head<3>() = a;
  x.tail<3>() = jac_right_inv_so3(a) * h.momentum;
  return x;
}

Mat6 little_ad(const Vec6& x) {
  Mat6 ad = Mat6::Zero();
  const Mat3 wa = hat3(x.head<3>());
  ad.topLeftCorner<3, 3>() = -wa;
  ad.bottomRightCorner<3, 3>() = -wa;
  ad.bottomLeftCorner<3, 3>() = -hat3(x.tail<3>());
  return ad;
}

Mat6 little_ad_basis(std::size_t i) { return little_ad(Vec6::Unit(static_cast<Eigen::Index>(i))); }

StructureConstants structure_constants() {
  StructureConstants c;
  for (std::size_t i = 0; i < 6; ++i) {
    const Mat6 ad = little_ad_basis(i);
    for (std::size_t j = 0; j < 6; ++j) {
      for (std::size_t k = 0; k < 6; ++k) c(k, i, j) = ad(k, j);
    }
  }
  return c;
}

double det_jac_left(const Vec6& x) {
  // J_l is block lower-triangular with two copies of the SO(3) Jacobian on
  // the diagonal, each of determinant (sin(t/2) / (t/2))^2.
  const double s = sinc(0.5 * x.head<3>().norm());
  return s * s * s * s;
}

double algebra_frobenius_norm(const Vec6& x) {
  return std::sqrt(2.0 * x.head<3>().squaredNorm() + x.tail<3>().squaredNorm());
}

}  // namespace lie
}  // namespace phasefold
