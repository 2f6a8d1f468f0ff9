#pragma once

#include <Eigen/Dense>

namespace hamgov {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat12x6 = Eigen::Matrix<double, 12, 6>;

namespace se3 {

/// Skew-symmetric matrix with hat(w) * u == w.cross(u).
Mat3 hat(const Vec3& w);

/// Inverse of hat. Throws std::invalid_argument("not skew-symmetric") when
/// ||S + S^T|| > 1e-8.
Vec3 vee(const Mat3& S);

/// Rodrigues exponential of hat(w).
Mat3 so3_exp(const Vec3& w);

/// Rotation vector of R with norm in [0, pi]. Uses the series form near the
/// identity and the diagonal-extraction branch near angle pi.
Vec3 so3_log(const Mat3& R);

/// Closest rotation in Frobenius norm (polar factor).
/// Throws std::domain_error("orientation degenerate") when det(M) <= 0.
Mat3 orthonormalize(const Mat3& M);

bool is_rotation(const Mat3& R, double tol = 1e-9);

}  // namespace se3

/// Position plus rotation; the 12-vector chart is [p; r1; r2; r3] with r_i the
/// rows of R.
struct GeneralizedCoord {
  Vec3 p = Vec3::Zero();
  Mat3 R = Mat3::Identity();

  Vec12 stacked() const;
  static GeneralizedCoord from_stacked(const Vec12& q);
};

/// Body-frame linear and angular velocity.
struct Twist {
  Vec3 v = Vec3::Zero();
  Vec3 w = Vec3::Zero();

  Vec6 stacked() const {
    Vec6 out;
    out << v, w;
    return out;
  }
  static Twist from_stacked(const Vec6& z) { return {z.head<3>(), z.tail<3>()}; }
};

/// Body-frame generalized momentum conjugate to the coordinates.
struct Momentum {
  Vec3 v = Vec3::Zero();
  Vec3 w = Vec3::Zero();

  Vec6 stacked() const {
    Vec6 out;
    out << v, w;
    return out;
  }
  static Momentum from_stacked(const Vec6& z) { return {z.head<3>(), z.tail<3>()}; }
};

namespace se3 {

/// 12x6 map from body twist to the rate of the 12-vector chart.
Mat12x6 q_cross(const GeneralizedCoord& q);

/// 6x6 momentum cross operator [[0, hat(pv)], [hat(pv), hat(pw)]].
Mat6 p_cross(const Momentum& m);

}  // namespace se3
}  // namespace hamgov
