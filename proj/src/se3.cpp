#include "hamgov/se3.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hamgov {
namespace se3 {

Mat3 hat(const Vec3& w) {
  Mat3 S;
  S << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return S;
}

Vec3 vee(const Mat3& S) {
  if ((S + S.transpose()).norm() > 1e-8) {
    throw std::invalid_argument("not skew-symmetric");
  }
  return {S(2, 1), S(0, 2), S(1, 0)};
}

Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 W = hat(w);
  double a, b;
  if (theta < 1e-6) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Mat3::Identity() + a * W + b * W * W;
}

Vec3 so3_log(const Mat3& R) {
  // 2 sin(theta) * axis
  const Vec3 s2{R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1)};
  const double c = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double s = 0.5 * s2.norm();
  const double theta = std::atan2(s, c);

  if (theta < 1e-4) {
    return 0.5 * (1.0 + theta * theta / 6.0) * s2;
  }
  if (c > -0.99) {
    return theta / (2.0 * std::sin(theta)) * s2;
  }
  // Near pi: (R + R^T)/2 = c I + (1 - c) a a^T, read the axis off the largest
  // diagonal entry and fix its sign from the skew part.
  const Mat3 S = 0.5 * (R + R.transpose());
  int k = 0;
  S.diagonal().maxCoeff(&k);
  Vec3 axis;
  const double akk = std::sqrt(std::max(0.0, (S(k, k) - c) / (1.0 - c)));
  for (int i = 0; i < 3; ++i) {
    axis(i) = (i == k) ? akk : S(i, k) / ((1.0 - c) * akk);
  }
  axis.normalize();
  if (axis.dot(s2) < 0.0) axis = -axis;
  return theta * axis;
}

Mat3 orthonormalize(const Mat3& M) {
  if (!(M.determinant() > 0.0)) {
    throw std::domain_error("orientation degenerate");
  }
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

bool is_rotation(const Mat3& R, double tol) {
  return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(R.determinant() - 1.0) <= tol;
}

Mat12x6 q_cross(const GeneralizedCoord& q) {
  Mat12x6 Q = Mat12x6::Zero();
  Q.block<3, 3>(0, 0) = q.R;
  for (int i = 0; i < 3; ++i) {
    // (hat(r_i)^T)^T == hat(r_i)
    Q.block<3, 3>(3 + 3 * i, 3) = hat(q.R.row(i).transpose());
  }
  return Q;
}

Mat6 p_cross(const Momentum& m) {
  Mat6 P = Mat6::Zero();
  const Mat3 hv = hat(m.v);
  P.block<3, 3>(0, 3) = hv;
  P.block<3, 3>(3, 0) = hv;
  P.block<3, 3>(3, 3) = hat(m.w);
  return P;
}

}  // namespace se3

Vec12 GeneralizedCoord::stacked() const {
  Vec12 q;
  q << p, R.row(0).transpose(), R.row(1).transpose(), R.row(2).transpose();
  return q;
}

GeneralizedCoord GeneralizedCoord::from_stacked(const Vec12& q) {
  GeneralizedCoord out;
  out.p = q.head<3>();
  for (int i = 0; i < 3; ++i) out.R.row(i) = q.segment<3>(3 + 3 * i).transpose();
  return out;
}

}  // namespace hamgov
