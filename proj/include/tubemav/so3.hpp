#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "tubemav/errors.hpp"

namespace tubemav {

// hat: R^3 -> so(3), v -> [v]_x such that hat(v) * w = v x w.
inline Eigen::Matrix3d hat(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  // clang-format off
  m <<     0.0, -v.z(),  v.y(),
         v.z(),    0.0, -v.x(),
        -v.y(),  v.x(),    0.0;
  // clang-format on
  return m;
}

// vee: so(3) -> R^3, inverse of hat. Requires ||M + M^T||_F <= 1e-9.
inline Eigen::Vector3d vee(const Eigen::Matrix3d& m) {
  if ((m + m.transpose()).norm() > 1e-9) {
    throw NotSkew("vee: input is not skew-symmetric");
  }
  return {m(2, 1), m(0, 2), m(1, 0)};
}

// Nearest rotation matrix in Frobenius norm (polar projection via SVD),
// with the determinant forced to +1.
inline Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

inline Eigen::Matrix3d rot_x(double a) {
  Eigen::Matrix3d r;
  // clang-format off
  r << 1.0,         0.0,          0.0,
       0.0, std::cos(a), -std::sin(a),
       0.0, std::sin(a),  std::cos(a);
  // clang-format on
  return r;
}

inline Eigen::Matrix3d rot_y(double a) {
  Eigen::Matrix3d r;
  // clang-format off
  r <<  std::cos(a), 0.0, std::sin(a),
                0.0, 1.0,         0.0,
       -std::sin(a), 0.0, std::cos(a);
  // clang-format on
  return r;
}

inline Eigen::Matrix3d rot_z(double a) {
  Eigen::Matrix3d r;
  // clang-format off
  r << std::cos(a), -std::sin(a), 0.0,
       std::sin(a),  std::cos(a), 0.0,
               0.0,          0.0, 1.0;
  // clang-format on
  return r;
}

inline bool is_rotation(const Eigen::Matrix3d& r, double tol = 1e-9) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).norm() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace tubemav
