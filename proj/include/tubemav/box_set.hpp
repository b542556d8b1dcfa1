#pragma once

#include <Eigen/Dense>

#include "tubemav/errors.hpp"

namespace tubemav {

// Axis-aligned box {x | lo <= x <= hi}. An empty box (from over-tightening)
// is representable via the flag; member data of an empty box is unspecified.
struct BoxSet {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;
  bool empty = false;

  BoxSet() = default;
  BoxSet(Eigen::VectorXd lo_in, Eigen::VectorXd hi_in)
      : lo(std::move(lo_in)), hi(std::move(hi_in)) {
    if (lo.size() != hi.size()) {
      throw DimensionMismatch("BoxSet: lo and hi must have equal length");
    }
    if (((hi - lo).array() < 0.0).any()) {
      throw DimensionMismatch("BoxSet: lo > hi in some dimension");
    }
  }

  // Origin-symmetric box [-half_width, +half_width].
  static BoxSet symmetric(const Eigen::VectorXd& half_width) {
    return BoxSet(-half_width, half_width);
  }

  static BoxSet zero(int dim) {
    return BoxSet(Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Zero(dim));
  }

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
    if (empty) return false;
    return (x.array() >= lo.array() - tol).all() &&
           (x.array() <= hi.array() + tol).all();
  }

  // Intersection; sets `empty` when the boxes do not overlap.
  BoxSet intersect(const BoxSet& other) const {
    BoxSet out;
    out.lo = lo.cwiseMax(other.lo);
    out.hi = hi.cwiseMin(other.hi);
    out.empty = empty || other.empty || ((out.hi - out.lo).array() < 0.0).any();
    return out;
  }
};

}  // namespace tubemav
