#pragma once

#include <string>

#include <Eigen/Dense>

#include "tubemav/errors.hpp"

namespace tubemav {

struct DareOptions {
  double step_tol = 1e-12;   // stop when ||P_{k+1} - P_k||_F <= step_tol
  double residual_tol = 1e-8;
  long max_iter = 1000000;
  enum class Init { kQ, kIdentity };
  Init init = Init::kQ;
};

// Fixed-point solution of the control-form discrete algebraic Riccati
// equation  P = Q + A'PA - A'PB (R + B'PB)^-1 B'PA,  iterated from P0 = Q.
// The filtering DARE is the same equation under (A,B) -> (A', C').
inline Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& a,
                                  const Eigen::MatrixXd& b,
                                  const Eigen::MatrixXd& q,
                                  const Eigen::MatrixXd& r,
                                  const DareOptions& opts = {}) {
  const int n = static_cast<int>(a.rows());
  if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n ||
      r.rows() != b.cols() || r.cols() != b.cols()) {
    throw DimensionMismatch("solve_dare: inconsistent matrix sizes");
  }

  Eigen::MatrixXd p = opts.init == DareOptions::Init::kIdentity
                          ? Eigen::MatrixXd::Identity(n, n)
                          : q;
  double step = 0.0;
  bool converged = false;
  for (long it = 0; it < opts.max_iter; ++it) {
    const Eigen::MatrixXd btp = b.transpose() * p;
    const Eigen::MatrixXd s = r + btp * b;
    const Eigen::MatrixXd k = s.ldlt().solve(btp * a);
    Eigen::MatrixXd p_next =
        q + a.transpose() * (p * a - btp.transpose() * k);
    p_next = 0.5 * (p_next + p_next.transpose());  // keep symmetric
    step = (p_next - p).norm();
    p = p_next;
    if (step <= opts.step_tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw NoConvergence("solve_dare: iteration cap reached, last step " +
                        std::to_string(step));
  }

  const Eigen::MatrixXd btp = b.transpose() * p;
  const Eigen::MatrixXd residual =
      q + a.transpose() *
              (p * a - btp.transpose() *
                           (r + btp * b).ldlt().solve(btp * a)) -
      p;
  if (residual.norm() > opts.residual_tol) {
    throw NotStabilizable("solve_dare: residual " +
                          std::to_string(residual.norm()) +
                          " above tolerance");
  }
  return p;
}

// Gain for the DARE solution P: K = -(R + B'PB)^-1 B'PA, so that the optimal
// input is u = K x and the closed loop is A + BK.
inline Eigen::MatrixXd dare_gain(const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b,
                                 const Eigen::MatrixXd& r,
                                 const Eigen::MatrixXd& p) {
  return -(r + b.transpose() * p * b).ldlt().solve(b.transpose() * p * a);
}

inline double spectral_radius(const Eigen::MatrixXd& m) {
  return m.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace tubemav
