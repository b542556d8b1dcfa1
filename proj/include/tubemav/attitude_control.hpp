#pragma once

#include <Eigen/Dense>

#include "tubemav/errors.hpp"
#include "tubemav/riccati.hpp"
#include "tubemav/rigid_body.hpp"
#include "tubemav/so3.hpp"

namespace tubemav {

// Diagonal gains of the geometric attitude law.
struct AttitudeGains {
  Eigen::Vector3d k_r{8.0e-4, 8.0e-4, 8.0e-4};  // [N m / rad]
  Eigen::Vector3d k_w{1.2e-5, 1.2e-5, 1.2e-5};  // [N m s / rad]

  void validate() const {
    if (!(k_r.array() > 0.0).all() || !(k_w.array() > 0.0).all()) {
      throw DimensionMismatch("AttitudeGains: entries must be positive");
    }
  }
};

struct AttitudeSetpoint {
  Eigen::Matrix3d r_d = Eigen::Matrix3d::Identity();
  Eigen::Vector3d w_d = Eigen::Vector3d::Zero();  // body rates [rad/s]
};

// e_R = 1/2 (R_d' R - R' R_d)^vee
inline Eigen::Vector3d attitude_error(const Eigen::Matrix3d& r,
                                      const Eigen::Matrix3d& r_d) {
  const Eigen::Matrix3d skew =
      r_d.transpose() * r - r.transpose() * r_d;
  return 0.5 * Eigen::Vector3d(skew(2, 1), skew(0, 2), skew(1, 0));
}

// e_w = w - R' R_d w_d
inline Eigen::Vector3d angular_velocity_error(const Eigen::Vector3d& w_b,
                                              const Eigen::Matrix3d& r,
                                              const Eigen::Matrix3d& r_d,
                                              const Eigen::Vector3d& w_d) {
  return w_b - r.transpose() * r_d * w_d;
}

// Geometric attitude law with torque-disturbance compensation. Assumes zero
// desired angular acceleration. The z component is returned for logging; the
// caller zeroes it before allocation, the actuators cannot produce it.
inline Eigen::Vector3d control_torque(const Eigen::Matrix3d& r,
                                      const Eigen::Vector3d& w_b,
                                      const AttitudeSetpoint& sp,
                                      const Eigen::Vector3d& tau_ext_hat,
                                      const AttitudeGains& gains,
                                      const Eigen::Vector3d& j_diag) {
  const Eigen::Vector3d e_r = attitude_error(r, sp.r_d);
  const Eigen::Vector3d e_w = angular_velocity_error(w_b, r, sp.r_d, sp.w_d);
  const Eigen::Vector3d jw = j_diag.cwiseProduct(w_b);
  const Eigen::Vector3d transport =
      j_diag.cwiseProduct(hat(w_b) * (r.transpose() * sp.r_d * sp.w_d));
  return -gains.k_r.cwiseProduct(e_r) - gains.k_w.cwiseProduct(e_w) +
         w_b.cross(jw) - transport - tau_ext_hat;
}

// Steady-state Kalman filter estimating slowly varying body torque
// disturbances from rate measurements. Continuous model:
//   dw/dt   = J^-1 (u_o + tau_ext) + noise,   d(tau_ext)/dt = noise,
// with u_o = tau_cmd - w x Jw supplied by the caller.
struct ObserverConfig {
  Eigen::Matrix3d q_w = 1.0e-3 * Eigen::Matrix3d::Identity();
  Eigen::Matrix3d q_tau = 1.0e-8 * Eigen::Matrix3d::Identity();
  Eigen::Matrix3d r_m = 1.0e-6 * Eigen::Matrix3d::Identity();
  double dt = 5.0e-4;  // observer step [s]; runs at the control rate
};

struct ObserverState {
  Eigen::Vector3d w_hat = Eigen::Vector3d::Zero();
  Eigen::Vector3d tau_ext_hat = Eigen::Vector3d::Zero();
};

struct ObserverDesign {
  Eigen::Matrix<double, 6, 3> gain;  // steady-state Kalman gain L
  Eigen::Matrix<double, 6, 6> phi;   // discrete transition
  Eigen::Matrix<double, 6, 3> gamma; // discrete input map
};

// Exact discretization of the nilpotent continuous model (F^2 = 0, FG = 0):
//   Phi = I + F dt,   Gamma = G dt,   Qd = blkdiag(Q_w, Q_tau) dt.
// The a-priori covariance solves the filtering DARE, found by fixed-point
// iteration; L = P H' (H P H' + R)^-1.
inline ObserverDesign observer_design(const Eigen::Vector3d& j_diag,
                                      const ObserverConfig& cfg) {
  const Eigen::Matrix3d j_inv =
      j_diag.cwiseInverse().asDiagonal().toDenseMatrix();

  ObserverDesign d;
  d.phi = Eigen::Matrix<double, 6, 6>::Identity();
  d.phi.block<3, 3>(0, 3) = j_inv * cfg.dt;
  d.gamma.setZero();
  d.gamma.block<3, 3>(0, 0) = j_inv * cfg.dt;

  Eigen::MatrixXd qd = Eigen::MatrixXd::Zero(6, 6);
  qd.block<3, 3>(0, 0) = cfg.q_w * cfg.dt;
  qd.block<3, 3>(3, 3) = cfg.q_tau * cfg.dt;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3, 6);
  h.block<3, 3>(0, 0).setIdentity();

  // Filtering DARE == control DARE under (A,B) -> (Phi', H').
  DareOptions opts;
  opts.init = DareOptions::Init::kIdentity;
  const Eigen::MatrixXd p =
      solve_dare(d.phi.transpose(), h.transpose(), qd, cfg.r_m, opts);
  d.gain = p * h.transpose() *
           (h * p * h.transpose() + cfg.r_m).ldlt().solve(
               Eigen::Matrix3d::Identity());
  return d;
}

// Predict with the discrete model, then correct with gain L on the rate
// innovation. u_o must be tau_cmd - w x Jw evaluated at the measured rate.
inline ObserverState observer_step(const ObserverState& obs,
                                   const Eigen::Vector3d& u_o,
                                   const Eigen::Vector3d& z_meas,
                                   const ObserverDesign& design) {
  Eigen::Matrix<double, 6, 1> x;
  x << obs.w_hat, obs.tau_ext_hat;
  Eigen::Matrix<double, 6, 1> x_prior = design.phi * x + design.gamma * u_o;
  Eigen::Matrix<double, 6, 1> x_post =
      x_prior + design.gain * (z_meas - x_prior.head<3>());
  if (!x_post.allFinite()) {
    throw NonFiniteState("observer_step: non-finite estimate");
  }
  ObserverState out;
  out.w_hat = x_post.head<3>();
  out.tau_ext_hat = x_post.tail<3>();
  return out;
}

}  // namespace tubemav
