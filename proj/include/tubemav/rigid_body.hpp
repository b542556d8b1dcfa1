#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "tubemav/errors.hpp"
#include "tubemav/so3.hpp"

namespace tubemav {

// Mass, inertia and geometry of the vehicle. Values not published for the
// real robot ship as plausible insect-scale defaults in configs/default.cfg.
struct PhysicalParams {
  double m = 0.7e-3;           // mass [kg]
  Eigen::Vector3d J_diag{2.0e-8, 2.0e-8, 3.0e-8};  // inertia diagonal [kg m^2]
  double g = 9.81;             // gravity [m/s^2]
  double c_dv = 2.0e-3;        // translational drag [N s/m]
  double c_dw = 2.0e-7;        // rotational drag [N m s/rad]
  double l_x = 0.01;           // actuator lever arm, x [m]
  double l_y = 0.01;           // actuator lever arm, y [m]

  Eigen::Matrix3d inertia() const { return J_diag.asDiagonal(); }

  void validate() const {
    if (!(m > 0.0) || !(g > 0.0) || !(l_x > 0.0) || !(l_y > 0.0) ||
        !(J_diag.array() > 0.0).all() || c_dv < 0.0 || c_dw < 0.0) {
      throw DimensionMismatch("PhysicalParams: invariant violated");
    }
  }
};

// Linear voltage-to-lift map f_i = alpha_i * v_i + beta_i, with per-actuator
// lift limits.
struct ActuatorCalibration {
  Eigen::Vector4d alpha = Eigen::Vector4d::Constant(1.2e-5);  // [N/V]
  Eigen::Vector4d beta = Eigen::Vector4d::Constant(-6.0e-4);  // [N]
  double f_min = 0.0;     // [N]
  double f_max = 6.0e-3;  // [N]

  void validate() const {
    if (!(alpha.array() > 0.0).all() || !(f_min <= f_max)) {
      throw DimensionMismatch("ActuatorCalibration: invariant violated");
    }
  }
};

// Full nonlinear 6-DOF state. R maps body to world.
struct RigidBodyState {
  Eigen::Vector3d p_w = Eigen::Vector3d::Zero();   // position [m]
  Eigen::Vector3d v_w = Eigen::Vector3d::Zero();   // velocity [m/s]
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  Eigen::Vector3d w_b = Eigen::Vector3d::Zero();   // body rates [rad/s]

  bool finite() const {
    return p_w.allFinite() && v_w.allFinite() && r.allFinite() &&
           w_b.allFinite();
  }
};

// Collective thrust plus body torque. The z torque component is carried for
// logging but is never actuated; allocation only sees tau_x, tau_y.
struct Wrench {
  double f_cmd = 0.0;                              // [N]
  Eigen::Vector3d tau_b = Eigen::Vector3d::Zero(); // [N m]
};

// Time-indexed disturbance signal, sampled at the integration step. Queries
// past the end return zero.
struct DisturbanceProfile {
  std::vector<Eigen::Vector3d> samples;

  Eigen::Vector3d at(std::size_t step) const {
    if (step < samples.size()) return samples[step];
    return Eigen::Vector3d::Zero();
  }
};

struct SimConfig {
  double ts = 5.0e-4;  // integration step [s]; 2 kHz control rate
  std::uint64_t seed = 0;
  DisturbanceProfile f_ext_profile;    // [N], world frame
  DisturbanceProfile tau_ext_profile;  // [N m], body frame
};

// Allocation matrix: per-actuator lifts -> (f_cmd, tau_x, tau_y).
inline Eigen::Matrix<double, 3, 4> allocation_matrix(
    const PhysicalParams& params) {
  Eigen::Matrix<double, 3, 4> a;
  const double lx = params.l_x;
  const double ly = params.l_y;
  // clang-format off
  a <<  1.0, 1.0, 1.0, 1.0,
        -ly,  ly,  ly, -ly,
        -lx, -lx,  lx,  lx;
  // clang-format on
  return a;
}

inline Eigen::Vector3d mixer_forward(const Eigen::Vector4d& forces,
                                     const PhysicalParams& params) {
  return allocation_matrix(params) * forces;
}

struct MixerInverseResult {
  Eigen::Vector4d forces;  // clamped to [f_min, f_max]
  bool saturated = false;
};

// Minimum-norm lift allocation via the Moore-Penrose pseudo-inverse. The
// allocation rows are mutually orthogonal, so A+ = A^T diag(1/(A A^T)).
inline MixerInverseResult mixer_inverse(const Eigen::Vector3d& wrench,
                                        const PhysicalParams& params,
                                        const ActuatorCalibration& cal) {
  const Eigen::Matrix<double, 3, 4> a = allocation_matrix(params);
  const Eigen::Vector3d gram_diag(4.0, 4.0 * params.l_y * params.l_y,
                                  4.0 * params.l_x * params.l_x);
  MixerInverseResult out;
  out.forces = a.transpose() * gram_diag.cwiseInverse().asDiagonal() * wrench;
  for (int i = 0; i < 4; ++i) {
    if (out.forces[i] < cal.f_min || out.forces[i] > cal.f_max) {
      out.saturated = true;
      out.forces[i] = std::clamp(out.forces[i], cal.f_min, cal.f_max);
    }
  }
  return out;
}

inline Eigen::Vector4d voltage_to_force(const Eigen::Vector4d& volts,
                                        const ActuatorCalibration& cal) {
  return cal.alpha.cwiseProduct(volts) + cal.beta;
}

inline Eigen::Vector4d force_to_voltage(const Eigen::Vector4d& forces,
                                        const ActuatorCalibration& cal) {
  return (forces - cal.beta).cwiseQuotient(cal.alpha);
}

namespace detail {

struct StateDerivative {
  Eigen::Vector3d dp;
  Eigen::Vector3d dv;
  Eigen::Matrix3d dr;
  Eigen::Vector3d dw;
};

inline StateDerivative dynamics(const RigidBodyState& s, const Wrench& u,
                                const Eigen::Vector3d& f_ext,
                                const Eigen::Vector3d& tau_ext,
                                const PhysicalParams& p) {
  StateDerivative d;
  d.dp = s.v_w;
  d.dv = (u.f_cmd / p.m) * s.r.col(2) -
         Eigen::Vector3d(0.0, 0.0, p.g) -
         (p.c_dv / p.m) * s.v_w + f_ext / p.m;
  const Eigen::Vector3d jw = p.J_diag.cwiseProduct(s.w_b);
  d.dw = (-s.w_b.cross(jw) + u.tau_b - p.c_dw * s.w_b + tau_ext)
             .cwiseQuotient(p.J_diag);
  d.dr = s.r * hat(s.w_b);
  return d;
}

}  // namespace detail

// One RK4 step of the Newton-Euler dynamics with isotropic drag and external
// force/torque. The rotation is integrated additively and projected back onto
// SO(3) after the step.
inline RigidBodyState step_dynamics(const RigidBodyState& state,
                                    const Wrench& wrench,
                                    const Eigen::Vector3d& f_ext,
                                    const Eigen::Vector3d& tau_ext,
                                    const PhysicalParams& params, double ts) {
  using detail::StateDerivative;
  auto advance = [](const RigidBodyState& s, const StateDerivative& d,
                    double h) {
    RigidBodyState out;
    out.p_w = s.p_w + h * d.dp;
    out.v_w = s.v_w + h * d.dv;
    out.r = s.r + h * d.dr;
    out.w_b = s.w_b + h * d.dw;
    return out;
  };

  const StateDerivative k1 = detail::dynamics(state, wrench, f_ext, tau_ext,
                                              params);
  const StateDerivative k2 = detail::dynamics(
      advance(state, k1, 0.5 * ts), wrench, f_ext, tau_ext, params);
  const StateDerivative k3 = detail::dynamics(
      advance(state, k2, 0.5 * ts), wrench, f_ext, tau_ext, params);
  const StateDerivative k4 = detail::dynamics(advance(state, k3, ts), wrench,
                                              f_ext, tau_ext, params);

  RigidBodyState out;
  const double h6 = ts / 6.0;
  out.p_w = state.p_w + h6 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
  out.v_w = state.v_w + h6 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
  out.r = orthonormalize(state.r +
                         h6 * (k1.dr + 2.0 * k2.dr + 2.0 * k3.dr + k4.dr));
  out.w_b = state.w_b + h6 * (k1.dw + 2.0 * k2.dw + 2.0 * k3.dw + k4.dw);

  if (!out.finite()) {
    throw NonFiniteState("step_dynamics: non-finite state component");
  }
  return out;
}

}  // namespace tubemav
