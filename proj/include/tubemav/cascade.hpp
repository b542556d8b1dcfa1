#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "tubemav/attitude_control.hpp"
#include "tubemav/imitation.hpp"
#include "tubemav/lin_model.hpp"
#include "tubemav/rigid_body.hpp"
#include "tubemav/rtmpc.hpp"

namespace tubemav {

// Everything the cascaded loop needs besides the outer controller itself.
struct CascadeParams {
  PhysicalParams physical;
  ActuatorCalibration calib;
  AttitudeGains gains;
  ObserverConfig observer;
  bool use_observer = true;
  EulerRateStyle rate_style = EulerRateStyle::kPrinted;
  BoxSet u_limits = default_input_box();  // actuator-interface clamp
  double tc = 0.02;   // outer (controller) period [s]
  double ts = 5e-4;   // inner (sim/attitude) period [s]

  int inner_steps_per_outer() const {
    const double ratio = tc / ts;
    const int n = static_cast<int>(std::lround(ratio));
    if (n < 1 || std::abs(ratio - n) > 1e-9) {
      throw DimensionMismatch("CascadeParams: Tc must be a multiple of Ts");
    }
    return n;
  }
};

// One inner-rate log row; the state is sampled before the step, the
// commands are the ones applied over [t, t + Ts).
struct InnerSample {
  double t = 0.0;
  RigidBodyState state;
  double f_cmd = 0.0;                                  // applied thrust [N]
  Eigen::Vector2d tau_xy = Eigen::Vector2d::Zero();    // applied torque [N m]
  Eigen::Vector3d f_ext = Eigen::Vector3d::Zero();
  Eigen::Vector3d tau_ext = Eigen::Vector3d::Zero();
  bool saturated = false;
  Eigen::Vector3d tau_hat = Eigen::Vector3d::Zero();
  Eigen::Vector3d w_hat = Eigen::Vector3d::Zero();
};

// Runs the inner loop at the sim rate under zero-order-held outer commands.
// The commanded-attitude integrator that the linear model carries as state
// lives here: it ramps at the commanded rate within the control period, and
// advances by exactly Tc * u across one outer step.
class CascadeEngine {
 public:
  CascadeEngine(const CascadeParams& params, const SimConfig& sim)
      : p_(params),
        sim_(sim),
        n_inner_(params.inner_steps_per_outer()),
        obs_design_(observer_design(params.physical.J_diag, params.observer)) {
    p_.physical.validate();
    p_.gains.validate();
    if (std::abs(p_.ts - sim_.ts) > 1e-15) {
      throw DimensionMismatch("CascadeEngine: CascadeParams.ts != SimConfig.ts");
    }
  }

  const RigidBodyState& state() const { return state_; }
  const std::vector<InnerSample>& log() const { return log_; }
  double time() const { return static_cast<double>(step_count_) * sim_.ts; }
  int saturation_count() const { return saturation_count_; }
  int input_clamp_count() const { return input_clamp_count_; }
  const ObserverState& observer() const { return obs_; }

  void set_command_state(const Eigen::Vector2d& cmd) { cmd_ = cmd; }

  // Measured linear state: position, velocity, tilt rotated into the
  // inertial (yaw-corrected) frame, and the internal command integrator.
  LinState measure() const {
    const EulerZyx e = rotation_to_euler(state_.r);
    const Eigen::Vector2d tilt_i =
        body_to_yaw_frame(Eigen::Vector2d(e.phi, e.theta), e.psi);
    LinState x;
    x << state_.p_w, state_.v_w, tilt_i[0], tilt_i[1], cmd_[0], cmd_[1];
    return x;
  }

  // Holds the outer input for one control period. Inputs outside the
  // actuator-interface box are clamped and counted.
  void apply_outer(const LinInput& u_raw) {
    LinInput u = u_raw;
    for (int i = 0; i < kLinInputDim; ++i) {
      const double c = std::clamp(u[i], p_.u_limits.lo[i], p_.u_limits.hi[i]);
      if (c != u[i]) {
        u[i] = c;
        ++input_clamp_count_;
      }
    }
    const Eigen::Vector2d cmd_start = cmd_;
    for (int j = 0; j < n_inner_; ++j) {
      cmd_ = cmd_start + (static_cast<double>(j) * sim_.ts) *
                             Eigen::Vector2d(u[0], u[1]);
      inner_step(u);
    }
    cmd_ = cmd_start + p_.tc * Eigen::Vector2d(u[0], u[1]);
  }

 private:
  void inner_step(const LinInput& u) {
    const EulerZyx e = rotation_to_euler(state_.r);
    const ThrustAttitudeCmd tac =
        compensate(u, e, cmd_[0], cmd_[1], p_.physical.g);
    const AttitudeSetpoint sp = setpoints(tac.phi_cmd, tac.theta_cmd, e.psi,
                                          u[1], u[0], p_.rate_style);
    const Eigen::Vector3d tau_ext_hat =
        p_.use_observer ? obs_.tau_ext_hat : Eigen::Vector3d::Zero();
    const Eigen::Vector3d tau_cmd =
        control_torque(state_.r, state_.w_b, sp, tau_ext_hat, p_.gains,
                       p_.physical.J_diag);

    // Allocate with the z torque dropped, then re-assemble the wrench the
    // clamped actuators actually produce.
    const Eigen::Vector3d wrench_des(p_.physical.m * tac.f_cmd, tau_cmd[0],
                                     tau_cmd[1]);
    const MixerInverseResult mix =
        mixer_inverse(wrench_des, p_.physical, p_.calib);
    if (mix.saturated) ++saturation_count_;
    const Eigen::Vector3d applied = mixer_forward(mix.forces, p_.physical);
    Wrench w;
    w.f_cmd = applied[0];
    w.tau_b = Eigen::Vector3d(applied[1], applied[2], 0.0);

    InnerSample rec;
    rec.t = time();
    rec.state = state_;
    rec.f_cmd = w.f_cmd;
    rec.tau_xy = applied.tail<2>();
    rec.f_ext = sim_.f_ext_profile.at(step_count_);
    rec.tau_ext = sim_.tau_ext_profile.at(step_count_);
    rec.saturated = mix.saturated;
    rec.tau_hat = obs_.tau_ext_hat;
    rec.w_hat = obs_.w_hat;
    log_.push_back(rec);

    const Eigen::Vector3d u_o =
        w.tau_b - state_.w_b.cross(
                      p_.physical.J_diag.cwiseProduct(state_.w_b).eval());
    state_ = step_dynamics(state_, w, rec.f_ext, rec.tau_ext, p_.physical,
                           sim_.ts);
    if (p_.use_observer) {
      obs_ = observer_step(obs_, u_o, state_.w_b, obs_design_);
    }
    ++step_count_;
  }

  CascadeParams p_;
  SimConfig sim_;
  int n_inner_;
  ObserverDesign obs_design_;
  RigidBodyState state_;
  ObserverState obs_;
  Eigen::Vector2d cmd_ = Eigen::Vector2d::Zero();  // commanded tilt, inertial
  long step_count_ = 0;
  int saturation_count_ = 0;
  int input_clamp_count_ = 0;
  std::vector<InnerSample> log_;
};

// Expert rollout at the controller rate: T+1 tuples of measured state,
// applied input, nominal plan head, and the reference window. The engine
// should be configured without disturbances and without the observer.
inline Demonstration collect_demonstration(
    CascadeEngine& engine, RtmpcController& controller,
    const std::function<ReferenceWindow(int)>& ref_at, int t_steps) {
  if (t_steps < 0) {
    throw DimensionMismatch("collect_demonstration: T must be >= 0");
  }
  Demonstration demo;
  demo.reserve(t_steps + 1);
  for (int t = 0; t <= t_steps; ++t) {
    DemoStep step;
    step.x = engine.measure();
    step.ref = ref_at(t);
    const SafePlan& plan = controller.update(step.x, step.ref);
    step.u_bar = plan.u_bar[0];
    step.x_bar = plan.x_bar[0];
    step.u = ancillary(step.x, plan, controller.tube().k);
    demo.push_back(step);
    if (t < t_steps) engine.apply_outer(step.u);
  }
  return demo;
}

// Identifies the closed inner loop's tilt response as a first-order system
// by stepping the commanded-attitude integrator and fitting the simulated
// tilt trajectory. Feeds the hover linearization with in-repo values.
inline AttitudeLoopParams fit_attitude_loop(const CascadeParams& params,
                                            double step_rad = 5.0 * kPi /
                                                              180.0,
                                            double duration = 0.3) {
  AttitudeLoopParams out;
  SimConfig sim;
  sim.ts = params.ts;
  for (int axis = 0; axis < 2; ++axis) {
    CascadeEngine engine(params, sim);
    engine.set_command_state(axis == 0 ? Eigen::Vector2d(step_rad, 0.0)
                                       : Eigen::Vector2d(0.0, step_rad));
    const int outer_steps =
        static_cast<int>(std::ceil(duration / params.tc));
    for (int s = 0; s < outer_steps; ++s) {
      engine.apply_outer(LinInput::Zero());
    }
    const auto& log = engine.log();
    Eigen::VectorXd t(log.size()), y(log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
      t[i] = log[i].t;
      const EulerZyx e = rotation_to_euler(log[i].state.r);
      const Eigen::Vector2d tilt_i =
          body_to_yaw_frame(Eigen::Vector2d(e.phi, e.theta), e.psi);
      y[i] = tilt_i[axis];
    }
    const FirstOrderFit fit = fit_first_order(t, y, step_rad);
    if (axis == 0) {
      out.k_phi = fit.k;
      out.tau_phi = fit.tau;
    } else {
      out.k_theta = fit.k;
      out.tau_theta = fit.tau;
    }
  }
  out.validate();
  return out;
}

}  // namespace tubemav
