#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "tubemav/box_set.hpp"
#include "tubemav/errors.hpp"
#include "tubemav/rigid_body.hpp"
#include "tubemav/so3.hpp"

namespace tubemav {

inline constexpr int kLinStateDim = 10;
inline constexpr int kLinInputDim = 3;
inline constexpr double kPi = 3.14159265358979323846;

// State ordering of the hover-linearized model:
//   [0..2] p_W, [3..5] v_W, [6] phi_I, [7] theta_I,
//   [8] dphi_cmd_I, [9] dtheta_cmd_I
// Input ordering: [0] roll-rate cmd, [1] pitch-rate cmd, [2] df_cmd [m/s^2].
using LinState = Eigen::Matrix<double, kLinStateDim, 1>;
using LinInput = Eigen::Matrix<double, kLinInputDim, 1>;

enum LinStateIndex {
  kPx = 0, kPy = 1, kPz = 2,
  kVx = 3, kVy = 4, kVz = 5,
  kPhi = 6, kTheta = 7,
  kPhiCmd = 8, kThetaCmd = 9,
};

// Intrinsic z-y-x Euler angles; R = Rz(psi) Ry(theta) Rx(phi).
struct EulerZyx {
  double psi = 0.0;    // yaw [rad]
  double theta = 0.0;  // pitch [rad]
  double phi = 0.0;    // roll [rad]
};

inline Eigen::Matrix3d euler_to_rotation(const EulerZyx& e) {
  return rot_z(e.psi) * rot_y(e.theta) * rot_x(e.phi);
}

inline EulerZyx rotation_to_euler(const Eigen::Matrix3d& r) {
  if (std::abs(r(2, 0)) >= 1.0 - 1e-9) {
    throw GimbalLock("rotation_to_euler: |R(2,0)| at gimbal lock");
  }
  EulerZyx e;
  e.theta = -std::asin(r(2, 0));
  e.psi = std::atan2(r(1, 0), r(0, 0));
  e.phi = std::atan2(r(2, 1), r(2, 2));
  return e;
}

// Roll/pitch pairs expressed in the yaw-fixed frame I map to body values via
// R_BI = [[cos psi, sin psi], [-sin psi, cos psi]].
inline Eigen::Vector2d yaw_frame_to_body(const Eigen::Vector2d& phi_theta_i,
                                         double psi) {
  Eigen::Matrix2d r_bi;
  r_bi << std::cos(psi), std::sin(psi), -std::sin(psi), std::cos(psi);
  return r_bi * phi_theta_i;
}

inline Eigen::Vector2d body_to_yaw_frame(const Eigen::Vector2d& phi_theta_b,
                                         double psi) {
  Eigen::Matrix2d r_ib;
  r_ib << std::cos(psi), -std::sin(psi), std::sin(psi), std::cos(psi);
  return r_ib * phi_theta_b;
}

// First-order closed-loop attitude response, identified from step responses
// of the simulated inner loop.
struct AttitudeLoopParams {
  double k_phi = 1.0;
  double k_theta = 1.0;
  double tau_phi = 0.012;   // [s]
  double tau_theta = 0.012; // [s]

  void validate() const {
    if (!(k_phi > 0.0) || !(k_theta > 0.0) || !(tau_phi > 0.0) ||
        !(tau_theta > 0.0)) {
      throw DimensionMismatch("AttitudeLoopParams: entries must be positive");
    }
  }
};

// Uncertain discrete model x+ = A x + B u + w, w in W. The flight stack
// always uses the 10-state hover model; the matrices stay dynamically sized
// so the MPC machinery can be exercised on small analytic systems too.
struct DiscreteLtiModel {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
  double tc = 0.02;  // sampling period [s]
  BoxSet w;          // box disturbance set; only velocity rows nonzero

  int state_dim() const { return static_cast<int>(a.rows()); }
  int input_dim() const { return static_cast<int>(b.cols()); }
};

// Continuous-time hover model:
//   dp = v;  dvx = g*theta_I;  dvy = -g*phi_I;  dvz = df_cmd;
//   dphi_I = (k_phi*dphi_cmd - phi_I)/tau_phi (theta likewise);
//   d(dphi_cmd) = roll-rate cmd;  d(dtheta_cmd) = pitch-rate cmd.
inline void build_continuous(
    const PhysicalParams& params, const AttitudeLoopParams& att,
    Eigen::Matrix<double, kLinStateDim, kLinStateDim>& ac,
    Eigen::Matrix<double, kLinStateDim, kLinInputDim>& bc) {
  ac.setZero();
  bc.setZero();
  ac.block<3, 3>(kPx, kVx).setIdentity();
  ac(kVx, kTheta) = params.g;
  ac(kVy, kPhi) = -params.g;
  ac(kPhi, kPhi) = -1.0 / att.tau_phi;
  ac(kPhi, kPhiCmd) = att.k_phi / att.tau_phi;
  ac(kTheta, kTheta) = -1.0 / att.tau_theta;
  ac(kTheta, kThetaCmd) = att.k_theta / att.tau_theta;
  bc(kVz, 2) = 1.0;
  bc(kPhiCmd, 0) = 1.0;
  bc(kThetaCmd, 1) = 1.0;
}

// Matrix exponential by scaling and squaring of the Taylor series.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  int squarings = 0;
  double norm = m.cwiseAbs().rowwise().sum().maxCoeff();  // inf-norm
  while (norm > 0.5) {
    norm *= 0.5;
    ++squarings;
  }
  const Eigen::MatrixXd a = m / std::pow(2.0, squarings);

  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k <= 40; ++k) {
    term = (term * a) / static_cast<double>(k);
    result += term;
    if (term.norm() <= 1e-20 * result.norm()) break;
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

// Exact zero-order-hold discretization via the augmented-matrix exponential:
//   exp([Ac Bc; 0 0] Tc) = [A B; 0 I].
inline void discretize_zoh(const Eigen::MatrixXd& ac,
                           const Eigen::MatrixXd& bc, double tc,
                           Eigen::MatrixXd& a, Eigen::MatrixXd& b) {
  if (tc <= 0.0) throw DimensionMismatch("discretize_zoh: Tc must be > 0");
  const int n = static_cast<int>(ac.rows());
  const int m = static_cast<int>(bc.cols());
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = ac * tc;
  aug.topRightCorner(n, m) = bc * tc;
  const Eigen::MatrixXd e = expm(aug);
  a = e.topLeftCorner(n, n);
  b = e.topRightCorner(n, m);
}

// Bounded force disturbance mapped to a per-step velocity increment:
// rows 3..5 of W are +-(f_ext_bar / m) * Tc, all other rows zero.
inline BoxSet disturbance_set(double f_ext_bar, const PhysicalParams& params,
                              double tc) {
  if (f_ext_bar < 0.0) {
    throw DimensionMismatch("disturbance_set: f_ext_bar must be >= 0");
  }
  Eigen::VectorXd half = Eigen::VectorXd::Zero(kLinStateDim);
  half.segment<3>(kVx).setConstant(f_ext_bar / params.m * tc);
  return BoxSet::symmetric(half);
}

// Default constraint boxes: actual and commanded tilt below max_tilt,
// mass-normalized thrust deviation below dfcmd_frac * g, wide
// position/velocity/rate-command bounds.
inline BoxSet default_state_box(double max_tilt_rad = 25.0 * kPi / 180.0,
                                double max_v = 2.0, double max_p = 2.0) {
  Eigen::VectorXd half(kLinStateDim);
  half << max_p, max_p, max_p, max_v, max_v, max_v, max_tilt_rad,
      max_tilt_rad, max_tilt_rad, max_tilt_rad;
  return BoxSet::symmetric(half);
}

inline BoxSet default_input_box(double max_rate_cmd = 10.0,
                                double dfcmd_frac = 0.8, double g = 9.81) {
  Eigen::VectorXd half(kLinInputDim);
  half << max_rate_cmd, max_rate_cmd, dfcmd_frac * g;
  return BoxSet::symmetric(half);
}

inline DiscreteLtiModel make_hover_model(const PhysicalParams& params,
                                         const AttitudeLoopParams& att,
                                         double tc, double f_ext_bar) {
  Eigen::Matrix<double, kLinStateDim, kLinStateDim> ac;
  Eigen::Matrix<double, kLinStateDim, kLinInputDim> bc;
  build_continuous(params, att, ac, bc);
  Eigen::MatrixXd a, b;
  discretize_zoh(ac, bc, tc, a, b);
  DiscreteLtiModel model;
  model.a = a;
  model.b = b;
  model.tc = tc;
  model.w = disturbance_set(f_ext_bar, params, tc);
  return model;
}

// Least-squares fit of k, tau for the first-order step response
// y(t) = k * u_step * (1 - exp(-t / tau)), y(0) = 0. Golden-section search
// on tau with the gain solved in closed form at each candidate.
struct FirstOrderFit {
  double k = 0.0;
  double tau = 0.0;
  double rms_residual = 0.0;
};

inline FirstOrderFit fit_first_order(const Eigen::VectorXd& t,
                                     const Eigen::VectorXd& y,
                                     double u_step) {
  if (t.size() != y.size() || t.size() < 3 || u_step == 0.0) {
    throw DimensionMismatch("fit_first_order: bad sample arrays");
  }
  const auto sse_and_gain = [&](double tau) {
    Eigen::ArrayXd basis = 1.0 - (-t.array() / tau).exp();
    const double denom = (basis * basis).sum();
    const double k = denom > 0.0 ? (basis * y.array()).sum() / denom : 0.0;
    const double sse = (y.array() - k * basis).square().sum();
    return std::pair<double, double>(sse, k);
  };

  double lo = 1e-5;
  double hi = t[t.size() - 1];
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo);
  double x2 = lo + gr * (hi - lo);
  double f1 = sse_and_gain(x1).first;
  double f2 = sse_and_gain(x2).first;
  for (int it = 0; it < 200 && (hi - lo) > 1e-12; ++it) {
    if (f1 < f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = sse_and_gain(x1).first;
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = sse_and_gain(x2).first;
    }
  }
  FirstOrderFit fit;
  fit.tau = 0.5 * (lo + hi);
  auto [sse, gain] = sse_and_gain(fit.tau);
  fit.k = gain / u_step;
  fit.rms_residual = std::sqrt(sse / static_cast<double>(t.size()));
  return fit;
}

// Model dump: A and B row-major, the sampling period and the disturbance
// bounds, in a plain text format suitable for golden-file comparison.
inline void model_write(const DiscreteLtiModel& model,
                        const std::string& path) {
  if (model.state_dim() != kLinStateDim ||
      model.input_dim() != kLinInputDim) {
    throw DimensionMismatch("model_write: expected the 10x3 hover model");
  }
  std::ofstream out(path);
  if (!out) throw Io("model_write: cannot open " + path);
  out << "#modelfmt=1\n" << std::setprecision(17);
  out << "tc " << model.tc << "\n";
  out << "A\n";
  for (int i = 0; i < kLinStateDim; ++i) {
    for (int j = 0; j < kLinStateDim; ++j) {
      out << (j ? " " : "") << model.a(i, j);
    }
    out << "\n";
  }
  out << "B\n";
  for (int i = 0; i < kLinStateDim; ++i) {
    for (int j = 0; j < kLinInputDim; ++j) {
      out << (j ? " " : "") << model.b(i, j);
    }
    out << "\n";
  }
  out << "W\n";
  for (int i = 0; i < kLinStateDim; ++i) {
    out << model.w.lo[i] << " " << model.w.hi[i] << "\n";
  }
  if (!out) throw Io("model_write: write failed for " + path);
}

inline DiscreteLtiModel model_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Io("model_read: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "#modelfmt=1") {
    throw FormatVersionMismatch("model_read: expected #modelfmt=1 header");
  }
  DiscreteLtiModel model;
  const auto expect = [&](const std::string& want) {
    if (!std::getline(in, line) || line != want) {
      throw FormatVersionMismatch("model_read: expected '" + want +
                                  "' marker");
    }
  };
  {
    if (!std::getline(in, line)) {
      throw FormatVersionMismatch("model_read: truncated file");
    }
    std::istringstream row(line);
    std::string key;
    if (!(row >> key >> model.tc) || key != "tc") {
      throw FormatVersionMismatch("model_read: expected 'tc <value>' line");
    }
  }
  const auto read_row = [&](double* dst, int count) {
    if (!std::getline(in, line)) {
      throw FormatVersionMismatch("model_read: truncated file");
    }
    std::istringstream row(line);
    for (int j = 0; j < count; ++j) {
      if (!(row >> dst[j])) {
        throw FormatVersionMismatch("model_read: short matrix row");
      }
    }
  };
  model.a.resize(kLinStateDim, kLinStateDim);
  model.b.resize(kLinStateDim, kLinInputDim);
  expect("A");
  for (int i = 0; i < kLinStateDim; ++i) {
    Eigen::VectorXd row(kLinStateDim);
    read_row(row.data(), kLinStateDim);
    model.a.row(i) = row.transpose();
  }
  expect("B");
  for (int i = 0; i < kLinStateDim; ++i) {
    Eigen::VectorXd row(kLinInputDim);
    read_row(row.data(), kLinInputDim);
    model.b.row(i) = row.transpose();
  }
  expect("W");
  model.w.lo.resize(kLinStateDim);
  model.w.hi.resize(kLinStateDim);
  for (int i = 0; i < kLinStateDim; ++i) {
    double pair[2];
    read_row(pair, 2);
    model.w.lo[i] = pair[0];
    model.w.hi[i] = pair[1];
  }
  return model;
}

}  // namespace tubemav
