#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tubemav/attitude_control.hpp"
#include "tubemav/box_set.hpp"
#include "tubemav/errors.hpp"
#include "tubemav/lin_model.hpp"
#include "tubemav/qp.hpp"
#include "tubemav/riccati.hpp"

namespace tubemav {

// Tracking-cost weights, stored as diagonals of Qx (state) and Ru (input).
struct CostParams {
  Eigen::VectorXd qx_diag;
  Eigen::VectorXd ru_diag;

  CostParams() {
    qx_diag.resize(kLinStateDim);
    qx_diag << 4000.0, 4000.0, 10000.0, 40.0, 40.0, 80.0, 1.0, 1.0, 1.0, 1.0;
    ru_diag.resize(kLinInputDim);
    ru_diag << 2.0, 2.0, 5.0;
  }

  Eigen::MatrixXd qx() const { return qx_diag.asDiagonal(); }
  Eigen::MatrixXd ru() const { return ru_diag.asDiagonal(); }

  void validate() const {
    if (qx_diag.size() < 1 || ru_diag.size() < 1) {
      throw DimensionMismatch("CostParams: empty diagonals");
    }
    if ((qx_diag.array() <= 0.0).any() || (ru_diag.array() <= 0.0).any()) {
      throw Error("CostParams: weights must be strictly positive");
    }
  }
};

struct LqrDesign {
  Eigen::MatrixXd k;   // input x state feedback gain
  Eigen::MatrixXd px;  // DARE solution, terminal cost
};

inline LqrDesign lqr_design(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                            const Eigen::MatrixXd& qx,
                            const Eigen::MatrixXd& ru,
                            const DareOptions& opts = {}) {
  LqrDesign d;
  d.px = solve_dare(a, b, qx, ru, opts);
  d.k = dare_gain(a, b, ru, d.px);
  return d;
}

struct TubeOptions {
  int n_rollouts = 1000;
  int horizon_steps = 500;
  std::uint64_t seed = 42;
};

// Monte-Carlo approximation of the disturbance-invariant set of
// x+ = (A + BK) x + w, w uniform in the box W: componentwise maximum
// deviation from the origin over all rollouts and steps, symmetrized.
// Per-rollout RNG streams keep the result independent of rollout order.
inline BoxSet compute_tube(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                           const Eigen::MatrixXd& k, const BoxSet& w,
                           const TubeOptions& opts = {}) {
  const int n = static_cast<int>(a.rows());
  if (w.dim() != n || b.rows() != n || k.cols() != n || k.rows() != b.cols()) {
    throw DimensionMismatch("compute_tube: inconsistent dimensions");
  }
  const Eigen::MatrixXd a_k = a + b * k;
  if (spectral_radius(a_k) >= 1.0) {
    throw NotStabilizable("compute_tube: closed loop is not stable");
  }
  if ((w.lo + w.hi).lpNorm<Eigen::Infinity>() > 1e-12) {
    throw Error("compute_tube: W must be symmetric about the origin");
  }

  Eigen::VectorXd extent = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd x(n), wk(n);
  for (int r = 0; r < opts.n_rollouts; ++r) {
    std::seed_seq seq{static_cast<std::uint64_t>(opts.seed),
                      static_cast<std::uint64_t>(r)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    x.setZero();
    for (int t = 0; t < opts.horizon_steps; ++t) {
      for (int i = 0; i < n; ++i) wk[i] = unit(rng) * w.hi[i];
      x = a_k * x + wk;
      if (x.lpNorm<Eigen::Infinity>() > 1e6) {
        throw Divergence("compute_tube: rollout state exceeded 1e6");
      }
      extent = extent.cwiseMax(x.cwiseAbs());
    }
  }
  return BoxSet::symmetric(extent);
}

// Pontryagin-difference tightening for boxes: X loses the tube extent
// directly; U loses the box hull of K*Z, found by enumerating the 2^n
// vertices of Z.
inline std::pair<BoxSet, BoxSet> tighten(const BoxSet& x, const BoxSet& u,
                                         const BoxSet& z,
                                         const Eigen::MatrixXd& k) {
  const int n = z.dim();
  const int m = u.dim();
  if (x.dim() != n || k.rows() != m || k.cols() != n) {
    throw DimensionMismatch("tighten: inconsistent dimensions");
  }

  Eigen::VectorXd ku_extent = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd v(n);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    for (int i = 0; i < n; ++i) {
      v[i] = (mask >> i) & 1 ? z.hi[i] : z.lo[i];
    }
    ku_extent = ku_extent.cwiseMax((k * v).cwiseAbs());
  }

  const Eigen::VectorXd x_lo = x.lo + z.hi;
  const Eigen::VectorXd x_hi = x.hi - z.hi;
  const Eigen::VectorXd u_lo = u.lo + ku_extent;
  const Eigen::VectorXd u_hi = u.hi - ku_extent;
  if ((x_lo.array() > x_hi.array()).any() ||
      (u_lo.array() > u_hi.array()).any()) {
    throw EmptyTightenedSet("tighten: tube exceeds a constraint box");
  }
  return {BoxSet(x_lo, x_hi), BoxSet(u_lo, u_hi)};
}

// Ancillary gain, terminal cost, tube cross-section and tightened boxes.
struct TubeController {
  Eigen::MatrixXd k;
  Eigen::MatrixXd px;
  BoxSet z = BoxSet::zero(kLinStateDim);
  BoxSet x_tight = BoxSet::zero(kLinStateDim);
  BoxSet u_tight = BoxSet::zero(kLinInputDim);
};

inline TubeController make_tube_controller(const DiscreteLtiModel& model,
                                           const CostParams& cost,
                                           const BoxSet& x_box,
                                           const BoxSet& u_box,
                                           const TubeOptions& opts = {}) {
  cost.validate();
  TubeController tc;
  const LqrDesign lqr = lqr_design(model.a, model.b, cost.qx(), cost.ru());
  tc.k = lqr.k;
  tc.px = lqr.px;
  tc.z = compute_tube(model.a, model.b, tc.k, model.w, opts);
  std::tie(tc.x_tight, tc.u_tight) = tighten(x_box, u_box, tc.z, tc.k);
  return tc;
}

// N+1 desired states sliding with the controller clock.
struct ReferenceWindow {
  std::vector<Eigen::VectorXd> x_des;

  int horizon() const { return static_cast<int>(x_des.size()) - 1; }
  void validate(int n) const {
    if (static_cast<int>(x_des.size()) != n + 1) {
      throw DimensionMismatch("ReferenceWindow: expected length N+1");
    }
    for (const auto& x : x_des) {
      if (!x.allFinite()) throw NonFiniteState("ReferenceWindow: non-finite");
    }
  }
};

struct SafePlan {
  std::vector<Eigen::VectorXd> x_bar;  // length N+1
  std::vector<Eigen::VectorXd> u_bar;  // length N
  double kkt_residual = 0.0;
};

// Condensed tracking QP over z = [x_bar_0; u_bar_0..u_bar_{N-1}] with the
// state sequence eliminated through the dynamics. Constraint rows:
//   [0, 10)          x_bar_0 box: tightened state box intersected with the
//                    tube box around the measured state,
//   [10, 10+10N)     x_bar_1..N in the tightened state box,
//   [10+10N, +3N)    u_bar_0..N-1 in the tightened input box.
// The Hessian and constraint matrix depend only on (model, cost, tube, N),
// so they are factored once and reused every control step.
class TrackingQp {
 public:
  TrackingQp(const DiscreteLtiModel& model, const CostParams& cost,
             const TubeController& tube, int n)
      : model_(model),
        tube_(tube),
        n_(n),
        nx_(model.state_dim()),
        nu_(model.input_dim()) {
    if (n_ < 1) throw DimensionMismatch("TrackingQp: N must be >= 1");
    cost.validate();
    if (cost.qx_diag.size() != nx_ || cost.ru_diag.size() != nu_ ||
        tube.px.rows() != nx_ || tube.z.dim() != nx_ ||
        tube.x_tight.dim() != nx_ || tube.u_tight.dim() != nu_) {
      throw DimensionMismatch("TrackingQp: cost/tube sizes do not match");
    }
    const int nx = nx_;
    const int nu = nu_;
    const int nz = nx + nu * n_;

    // Prediction map X = M z, built from powers of A.
    m_ = Eigen::MatrixXd::Zero(nx * (n_ + 1), nz);
    m_.topLeftCorner(nx, nx).setIdentity();
    std::vector<Eigen::MatrixXd> apow_b(n_);  // A^k B
    apow_b[0] = model_.b;
    for (int k = 1; k < n_; ++k) apow_b[k] = model_.a * apow_b[k - 1];
    for (int i = 1; i <= n_; ++i) {
      m_.block(nx * i, 0, nx, nx) =
          model_.a * m_.block(nx * (i - 1), 0, nx, nx);
      for (int j = 0; j < i; ++j) {
        m_.block(nx * i, nx + nu * j, nx, nu) = apow_b[i - 1 - j];
      }
    }

    // Stage weights: Qx for stages 0..N-1, the terminal cost Px at N.
    q_bar_ = Eigen::MatrixXd::Zero(nx * (n_ + 1), nx * (n_ + 1));
    for (int i = 0; i < n_; ++i) {
      q_bar_.block(nx * i, nx * i, nx, nx) = cost.qx();
    }
    q_bar_.block(nx * n_, nx * n_, nx, nx) = tube.px;

    Eigen::MatrixXd h = 2.0 * (m_.transpose() * q_bar_ * m_);
    for (int j = 0; j < n_; ++j) {
      h.block(nx + nu * j, nx + nu * j, nu, nu) += 2.0 * cost.ru();
    }
    h = 0.5 * (h + h.transpose());

    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(nx + nx * n_ + nu * n_, nz);
    c.topRows(nx * (n_ + 1)) = m_;
    c.bottomRightCorner(nu * n_, nu * n_).setIdentity();
    qp_.emplace(std::move(h), std::move(c));

    // Stage-constant bounds; the first nx rows are finished per solve.
    lo_.resize(qp_->num_rows());
    hi_.resize(qp_->num_rows());
    for (int i = 1; i <= n_; ++i) {
      lo_.segment(nx * i, nx) = tube_.x_tight.lo;
      hi_.segment(nx * i, nx) = tube_.x_tight.hi;
    }
    for (int j = 0; j < n_; ++j) {
      lo_.segment(nx * (n_ + 1) + nu * j, nu) = tube_.u_tight.lo;
      hi_.segment(nx * (n_ + 1) + nu * j, nu) = tube_.u_tight.hi;
    }
  }

  int horizon() const { return n_; }

  SafePlan solve(const Eigen::VectorXd& x_t, const ReferenceWindow& ref,
                 const std::vector<QpConstraintRef>* hint = nullptr) {
    ref.validate(n_);
    if (!x_t.allFinite()) throw NonFiniteState("TrackingQp: x_t non-finite");
    if (x_t.size() != nx_) {
      throw DimensionMismatch("TrackingQp: x_t has wrong length");
    }
    const int nx = nx_;
    const int nu = nu_;

    Eigen::VectorXd r_stack(nx * (n_ + 1));
    for (int i = 0; i <= n_; ++i) r_stack.segment(nx * i, nx) = ref.x_des[i];
    const Eigen::VectorXd g = -2.0 * (m_.transpose() * (q_bar_ * r_stack));

    // Initial-state rows: x_t tube box intersected with the state box.
    lo_.head(nx) = (x_t - tube_.z.hi).cwiseMax(tube_.x_tight.lo);
    hi_.head(nx) = (x_t + tube_.z.hi).cwiseMin(tube_.x_tight.hi);

    const QpSolution sol = qp_->solve(g, lo_, hi_, hint);
    last_active_ = sol.active;

    SafePlan plan;
    plan.kkt_residual = sol.kkt_residual;
    plan.x_bar.resize(n_ + 1);
    plan.u_bar.resize(n_);
    plan.x_bar[0] = sol.z.head(nx);
    for (int j = 0; j < n_; ++j) {
      plan.u_bar[j] = sol.z.segment(nx + nu * j, nu);
      plan.x_bar[j + 1] = model_.a * plan.x_bar[j] + model_.b * plan.u_bar[j];
    }
    return plan;
  }

  // Active set from the latest solve, for warm starting the next one.
  const std::vector<QpConstraintRef>& last_active() const {
    return last_active_;
  }

  // Maps an active constraint one control step earlier, for reuse after the
  // horizon slides. Returns nullopt for rows that have no earlier image.
  std::optional<QpConstraintRef> shift_row(const QpConstraintRef& ref) const {
    const int nx = nx_;
    const int nu = nu_;
    const int state_rows = nx * (n_ + 1);
    if (ref.row < nx) return std::nullopt;  // initial-state box
    if (ref.row < state_rows) {
      const int stage = ref.row / nx;
      const int dim = ref.row % nx;
      if (stage == 1) return std::nullopt;  // would collide with x_bar_0 rows
      return QpConstraintRef{nx * (stage - 1) + dim, ref.side};
    }
    const int urow = ref.row - state_rows;
    const int stage = urow / nu;
    if (stage == 0) return std::nullopt;
    return QpConstraintRef{state_rows + urow - nu, ref.side};
  }

 private:
  DiscreteLtiModel model_;
  TubeController tube_;
  int n_;
  int nx_;
  int nu_;
  Eigen::MatrixXd m_;
  Eigen::MatrixXd q_bar_;
  std::optional<DenseQp> qp_;
  Eigen::VectorXd lo_, hi_;
  std::vector<QpConstraintRef> last_active_;
};

inline SafePlan solve_tracking_qp(const Eigen::VectorXd& x_t,
                                  const ReferenceWindow& ref,
                                  const DiscreteLtiModel& model,
                                  const CostParams& cost,
                                  const TubeController& tube, int n) {
  TrackingQp qp(model, cost, tube, n);
  return qp.solve(x_t, ref);
}

inline Eigen::VectorXd ancillary(const Eigen::VectorXd& x_t,
                                 const SafePlan& plan,
                                 const Eigen::MatrixXd& k) {
  if (plan.x_bar.empty() || plan.u_bar.empty()) {
    throw DimensionMismatch("ancillary: empty plan");
  }
  return plan.u_bar[0] + k * (x_t - plan.x_bar[0]);
}

// Thrust and attitude commands handed to the inner loop. f_cmd is
// mass-normalized (m/s^2); the mixer boundary multiplies by m.
struct ThrustAttitudeCmd {
  double f_cmd = 0.0;
  double phi_cmd = 0.0;
  double theta_cmd = 0.0;
};

// Undoes the small-angle assumptions of the linear model: divides thrust by
// the attitude cosines and scales the commanded tilt by g/f_cmd. The
// commanded-attitude pair comes from the linear state (inertial frame) and
// is rotated into the yaw frame of the vehicle.
inline ThrustAttitudeCmd compensate(const LinInput& u,
                                    const EulerZyx& state_euler,
                                    double dphi_cmd_i, double dtheta_cmd_i,
                                    double g) {
  ThrustAttitudeCmd out;
  const double c = std::cos(state_euler.phi) * std::cos(state_euler.theta);
  out.f_cmd = (u[2] + g) / c;
  const Eigen::Vector2d cmd_b = yaw_frame_to_body(
      Eigen::Vector2d(dphi_cmd_i, dtheta_cmd_i), state_euler.psi);
  const double scale = g / out.f_cmd;
  out.phi_cmd = scale * cmd_b[0];
  out.theta_cmd = scale * cmd_b[1];
  return out;
}

enum class EulerRateStyle {
  kPrinted,      // matrix exactly as published
  kTextbookZyx,  // conventional ZYX Euler-rate-to-body-rate map
};

// Maps (yaw, pitch, roll) rates to a body angular velocity. Input order is
// (psi_dot, theta_dot, phi_dot).
inline Eigen::Matrix3d euler_rate_matrix(double psi, double theta, double phi,
                                         EulerRateStyle style) {
  Eigen::Matrix3d e;
  if (style == EulerRateStyle::kPrinted) {
    e << 0.0, -std::sin(psi), std::cos(psi) * std::sin(theta),  //
        0.0, std::cos(psi), std::sin(psi) * std::cos(theta),    //
        1.0, 0.0, -std::sin(theta);
  } else {
    e << -std::sin(theta), 0.0, 1.0,                            //
        std::cos(theta) * std::sin(phi), std::cos(phi), 0.0,    //
        std::cos(theta) * std::cos(phi), -std::sin(phi), 0.0;
  }
  return e;
}

// Builds the inner-loop setpoint: desired rotation from the compensated
// attitude commands at the current yaw, desired body rate from the pitch and
// roll rate commands with zero commanded yaw rate.
inline AttitudeSetpoint setpoints(double phi_cmd, double theta_cmd,
                                  double psi_current, double theta_rate_cmd,
                                  double phi_rate_cmd,
                                  EulerRateStyle style = EulerRateStyle::kPrinted) {
  AttitudeSetpoint sp;
  sp.r_d = euler_to_rotation({psi_current, theta_cmd, phi_cmd});
  const Eigen::Matrix3d e =
      euler_rate_matrix(psi_current, theta_cmd, phi_cmd, style);
  sp.w_d = e * Eigen::Vector3d(0.0, theta_rate_cmd, phi_rate_cmd);
  return sp;
}

// Outer-loop controller: owns the offline tube design, the condensed QP,
// warm starting, and the shifted-plan fallback on infeasibility.
class RtmpcController {
 public:
  RtmpcController(const DiscreteLtiModel& model, const CostParams& cost,
                  const BoxSet& x_box, const BoxSet& u_box, int n = 50,
                  const TubeOptions& tube_opts = {})
      : model_(model),
        tube_(make_tube_controller(model, cost, x_box, u_box, tube_opts)),
        qp_(model, cost, tube_, n) {}

  RtmpcController(const DiscreteLtiModel& model, const CostParams& cost,
                  const TubeController& tube, int n)
      : model_(model), tube_(tube), qp_(model, cost, tube_, n) {}

  const TubeController& tube() const { return tube_; }
  const DiscreteLtiModel& model() const { return model_; }
  int horizon() const { return qp_.horizon(); }
  int infeasible_count() const { return infeasible_count_; }
  bool last_was_fallback() const { return last_was_fallback_; }

  // Solves the tracking QP (warm-started from the previous active set).
  // On infeasibility the previous plan is shifted one step with the last
  // input repeated; with no previous plan the error propagates.
  const SafePlan& update(const Eigen::VectorXd& x_t,
                         const ReferenceWindow& ref) {
    std::vector<QpConstraintRef> hint;
    for (const auto& a : qp_.last_active()) {
      if (auto shifted = qp_.shift_row(a)) hint.push_back(*shifted);
    }
    try {
      plan_ = qp_.solve(x_t, ref, hint.empty() ? nullptr : &hint);
      last_was_fallback_ = false;
    } catch (const Infeasible&) {
      ++infeasible_count_;
      if (!has_plan_) throw;
      shift_plan();
      last_was_fallback_ = true;
    }
    has_plan_ = true;
    return plan_;
  }

  const SafePlan& current_plan() const {
    if (!has_plan_) throw Error("RtmpcController: no plan computed yet");
    return plan_;
  }

  Eigen::VectorXd command(const Eigen::VectorXd& x_t) const {
    return ancillary(x_t, current_plan(), tube_.k);
  }

 private:
  void shift_plan() {
    const int n = qp_.horizon();
    for (int j = 0; j + 1 < n; ++j) plan_.u_bar[j] = plan_.u_bar[j + 1];
    for (int i = 0; i < n; ++i) plan_.x_bar[i] = plan_.x_bar[i + 1];
    plan_.x_bar[n] =
        model_.a * plan_.x_bar[n - 1] + model_.b * plan_.u_bar[n - 1];
  }

  DiscreteLtiModel model_;
  TubeController tube_;
  TrackingQp qp_;
  SafePlan plan_;
  bool has_plan_ = false;
  bool last_was_fallback_ = false;
  int infeasible_count_ = 0;
};

// Tube dump: one line per state dimension, `name lo hi`.
inline const char* lin_state_dim_name(int i) {
  static const char* names[kLinStateDim] = {
      "px", "py", "pz", "vx", "vy", "vz", "phi", "theta", "dphi_cmd",
      "dtheta_cmd"};
  if (i < 0 || i >= kLinStateDim) throw DimensionMismatch("bad state dim");
  return names[i];
}

inline void tube_write(const BoxSet& z, const std::string& path) {
  if (z.lo.size() != kLinStateDim) {
    throw DimensionMismatch("tube_write: expected a state-dimension box");
  }
  std::ofstream out(path);
  if (!out) throw Io("tube_write: cannot open " + path);
  out << std::setprecision(17);
  for (int i = 0; i < kLinStateDim; ++i) {
    out << lin_state_dim_name(i) << " " << z.lo[i] << " " << z.hi[i] << "\n";
  }
  if (!out) throw Io("tube_write: write failed for " + path);
}

inline BoxSet tube_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Io("tube_read: cannot open " + path);
  BoxSet z;
  z.lo.resize(kLinStateDim);
  z.hi.resize(kLinStateDim);
  std::string line;
  for (int i = 0; i < kLinStateDim; ++i) {
    if (!std::getline(in, line)) {
      throw FormatVersionMismatch("tube_read: truncated file");
    }
    std::istringstream row(line);
    std::string name;
    if (!(row >> name >> z.lo[i] >> z.hi[i]) ||
        name != lin_state_dim_name(i)) {
      throw FormatVersionMismatch("tube_read: bad line for dimension " +
                                  std::to_string(i));
    }
  }
  return z;
}

}  // namespace tubemav
