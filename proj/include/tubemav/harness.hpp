#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tubemav/cascade.hpp"
#include "tubemav/config.hpp"
#include "tubemav/errors.hpp"
#include "tubemav/imitation.hpp"
#include "tubemav/mlp.hpp"
#include "tubemav/rtmpc.hpp"

namespace tubemav {

enum class TaskKind { kHover, kRamp, kDisturbedRamp, kCircle };

// Benchmark flight task. Maneuvers start after a settling segment so the
// metric window (t >= t0) begins with the vehicle airborne and regulated.
struct TrajectoryTask {
  TaskKind kind = TaskKind::kHover;
  double duration = 3.0;     // total flight [s]
  double start_time = 1.0;   // maneuver onset [s]
  Eigen::Vector3d ramp_amplitude{0.03, 0.03, 0.03};  // [m]
  double ramp_duration = 1.0;                        // [s]
  double circle_radius = 0.05;   // [m], x-z plane
  double circle_speed = 0.052;   // tangential [m/s]
  int n_pulses = 3;              // disturbed-ramp force pulses
  double pulse_duration = 0.05;  // [s]
  double pulse_force_frac = 0.3;   // of m*g
  double pulse_torque_frac = 0.2;  // of m*g*l_x

  void validate() const {
    if (duration <= 0.0 || start_time < 0.0 || ramp_duration <= 0.0 ||
        circle_radius <= 0.0 || circle_speed <= 0.0) {
      throw Error("TrajectoryTask: durations and geometry must be positive");
    }
  }
};

inline TrajectoryTask make_task(const std::string& name) {
  TrajectoryTask t;
  if (name == "t1" || name == "ramp") {
    t.kind = TaskKind::kRamp;
    t.duration = 3.0;
  } else if (name == "t2" || name == "disturbed_ramp") {
    t.kind = TaskKind::kDisturbedRamp;
    t.duration = 6.0;
  } else if (name == "t3" || name == "circle") {
    t.kind = TaskKind::kCircle;
    t.duration = 7.5;
  } else if (name == "hover") {
    t.kind = TaskKind::kHover;
    t.duration = 3.0;
  } else {
    throw Error("make_task: unknown task '" + name +
                "' (use t1|t2|t3|ramp|disturbed_ramp|circle|hover)");
  }
  return t;
}

// Desired linear state at an arbitrary time; the final state is held past
// the trajectory end. Attitude references stay zero.
inline LinState reference_state(const TrajectoryTask& task, double t) {
  LinState x = LinState::Zero();
  const double tm = t - task.start_time;
  switch (task.kind) {
    case TaskKind::kHover:
      break;
    case TaskKind::kRamp:
    case TaskKind::kDisturbedRamp: {
      if (tm <= 0.0) break;
      if (tm >= task.ramp_duration) {
        x.segment<3>(0) = task.ramp_amplitude;
        break;
      }
      x.segment<3>(0) = task.ramp_amplitude * (tm / task.ramp_duration);
      x.segment<3>(3) = task.ramp_amplitude / task.ramp_duration;
      break;
    }
    case TaskKind::kCircle: {
      if (tm <= 0.0) break;
      const double w = task.circle_speed / task.circle_radius;
      const double lap = 2.0 * kPi / w;
      if (tm >= lap) break;  // one lap, back at the start point
      const double a = w * tm;
      x[0] = task.circle_radius * (std::cos(a) - 1.0);
      x[2] = task.circle_radius * std::sin(a);
      x[3] = -task.circle_speed * std::sin(a);
      x[5] = task.circle_speed * std::cos(a);
      break;
    }
  }
  return x;
}

inline ReferenceWindow make_reference(const TrajectoryTask& task, double tc,
                                      int n, int outer_step) {
  ReferenceWindow ref;
  ref.x_des.resize(n + 1);
  for (int i = 0; i <= n; ++i) {
    ref.x_des[i] =
        reference_state(task, static_cast<double>(outer_step + i) * tc);
  }
  return ref;
}

// Disturbance profiles for the task, sampled at the sim rate. The
// disturbed ramp carries n_pulses horizontal force pulses (with torque
// pulses in the same windows); directions are drawn from the seed.
inline void build_task_disturbances(const TrajectoryTask& task,
                                    const PhysicalParams& params, double ts,
                                    int n_steps, std::uint64_t seed,
                                    SimConfig& sim) {
  sim.f_ext_profile.samples.assign(n_steps, Eigen::Vector3d::Zero());
  sim.tau_ext_profile.samples.assign(n_steps, Eigen::Vector3d::Zero());
  if (task.kind != TaskKind::kDisturbedRamp || task.n_pulses < 1) return;

  std::mt19937_64 rng(seed ^ 0xd1b54a32d192ed03ULL);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  const double span = task.duration - task.start_time - 0.5;
  for (int k = 0; k < task.n_pulses; ++k) {
    const double t_on = task.start_time + (k + 1) * span /
                                              (task.n_pulses + 1);
    const double gf = angle(rng);
    const double gt = angle(rng);
    const Eigen::Vector3d f = task.pulse_force_frac * params.m * params.g *
                              Eigen::Vector3d(std::cos(gf), std::sin(gf), 0);
    const Eigen::Vector3d tau = task.pulse_torque_frac * params.m * params.g *
                                params.l_x *
                                Eigen::Vector3d(std::cos(gt), std::sin(gt), 0);
    const int first = static_cast<int>(std::floor(t_on / ts));
    const int last =
        static_cast<int>(std::floor((t_on + task.pulse_duration) / ts));
    for (int s = std::max(first, 0); s < std::min(last, n_steps); ++s) {
      sim.f_ext_profile.samples[s] += f;
      sim.tau_ext_profile.samples[s] += tau;
    }
  }
}

// Sustained horizontal force at a seed-drawn direction, as a fraction of
// the vehicle weight. Used by the robustness protocol.
inline DisturbanceProfile sustained_force_profile(const PhysicalParams& params,
                                                  double weight_frac,
                                                  std::uint64_t seed,
                                                  int n_steps) {
  std::mt19937_64 rng(seed ^ 0x94d049bb133111ebULL);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  const double g1 = angle(rng);
  const Eigen::Vector3d f = weight_frac * params.m * params.g *
                            Eigen::Vector3d(std::cos(g1), std::sin(g1), 0);
  DisturbanceProfile prof;
  prof.samples.assign(n_steps, f);
  return prof;
}

struct RunMetrics {
  Eigen::Vector3d rmse = Eigen::Vector3d::Zero();  // [m], per axis, t >= t0
  Eigen::Vector3d mae = Eigen::Vector3d::Zero();   // max |error| [m], t >= t0
  double t0 = 0.5;
  int infeasible_steps = 0;
  int saturation_count = 0;
  int input_clamp_count = 0;
};

struct RunResult {
  std::vector<InnerSample> log;
  RunMetrics metrics;
};

inline RunMetrics compute_metrics(const std::vector<InnerSample>& log,
                                  const TrajectoryTask& task, double t0) {
  RunMetrics m;
  m.t0 = t0;
  Eigen::Vector3d sq_sum = Eigen::Vector3d::Zero();
  long count = 0;
  for (const InnerSample& s : log) {
    if (s.t < t0) continue;
    const LinState ref = reference_state(task, s.t);
    const Eigen::Vector3d err = s.state.p_w - ref.segment<3>(0);
    sq_sum += err.cwiseAbs2();
    m.mae = m.mae.cwiseMax(err.cwiseAbs());
    ++count;
  }
  if (count > 0) {
    m.rmse = (sq_sum / static_cast<double>(count)).cwiseSqrt();
  }
  return m;
}

// Generic closed-loop rollout: the controller callback maps the measured
// linear state and reference window to an outer input once per Tc.
inline RunResult run_closed_loop(
    const std::function<LinInput(const LinState&, const ReferenceWindow&)>&
        controller,
    const TrajectoryTask& task, const CascadeParams& cascade,
    const SimConfig& sim_base, int n, std::uint64_t seed, double t0 = 0.5) {
  task.validate();
  SimConfig sim = sim_base;
  sim.seed = seed;
  const int inner = cascade.inner_steps_per_outer();
  const int outer_steps =
      static_cast<int>(std::lround(task.duration / cascade.tc));
  if (sim.f_ext_profile.samples.empty() &&
      sim.tau_ext_profile.samples.empty()) {
    build_task_disturbances(task, cascade.physical, sim.ts,
                            outer_steps * inner, seed, sim);
  }

  CascadeEngine engine(cascade, sim);
  for (int s = 0; s < outer_steps; ++s) {
    const LinState x = engine.measure();
    const ReferenceWindow ref = make_reference(task, cascade.tc, n, s);
    engine.apply_outer(controller(x, ref));
  }

  RunResult out;
  out.log = engine.log();
  out.metrics = compute_metrics(out.log, task, t0);
  out.metrics.saturation_count = engine.saturation_count();
  out.metrics.input_clamp_count = engine.input_clamp_count();
  return out;
}

inline RunResult run_closed_loop_rtmpc(RtmpcController& controller,
                                       const TrajectoryTask& task,
                                       const CascadeParams& cascade,
                                       const SimConfig& sim, std::uint64_t seed,
                                       double t0 = 0.5) {
  const int before = controller.infeasible_count();
  RunResult out = run_closed_loop(
      [&controller](const LinState& x, const ReferenceWindow& ref) {
        controller.update(x, ref);
        return controller.command(x);
      },
      task, cascade, sim, controller.horizon(), seed, t0);
  out.metrics.infeasible_steps = controller.infeasible_count() - before;
  return out;
}

inline RunResult run_closed_loop_policy(const MlpPolicy& net,
                                        const TrajectoryTask& task,
                                        const CascadeParams& cascade,
                                        const SimConfig& sim, int n,
                                        std::uint64_t seed, double t0 = 0.5) {
  if (net.out_dim() != kLinInputDim ||
      net.in_dim() != kLinStateDim + 6 * n) {
    throw DimensionMismatch("run_closed_loop_policy: weights expect input " +
                            std::to_string(net.in_dim()) + ", tasks give " +
                            std::to_string(kLinStateDim + 6 * n));
  }
  return run_closed_loop(
      [&net](const LinState& x, const ReferenceWindow& ref) {
        const Eigen::VectorXd u = mlp_forward(net, assemble_policy_input(x, ref));
        return LinInput(u);
      },
      task, cascade, sim, n, seed, t0);
}

// Everything a benchmark run needs: the cascade configuration, the fitted
// hover model, the cost, and the offline tube design.
struct BenchSetup {
  CascadeParams cascade;
  AttitudeLoopParams att_loop;
  DiscreteLtiModel model;
  CostParams cost;
  BoxSet x_box = default_state_box();
  BoxSet u_box = default_input_box();
  TubeController tube;
  int n = 50;
  double f_ext_frac = 0.15;  // tube sizing, fraction of weight
};

inline BenchSetup make_bench_setup(const CascadeParams& cascade,
                                   const CostParams& cost = {}, int n = 50,
                                   double f_ext_frac = 0.15,
                                   const TubeOptions& tube_opts = {},
                                   const BoxSet& x_box = default_state_box()) {
  BenchSetup s;
  s.cascade = cascade;
  s.att_loop = fit_attitude_loop(cascade);
  s.model = make_hover_model(cascade.physical, s.att_loop, cascade.tc,
                             f_ext_frac * cascade.physical.m *
                                 cascade.physical.g);
  s.cost = cost;
  s.n = n;
  s.f_ext_frac = f_ext_frac;
  s.x_box = x_box;
  s.u_box = cascade.u_limits;
  s.tube = make_tube_controller(s.model, s.cost, s.x_box, s.u_box, tube_opts);
  return s;
}

// Aggregated per-axis statistics of one controller on one task over seeds.
struct CompareRow {
  std::string controller;
  std::string task;
  Eigen::Vector3d rmse_avg = Eigen::Vector3d::Zero();
  Eigen::Vector3d rmse_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d rmse_max = Eigen::Vector3d::Zero();
  Eigen::Vector3d mae_avg = Eigen::Vector3d::Zero();
  Eigen::Vector3d mae_min = Eigen::Vector3d::Zero();
  Eigen::Vector3d mae_max = Eigen::Vector3d::Zero();
  int infeasible_steps = 0;
  int failed_seeds = 0;
  int n_seeds = 0;
};

inline CompareRow aggregate_metrics(const std::string& controller,
                                    const std::string& task,
                                    const std::vector<RunMetrics>& runs,
                                    int failed_seeds) {
  CompareRow row;
  row.controller = controller;
  row.task = task;
  row.failed_seeds = failed_seeds;
  row.n_seeds = static_cast<int>(runs.size()) + failed_seeds;
  if (runs.empty()) return row;
  row.rmse_min = row.rmse_max = runs.front().rmse;
  row.mae_min = row.mae_max = runs.front().mae;
  for (const RunMetrics& m : runs) {
    row.rmse_avg += m.rmse;
    row.mae_avg += m.mae;
    row.rmse_min = row.rmse_min.cwiseMin(m.rmse);
    row.rmse_max = row.rmse_max.cwiseMax(m.rmse);
    row.mae_min = row.mae_min.cwiseMin(m.mae);
    row.mae_max = row.mae_max.cwiseMax(m.mae);
    row.infeasible_steps += m.infeasible_steps;
  }
  row.rmse_avg /= static_cast<double>(runs.size());
  row.mae_avg /= static_cast<double>(runs.size());
  return row;
}

inline std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "controller,task,axis,rmse_avg,rmse_min,rmse_max,mae_avg,mae_min,"
         "mae_max,infeasible,failed_seeds,n_seeds\n";
  out << std::setprecision(17);
  const char axes[3] = {'x', 'y', 'z'};
  for (const CompareRow& r : rows) {
    for (int a = 0; a < 3; ++a) {
      out << r.controller << "," << r.task << "," << axes[a] << ","
          << r.rmse_avg[a] << "," << r.rmse_min[a] << "," << r.rmse_max[a]
          << "," << r.mae_avg[a] << "," << r.mae_min[a] << "," << r.mae_max[a]
          << "," << r.infeasible_steps << "," << r.failed_seeds << ","
          << r.n_seeds << "\n";
    }
  }
  return out.str();
}

inline std::string compare_console(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "Position RMSE / max |error| per axis [cm], AVG (MIN-MAX) over "
         "seeds\n";
  const char axes[3] = {'x', 'y', 'z'};
  for (const CompareRow& r : rows) {
    out << r.controller << " on " << r.task;
    if (r.failed_seeds > 0) out << "  [" << r.failed_seeds << " seed(s) FAILED]";
    out << "\n";
    for (int a = 0; a < 3; ++a) {
      out << "  " << axes[a] << ": RMSE "
          << std::fixed << std::setprecision(3) << 100.0 * r.rmse_avg[a]
          << " (" << 100.0 * r.rmse_min[a] << "-" << 100.0 * r.rmse_max[a]
          << ")   MAE " << 100.0 * r.mae_avg[a] << " ("
          << 100.0 * r.mae_min[a] << "-" << 100.0 * r.mae_max[a] << ")\n";
      out.unsetf(std::ios_base::floatfield);
    }
    if (r.infeasible_steps > 0) {
      out << "  infeasible steps: " << r.infeasible_steps << "\n";
    }
  }
  return out.str();
}

// Trajectory log CSV: the documented sim columns plus the observer columns.
inline void trajectory_write(const std::vector<InnerSample>& log,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Io("trajectory_write: cannot open " + path);
  out << "t,px,py,pz,vx,vy,vz,r00,r01,r02,r10,r11,r12,r20,r21,r22,"
         "wx,wy,wz,fcmd,taux,tauy,fext_x,fext_y,fext_z,"
         "tauext_x,tauext_y,tauext_z,sat_flag,"
         "tauhat_x,tauhat_y,tauhat_z,what_x,what_y,what_z\n";
  out << std::setprecision(17);
  for (const InnerSample& s : log) {
    out << s.t;
    for (int i = 0; i < 3; ++i) out << "," << s.state.p_w[i];
    for (int i = 0; i < 3; ++i) out << "," << s.state.v_w[i];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) out << "," << s.state.r(i, j);
    }
    for (int i = 0; i < 3; ++i) out << "," << s.state.w_b[i];
    out << "," << s.f_cmd << "," << s.tau_xy[0] << "," << s.tau_xy[1];
    for (int i = 0; i < 3; ++i) out << "," << s.f_ext[i];
    for (int i = 0; i < 3; ++i) out << "," << s.tau_ext[i];
    out << "," << (s.saturated ? 1 : 0);
    for (int i = 0; i < 3; ++i) out << "," << s.tau_hat[i];
    for (int i = 0; i < 3; ++i) out << "," << s.w_hat[i];
    out << "\n";
  }
  if (!out) throw Io("trajectory_write: write failed for " + path);
}

// Disturbance profiles are reproducible artifacts: written to files and
// fingerprinted so a run log can state exactly which profile it used.
inline void profile_write(const DisturbanceProfile& prof,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Io("profile_write: cannot open " + path);
  out << "#proffmt=1\n" << std::setprecision(17);
  for (const Eigen::Vector3d& s : prof.samples) {
    out << s[0] << " " << s[1] << " " << s[2] << "\n";
  }
  if (!out) throw Io("profile_write: write failed for " + path);
}

inline DisturbanceProfile profile_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Io("profile_read: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "#proffmt=1") {
    throw FormatVersionMismatch("profile_read: expected #proffmt=1 header");
  }
  DisturbanceProfile prof;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    Eigen::Vector3d s;
    if (!(row >> s[0] >> s[1] >> s[2])) {
      throw FormatVersionMismatch("profile_read: short sample line");
    }
    prof.samples.push_back(s);
  }
  return prof;
}

// FNV-1a over the raw sample bytes of both profiles.
inline std::string disturbance_hash(const SimConfig& sim) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](const DisturbanceProfile& prof) {
    for (const Eigen::Vector3d& s : prof.samples) {
      for (int i = 0; i < 3; ++i) {
        std::uint64_t bits;
        const double v = s[i];
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        for (int b = 0; b < 8; ++b) {
          h ^= (bits >> (8 * b)) & 0xffULL;
          h *= 0x100000001b3ULL;
        }
      }
    }
  };
  mix(sim.f_ext_profile);
  mix(sim.tau_ext_profile);
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

// Parameter loading: flat key=value files with documented defaults, so every
// physical and protocol constant is overridable from the CLI config.
inline PhysicalParams load_physical_params(const Config& cfg) {
  PhysicalParams p;
  p.m = cfg.get_double("m", p.m);
  p.g = cfg.get_double("g", p.g);
  p.J_diag[0] = cfg.get_double("J.xx", p.J_diag[0]);
  p.J_diag[1] = cfg.get_double("J.yy", p.J_diag[1]);
  p.J_diag[2] = cfg.get_double("J.zz", p.J_diag[2]);
  p.c_dv = cfg.get_double("c_dv", p.c_dv);
  p.c_dw = cfg.get_double("c_dw", p.c_dw);
  p.l_x = cfg.get_double("l_x", p.l_x);
  p.l_y = cfg.get_double("l_y", p.l_y);
  p.validate();
  return p;
}

inline ActuatorCalibration load_calibration(const Config& cfg) {
  ActuatorCalibration c;
  c.alpha.setConstant(cfg.get_double("alpha", c.alpha[0]));
  c.beta.setConstant(cfg.get_double("beta", c.beta[0]));
  c.f_min = cfg.get_double("f_min", c.f_min);
  c.f_max = cfg.get_double("f_max", c.f_max);
  c.validate();
  return c;
}

inline CascadeParams load_cascade_params(const Config& cfg) {
  CascadeParams p;
  p.physical = load_physical_params(cfg);
  p.calib = load_calibration(cfg);
  p.gains.k_r.setConstant(cfg.get_double("k_r", p.gains.k_r[0]));
  p.gains.k_w.setConstant(cfg.get_double("k_w", p.gains.k_w[0]));
  p.observer.q_tau = cfg.get_double("obs_q_tau", p.observer.q_tau(0, 0)) *
                     Eigen::Matrix3d::Identity();
  p.observer.q_w = cfg.get_double("obs_q_w", p.observer.q_w(0, 0)) *
                   Eigen::Matrix3d::Identity();
  p.observer.r_m = cfg.get_double("obs_r_m", p.observer.r_m(0, 0)) *
                   Eigen::Matrix3d::Identity();
  p.use_observer = cfg.get_int("use_observer", p.use_observer ? 1 : 0) != 0;
  p.tc = cfg.get_double("Tc", p.tc);
  p.ts = cfg.get_double("Ts", p.ts);
  p.observer.dt = p.ts;
  p.u_limits = default_input_box(
      cfg.get_double("max_rate_cmd", 10.0),
      cfg.get_double("dfcmd_frac", 0.8), p.physical.g);
  p.inner_steps_per_outer();  // validates the rate ratio
  return p;
}

inline BenchSetup load_bench_setup(const Config& cfg) {
  CascadeParams cascade = load_cascade_params(cfg);
  CostParams cost;
  for (int i = 0; i < kLinStateDim; ++i) {
    cost.qx_diag[i] = cfg.get_double("qx_" + std::string(lin_state_dim_name(i)),
                                     cost.qx_diag[i]);
  }
  cost.ru_diag[0] = cfg.get_double("ru_rate", cost.ru_diag[0]);
  cost.ru_diag[1] = cfg.get_double("ru_rate", cost.ru_diag[1]);
  cost.ru_diag[2] = cfg.get_double("ru_df", cost.ru_diag[2]);
  TubeOptions tube_opts;
  tube_opts.n_rollouts = cfg.get_int("tube_rollouts", tube_opts.n_rollouts);
  tube_opts.horizon_steps =
      cfg.get_int("tube_horizon", tube_opts.horizon_steps);
  tube_opts.seed =
      static_cast<std::uint64_t>(cfg.get_int("tube_seed", 42));
  const double tilt = cfg.get_double("max_tilt_deg", 25.0) * kPi / 180.0;
  return make_bench_setup(cascade, cost, cfg.get_int("N", 50),
                          cfg.get_double("fext_frac", 0.15), tube_opts,
                          default_state_box(tilt));
}

}  // namespace tubemav
