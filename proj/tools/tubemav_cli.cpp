// Command-line benchmark harness: simulate the closed-loop cascade with the
// tube MPC or a learned policy, compute tubes, collect/augment/train on
// demonstrations, and compare controllers across seeds.

#include <cstdint>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <CLI11.hpp>

#include "tubemav/harness.hpp"

namespace {

using namespace tubemav;

Config load_config(const std::string& path) {
  if (path.empty()) return Config();
  return Config::from_file(path);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_metrics(const RunMetrics& m) {
  std::cout << "metrics (t >= " << m.t0 << " s), per axis [cm]:\n";
  const char axes[3] = {'x', 'y', 'z'};
  for (int a = 0; a < 3; ++a) {
    std::cout << "  " << axes[a] << ": RMSE " << 100.0 * m.rmse[a]
              << "  max|err| " << 100.0 * m.mae[a] << "\n";
  }
  std::cout << "infeasible steps: " << m.infeasible_steps
            << ", saturated inner steps: " << m.saturation_count
            << ", clamped outer inputs: " << m.input_clamp_count << "\n";
}

SimConfig make_sim(const TrajectoryTask& task, const CascadeParams& cascade,
                   std::uint64_t seed, double sustained_frac,
                   int outer_steps) {
  SimConfig sim;
  sim.ts = cascade.ts;
  sim.seed = seed;
  const int n_steps = outer_steps * cascade.inner_steps_per_outer();
  build_task_disturbances(task, cascade.physical, cascade.ts, n_steps, seed,
                          sim);
  if (sustained_frac > 0.0) {
    const DisturbanceProfile sustained = sustained_force_profile(
        cascade.physical, sustained_frac, seed, n_steps);
    for (int i = 0; i < n_steps; ++i) {
      sim.f_ext_profile.samples[i] += sustained.samples[i];
    }
  }
  return sim;
}

int cmd_simulate(const std::string& task_name, const std::string& controller,
                 const std::string& config_path, const std::string& out_path,
                 const std::string& weights_path, std::uint64_t seed,
                 double sustained_frac, const std::string& profile_prefix) {
  const Config cfg = load_config(config_path);
  const TrajectoryTask task = make_task(task_name);
  BenchSetup setup = load_bench_setup(cfg);
  const int outer_steps =
      static_cast<int>(std::lround(task.duration / setup.cascade.tc));
  SimConfig sim =
      make_sim(task, setup.cascade, seed, sustained_frac, outer_steps);
  std::cout << "disturbance profile hash: " << disturbance_hash(sim) << "\n";
  if (!profile_prefix.empty()) {
    profile_write(sim.f_ext_profile, profile_prefix + ".fext.txt");
    profile_write(sim.tau_ext_profile, profile_prefix + ".tauext.txt");
  }

  RunResult result;
  if (controller == "rtmpc") {
    RtmpcController rtmpc(setup.model, setup.cost, setup.tube, setup.n);
    result = run_closed_loop_rtmpc(rtmpc, task, setup.cascade, sim, seed);
  } else if (controller == "policy") {
    if (weights_path.empty()) {
      throw Error("simulate: --weights required for the policy controller");
    }
    const MlpPolicy net = weights_read(weights_path);
    result = run_closed_loop_policy(net, task, setup.cascade, sim, setup.n,
                                    seed);
  } else {
    throw Error("simulate: unknown controller '" + controller +
                "' (use rtmpc|policy)");
  }
  if (!out_path.empty()) {
    trajectory_write(result.log, out_path);
    std::cout << "trajectory written to " << out_path << " ("
              << result.log.size() << " rows)\n";
  }
  print_metrics(result.metrics);
  return 0;
}

int cmd_tube(const std::string& config_path, const std::string& out_path) {
  const Config cfg = load_config(config_path);
  const BenchSetup setup = load_bench_setup(cfg);
  if (!out_path.empty()) {
    tube_write(setup.tube.z, out_path);
    std::cout << "tube written to " << out_path << "\n";
  }
  std::cout << "tube cross-section half-widths:\n";
  for (int i = 0; i < kLinStateDim; ++i) {
    std::cout << "  " << lin_state_dim_name(i) << ": " << setup.tube.z.hi[i]
              << "\n";
  }
  std::cout << "tightened state box (lo/hi), first 6 dims:\n";
  for (int i = 0; i < 6; ++i) {
    std::cout << "  " << lin_state_dim_name(i) << ": ["
              << setup.tube.x_tight.lo[i] << ", " << setup.tube.x_tight.hi[i]
              << "]\n";
  }
  std::cout << "tightened input box:\n";
  for (int i = 0; i < kLinInputDim; ++i) {
    std::cout << "  u" << i << ": [" << setup.tube.u_tight.lo[i] << ", "
              << setup.tube.u_tight.hi[i] << "]\n";
  }
  return 0;
}

int cmd_collect(const std::string& task_name, int steps,
                const std::string& config_path, const std::string& out_path) {
  const Config cfg = load_config(config_path);
  const TrajectoryTask task = make_task(task_name);
  BenchSetup setup = load_bench_setup(cfg);
  // Demonstrations are collected disturbance-free with the observer out of
  // the loop; the tube accounts for what the expert did not see.
  setup.cascade.use_observer = false;
  SimConfig sim;
  sim.ts = setup.cascade.ts;
  CascadeEngine engine(setup.cascade, sim);
  RtmpcController rtmpc(setup.model, setup.cost, setup.tube, setup.n);
  const Demonstration demo = collect_demonstration(
      engine, rtmpc,
      [&task, &setup](int t) {
        return make_reference(task, setup.cascade.tc, setup.n, t);
      },
      steps);
  demo_write(demo, out_path);
  std::cout << "demonstration written to " << out_path << " (" << demo.size()
            << " steps)\n";
  return 0;
}

int cmd_augment(const std::string& demo_path, int n_extra,
                const std::string& config_path, const std::string& out_path,
                std::uint64_t seed) {
  const Config cfg = load_config(config_path);
  const BenchSetup setup = load_bench_setup(cfg);
  const Demonstration demo = demo_read(demo_path);
  const AugmentedDataset ds =
      augment(demo, setup.tube.z, setup.tube.k, n_extra, seed);
  dataset_write(ds, out_path);
  std::cout << "dataset written to " << out_path << " (" << ds.rows.size()
            << " rows, input dim " << ds.input_dim() << ")\n";
  return 0;
}

int cmd_train(const std::string& dataset_path, int epochs, double lr,
              int batch_size, const std::string& out_path,
              std::uint64_t seed) {
  const AugmentedDataset ds = dataset_read(dataset_path);
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.lr = lr;
  cfg.batch_size = batch_size;
  cfg.seed = seed;
  TrainReport report;
  const MlpPolicy net = train_policy(ds, cfg, {32, 32}, &report);
  weights_write(net, out_path);
  std::cout << "trained on " << ds.rows.size() << " rows: loss "
            << report.initial_loss << " -> " << report.final_loss << "\n";
  std::cout << "weights written to " << out_path << "\n";
  return 0;
}

// Flags beat config values beat paper defaults.
template <typename T>
T pick(const CLI::Option* opt, T flag_value, const Config& cfg,
       const std::string& key, T fallback) {
  if (opt->count() > 0) return flag_value;
  if constexpr (std::is_same_v<T, int>) {
    return cfg.get_int(key, fallback);
  } else {
    return cfg.get_double(key, fallback);
  }
}

int cmd_evaluate(const std::string& weights_path, const std::string& task_name,
                 const std::string& config_path, const std::string& out_path,
                 std::uint64_t seed, double sustained_frac) {
  return cmd_simulate(task_name, "policy", config_path, out_path,
                      weights_path, seed, sustained_frac, "");
}

int cmd_compare(const std::string& tasks_arg, int n_seeds,
                const std::string& config_path, const std::string& out_path,
                const std::string& weights_arg) {
  const Config cfg = load_config(config_path);
  BenchSetup setup = load_bench_setup(cfg);

  std::map<std::string, std::string> weights_by_task;
  std::string weights_all;
  for (const std::string& item : split_csv(weights_arg)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      weights_all = item;
    } else {
      weights_by_task[item.substr(0, eq)] = item.substr(eq + 1);
    }
  }

  std::vector<CompareRow> rows;
  int errored = 0;
  for (const std::string& task_name : split_csv(tasks_arg)) {
    const TrajectoryTask task = make_task(task_name);
    const int outer_steps =
        static_cast<int>(std::lround(task.duration / setup.cascade.tc));

    std::vector<RunMetrics> mpc_runs;
    int mpc_failed = 0;
    for (int s = 0; s < n_seeds; ++s) {
      const std::uint64_t seed = 1000 + s;
      SimConfig sim = make_sim(task, setup.cascade, seed, 0.0, outer_steps);
      try {
        RtmpcController rtmpc(setup.model, setup.cost, setup.tube, setup.n);
        mpc_runs.push_back(
            run_closed_loop_rtmpc(rtmpc, task, setup.cascade, sim, seed)
                .metrics);
      } catch (const Error& e) {
        std::cerr << "rtmpc/" << task_name << "/seed " << seed
                  << " failed: " << e.what() << "\n";
        ++mpc_failed;
        ++errored;
      }
    }
    rows.push_back(aggregate_metrics("rtmpc", task_name, mpc_runs, mpc_failed));

    std::string weights = weights_all;
    if (weights_by_task.count(task_name)) {
      weights = weights_by_task[task_name];
    }
    if (weights.empty()) continue;
    const MlpPolicy net = weights_read(weights);
    std::vector<RunMetrics> pol_runs;
    int pol_failed = 0;
    for (int s = 0; s < n_seeds; ++s) {
      const std::uint64_t seed = 1000 + s;
      SimConfig sim = make_sim(task, setup.cascade, seed, 0.0, outer_steps);
      try {
        pol_runs.push_back(run_closed_loop_policy(net, task, setup.cascade,
                                                  sim, setup.n, seed)
                               .metrics);
      } catch (const Error& e) {
        std::cerr << "policy/" << task_name << "/seed " << seed
                  << " failed: " << e.what() << "\n";
        ++pol_failed;
        ++errored;
      }
    }
    rows.push_back(
        aggregate_metrics("policy", task_name, pol_runs, pol_failed));
  }

  std::cout << compare_console(rows);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw Io("compare: cannot open " + out_path);
    out << compare_csv(rows);
    std::cout << "comparison CSV written to " << out_path << "\n";
  }
  return errored == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tube-MPC trajectory tracking benchmark for a sub-gram MAV"};
  app.require_subcommand(1);

  std::string task = "t1";
  std::string controller = "rtmpc";
  std::string config_path;
  std::string out_path;
  std::string weights;
  std::string profile_prefix;
  std::string dataset_path;
  std::string demo_path;
  std::string tasks = "t1,t2,t3";
  std::uint64_t seed = 0;
  double sustained_frac = 0.0;
  int steps = 350;
  int n_extra = 200;
  int epochs = 15;
  int n_seeds = 3;
  double lr = 0.001;

  auto* sim = app.add_subcommand("simulate", "closed-loop run, CSV log");
  sim->add_option("--task", task, "t1|t2|t3|hover");
  sim->add_option("--controller", controller, "rtmpc|policy");
  sim->add_option("--config", config_path, "key=value parameter file");
  sim->add_option("--out", out_path, "trajectory CSV path");
  sim->add_option("--weights", weights, "policy weights file");
  sim->add_option("--seed", seed, "disturbance / run seed");
  sim->add_option("--fext-sustained", sustained_frac,
                  "sustained horizontal force, fraction of weight");
  sim->add_option("--profiles-out", profile_prefix,
                  "write disturbance profiles with this prefix");

  auto* tube = app.add_subcommand("tube", "compute the tube cross-section");
  tube->add_option("--config", config_path, "key=value parameter file");
  tube->add_option("--out", out_path, "tube dump path");

  auto* collect = app.add_subcommand("collect", "expert demonstration");
  collect->add_option("--task", task, "t1|t2|t3|hover");
  auto* steps_opt = collect->add_option("--steps", steps,
                                        "demonstration length T");
  collect->add_option("--config", config_path, "key=value parameter file");
  collect->add_option("--out", out_path, "demonstration file")->required();

  auto* aug = app.add_subcommand("augment", "tube-based data augmentation");
  aug->add_option("--demo", demo_path, "demonstration file")->required();
  auto* n_opt = aug->add_option("--n", n_extra, "extra samples per timestep");
  aug->add_option("--config", config_path, "key=value parameter file");
  aug->add_option("--out", out_path, "dataset CSV path")->required();
  aug->add_option("--seed", seed, "augmentation seed");

  auto* train = app.add_subcommand("train", "train the policy on a dataset");
  train->add_option("--dataset", dataset_path, "dataset CSV")->required();
  auto* epochs_opt = train->add_option("--epochs", epochs, "training epochs");
  auto* lr_opt = train->add_option("--lr", lr, "ADAM learning rate");
  train->add_option("--config", config_path, "key=value parameter file");
  train->add_option("--out", out_path, "weights output path")->required();
  train->add_option("--seed", seed, "shuffle/init seed");

  auto* eval = app.add_subcommand("evaluate", "run the learned policy");
  eval->add_option("--weights", weights, "policy weights file")->required();
  eval->add_option("--task", task, "t1|t2|t3|hover");
  eval->add_option("--config", config_path, "key=value parameter file");
  eval->add_option("--out", out_path, "trajectory CSV path");
  eval->add_option("--seed", seed, "disturbance / run seed");
  eval->add_option("--fext-sustained", sustained_frac,
                   "sustained horizontal force, fraction of weight");

  auto* cmp = app.add_subcommand("compare", "controllers across seeds");
  cmp->add_option("--tasks", tasks, "comma-separated task list");
  cmp->add_option("--seeds", n_seeds, "number of seeds");
  cmp->add_option("--config", config_path, "key=value parameter file");
  cmp->add_option("--out", out_path, "comparison CSV path");
  cmp->add_option("--weights", weights,
                  "policy weights: one path, or task=path pairs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      return cmd_simulate(task, controller, config_path, out_path, weights,
                          seed, sustained_frac, profile_prefix);
    }
    if (tube->parsed()) return cmd_tube(config_path, out_path);
    if (collect->parsed()) {
      const Config cfg = load_config(config_path);
      return cmd_collect(task, pick(steps_opt, steps, cfg, "T", 350),
                         config_path, out_path);
    }
    if (aug->parsed()) {
      const Config cfg = load_config(config_path);
      return cmd_augment(demo_path, pick(n_opt, n_extra, cfg, "n_extra", 200),
                         config_path, out_path, seed);
    }
    if (train->parsed()) {
      const Config cfg = load_config(config_path);
      return cmd_train(dataset_path,
                       pick(epochs_opt, epochs, cfg, "epochs", 15),
                       pick(lr_opt, lr, cfg, "lr", 0.001),
                       cfg.get_int("batch_size", 64), out_path, seed);
    }
    if (eval->parsed()) {
      return cmd_evaluate(weights, task, config_path, out_path, seed,
                          sustained_frac);
    }
    if (cmp->parsed()) {
      return cmd_compare(tasks, n_seeds, config_path, out_path, weights);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
