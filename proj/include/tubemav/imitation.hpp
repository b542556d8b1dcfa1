#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tubemav/errors.hpp"
#include "tubemav/lin_model.hpp"
#include "tubemav/mlp.hpp"
#include "tubemav/rtmpc.hpp"

namespace tubemav {

// Policy input: current linear state followed by the desired position and
// velocity of reference steps 1..N, (px,py,pz,vx,vy,vz) per step. With the
// 10-dim state and N = 50 this is the 310-entry contract.
inline Eigen::VectorXd assemble_policy_input(const LinState& x,
                                             const ReferenceWindow& ref) {
  const int n = ref.horizon();
  if (n < 1) throw DimensionMismatch("assemble_policy_input: empty window");
  Eigen::VectorXd in(kLinStateDim + 6 * n);
  in.head(kLinStateDim) = x;
  for (int i = 1; i <= n; ++i) {
    in.segment(kLinStateDim + 6 * (i - 1), 6) = ref.x_des[i].head(6);
  }
  return in;
}

// One controller-rate sample of an expert rollout.
struct DemoStep {
  LinState x = LinState::Zero();        // measured linear state
  LinInput u = LinInput::Zero();        // input actually applied (ancillary)
  LinInput u_bar = LinInput::Zero();    // nominal plan input
  LinState x_bar = LinState::Zero();    // nominal plan state
  ReferenceWindow ref;
};

using Demonstration = std::vector<DemoStep>;

struct DatasetRow {
  bool augmented = false;
  int t = 0;
  Eigen::VectorXd input;
  Eigen::VectorXd target;
};

struct AugmentedDataset {
  std::vector<DatasetRow> rows;

  int input_dim() const {
    return rows.empty() ? 0 : static_cast<int>(rows.front().input.size());
  }
  int target_dim() const {
    return rows.empty() ? 0 : static_cast<int>(rows.front().target.size());
  }
};

// Tube-based augmentation: around every nominal plan state, draw extra
// states uniformly from the tube box and label them with the ancillary
// action. Row order is by timestep then sample index; per-timestep RNG
// substreams make the result independent of evaluation order.
inline AugmentedDataset augment(const Demonstration& demo, const BoxSet& z,
                                const Eigen::MatrixXd& k, int n_extra_per_step,
                                std::uint64_t seed) {
  if (n_extra_per_step < 0) {
    throw DimensionMismatch("augment: n_extra_per_step must be >= 0");
  }
  AugmentedDataset ds;
  ds.rows.reserve(demo.size() * (1 + n_extra_per_step));
  for (std::size_t t = 0; t < demo.size(); ++t) {
    const DemoStep& step = demo[t];
    DatasetRow row;
    row.augmented = false;
    row.t = static_cast<int>(t);
    row.input = assemble_policy_input(step.x, step.ref);
    row.target = step.u;
    ds.rows.push_back(std::move(row));

    std::seed_seq seq{static_cast<std::uint64_t>(seed),
                      static_cast<std::uint64_t>(t)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int s = 0; s < n_extra_per_step; ++s) {
      LinState x_plus = step.x_bar;
      for (int i = 0; i < kLinStateDim; ++i) {
        x_plus[i] += unit(rng) * z.hi[i];
      }
      DatasetRow extra;
      extra.augmented = true;
      extra.t = static_cast<int>(t);
      extra.input = assemble_policy_input(x_plus, step.ref);
      extra.target = step.u_bar + k * (x_plus - step.x_bar);
      ds.rows.push_back(std::move(extra));
    }
  }
  return ds;
}

// Dataset file: version line `#fmt=1`, CSV header, one row per sample.
inline void dataset_write(const AugmentedDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Io("dataset_write: cannot open " + path);
  const int ni = ds.input_dim();
  const int no = ds.target_dim();
  out << "#fmt=1\n";
  out << "tag,t";
  for (int j = 0; j < ni; ++j) out << ",in_" << j;
  for (int j = 0; j < no; ++j) out << ",out_" << j;
  out << "\n";
  out << std::setprecision(17);
  for (const DatasetRow& row : ds.rows) {
    out << (row.augmented ? "augmented" : "demo") << "," << row.t;
    for (int j = 0; j < ni; ++j) out << "," << row.input[j];
    for (int j = 0; j < no; ++j) out << "," << row.target[j];
    out << "\n";
  }
  if (!out) throw Io("dataset_write: write failed for " + path);
}

inline AugmentedDataset dataset_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Io("dataset_read: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "#fmt=1") {
    throw FormatVersionMismatch("dataset_read: expected #fmt=1 header");
  }
  if (!std::getline(in, line) || line.rfind("tag,t", 0) != 0) {
    throw FormatVersionMismatch("dataset_read: missing column header");
  }
  int ni = 0, no = 0;
  {
    std::istringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (col.rfind("in_", 0) == 0) ++ni;
      if (col.rfind("out_", 0) == 0) ++no;
    }
  }
  AugmentedDataset ds;
  if (ni <= 0 || no <= 0) {
    // An empty dataset writes no data columns; any data row is an error.
    while (std::getline(in, line)) {
      if (!line.empty()) {
        throw FormatVersionMismatch("dataset_read: rows without data columns");
      }
    }
    return ds;
  }

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    DatasetRow row;
    if (!std::getline(ss, cell, ',')) throw Io("dataset_read: bad row");
    if (cell == "demo") {
      row.augmented = false;
    } else if (cell == "augmented") {
      row.augmented = true;
    } else {
      throw Io("dataset_read: unknown tag '" + cell + "'");
    }
    if (!std::getline(ss, cell, ',')) throw Io("dataset_read: missing t");
    row.t = std::stoi(cell);
    row.input.resize(ni);
    row.target.resize(no);
    for (int j = 0; j < ni; ++j) {
      if (!std::getline(ss, cell, ',')) throw Io("dataset_read: short row");
      row.input[j] = std::stod(cell);
    }
    for (int j = 0; j < no; ++j) {
      if (!std::getline(ss, cell, ',')) throw Io("dataset_read: short row");
      row.target[j] = std::stod(cell);
    }
    if (std::getline(ss, cell, ',')) throw Io("dataset_read: long row");
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

inline void dataset_to_matrices(const AugmentedDataset& ds,
                                Eigen::MatrixXd& inputs,
                                Eigen::MatrixXd& targets) {
  const int rows = static_cast<int>(ds.rows.size());
  if (rows == 0) throw DimensionMismatch("dataset_to_matrices: empty dataset");
  inputs.resize(rows, ds.input_dim());
  targets.resize(rows, ds.target_dim());
  for (int i = 0; i < rows; ++i) {
    if (ds.rows[i].input.size() != inputs.cols() ||
        ds.rows[i].target.size() != targets.cols()) {
      throw DimensionMismatch("dataset_to_matrices: ragged rows");
    }
    inputs.row(i) = ds.rows[i].input.transpose();
    targets.row(i) = ds.rows[i].target.transpose();
  }
}

inline MlpPolicy train_policy(const AugmentedDataset& ds,
                              const TrainConfig& cfg,
                              const std::vector<int>& hidden = {32, 32},
                              TrainReport* report = nullptr) {
  Eigen::MatrixXd inputs, targets;
  dataset_to_matrices(ds, inputs, targets);
  return train_mlp(inputs, targets, hidden, cfg, report);
}

// Raw demonstration file, carrying the safe plans and full reference
// windows needed to augment later. One line per step:
//   t x(10) u(3) u_bar(3) x_bar(10) x_des_0(10) ... x_des_N(10)
inline void demo_write(const Demonstration& demo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Io("demo_write: cannot open " + path);
  const int n = demo.empty() ? 0 : demo.front().ref.horizon();
  out << "#demofmt=1\n";
  out << "N " << n << "\n";
  out << "T " << (demo.empty() ? 0 : demo.size() - 1) << "\n";
  out << std::setprecision(17);
  for (std::size_t t = 0; t < demo.size(); ++t) {
    const DemoStep& s = demo[t];
    if (s.ref.horizon() != n) {
      throw DimensionMismatch("demo_write: inconsistent window lengths");
    }
    out << t;
    const auto put = [&out](const Eigen::VectorXd& v) {
      for (int i = 0; i < v.size(); ++i) out << " " << v[i];
    };
    put(s.x);
    put(s.u);
    put(s.u_bar);
    put(s.x_bar);
    for (const LinState& xd : s.ref.x_des) put(xd);
    out << "\n";
  }
  if (!out) throw Io("demo_write: write failed for " + path);
}

inline Demonstration demo_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Io("demo_read: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "#demofmt=1") {
    throw FormatVersionMismatch("demo_read: expected #demofmt=1 header");
  }
  int n = 0;
  long t_last = 0;
  {
    std::string key;
    if (!std::getline(in, line)) {
      throw FormatVersionMismatch("demo_read: truncated file");
    }
    std::istringstream row(line);
    if (!(row >> key >> n) || key != "N" || n < 1) {
      throw FormatVersionMismatch("demo_read: expected 'N <horizon>' line");
    }
    if (!std::getline(in, line)) {
      throw FormatVersionMismatch("demo_read: truncated file");
    }
    std::istringstream row2(line);
    if (!(row2 >> key >> t_last) || key != "T" || t_last < 0) {
      throw FormatVersionMismatch("demo_read: expected 'T <steps>' line");
    }
  }
  Demonstration demo;
  demo.reserve(t_last + 1);
  for (long t = 0; t <= t_last; ++t) {
    if (!std::getline(in, line)) {
      throw FormatVersionMismatch("demo_read: truncated file");
    }
    std::istringstream row(line);
    long t_read = -1;
    if (!(row >> t_read) || t_read != t) {
      throw FormatVersionMismatch("demo_read: bad step index at line " +
                                  std::to_string(t + 4));
    }
    const auto get = [&row](double* dst, int count) {
      for (int i = 0; i < count; ++i) {
        if (!(row >> dst[i])) {
          throw FormatVersionMismatch("demo_read: short step line");
        }
      }
    };
    DemoStep s;
    get(s.x.data(), kLinStateDim);
    get(s.u.data(), kLinInputDim);
    get(s.u_bar.data(), kLinInputDim);
    get(s.x_bar.data(), kLinStateDim);
    s.ref.x_des.assign(n + 1, Eigen::VectorXd::Zero(kLinStateDim));
    for (int i = 0; i <= n; ++i) get(s.ref.x_des[i].data(), kLinStateDim);
    demo.push_back(std::move(s));
  }
  return demo;
}

}  // namespace tubemav
