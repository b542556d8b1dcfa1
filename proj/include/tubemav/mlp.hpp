#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tubemav/errors.hpp"

namespace tubemav {

// Fully connected network: affine + tanh on hidden layers, identity output.
// Inputs are standardized on entry and outputs de-standardized on exit, so
// the stored weights always act on normalized quantities.
struct MlpPolicy {
  std::vector<int> sizes;          // e.g. {310, 32, 32, 3}
  std::vector<Eigen::MatrixXd> w;  // w[l]: sizes[l+1] x sizes[l]
  std::vector<Eigen::VectorXd> b;  // b[l]: sizes[l+1]
  Eigen::VectorXd in_mean, in_scale, out_mean, out_scale;

  int in_dim() const { return sizes.empty() ? 0 : sizes.front(); }
  int out_dim() const { return sizes.empty() ? 0 : sizes.back(); }
  int num_layers() const { return static_cast<int>(w.size()); }

  void validate() const {
    if (sizes.size() < 2 || w.size() + 1 != sizes.size() ||
        b.size() != w.size()) {
      throw DimensionMismatch("MlpPolicy: inconsistent layer bookkeeping");
    }
    for (std::size_t l = 0; l < w.size(); ++l) {
      if (w[l].rows() != sizes[l + 1] || w[l].cols() != sizes[l] ||
          b[l].size() != sizes[l + 1]) {
        throw DimensionMismatch("MlpPolicy: layer size mismatch");
      }
    }
    if (in_mean.size() != in_dim() || in_scale.size() != in_dim() ||
        out_mean.size() != out_dim() || out_scale.size() != out_dim()) {
      throw DimensionMismatch("MlpPolicy: normalization vector size");
    }
    if ((in_scale.array() <= 0.0).any() || (out_scale.array() <= 0.0).any()) {
      throw Error("MlpPolicy: normalization scales must be positive");
    }
  }
};

// Xavier-uniform initialization, +-sqrt(6 / (fan_in + fan_out)), zero
// biases, identity normalization. Deterministic in the seed.
inline MlpPolicy make_mlp(const std::vector<int>& sizes, std::uint64_t seed) {
  if (sizes.size() < 2) {
    throw DimensionMismatch("make_mlp: need at least input and output sizes");
  }
  MlpPolicy net;
  net.sizes = sizes;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double bound =
        std::sqrt(6.0 / static_cast<double>(sizes[l] + sizes[l + 1]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd wl(sizes[l + 1], sizes[l]);
    for (int i = 0; i < wl.rows(); ++i) {
      for (int j = 0; j < wl.cols(); ++j) wl(i, j) = dist(rng);
    }
    net.w.push_back(std::move(wl));
    net.b.push_back(Eigen::VectorXd::Zero(sizes[l + 1]));
  }
  net.in_mean = Eigen::VectorXd::Zero(sizes.front());
  net.in_scale = Eigen::VectorXd::Ones(sizes.front());
  net.out_mean = Eigen::VectorXd::Zero(sizes.back());
  net.out_scale = Eigen::VectorXd::Ones(sizes.back());
  return net;
}

// Batched forward pass; samples are rows. Equals the per-row forward by
// construction (same matrix products).
inline Eigen::MatrixXd mlp_forward_batch(const MlpPolicy& net,
                                         const Eigen::MatrixXd& inputs) {
  if (inputs.cols() != net.in_dim()) {
    throw DimensionMismatch("mlp_forward_batch: input width " +
                            std::to_string(inputs.cols()) + ", expected " +
                            std::to_string(net.in_dim()));
  }
  // Columns are samples internally.
  Eigen::MatrixXd a = (net.in_scale.cwiseInverse().asDiagonal() *
                       (inputs.rowwise() - net.in_mean.transpose())
                           .transpose());
  const int last = net.num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    a = (net.w[l] * a).colwise() + net.b[l];
    if (l < last) a = a.array().tanh();
  }
  return ((net.out_scale.asDiagonal() * a).colwise() + net.out_mean)
      .transpose();
}

inline Eigen::VectorXd mlp_forward(const MlpPolicy& net,
                                   const Eigen::VectorXd& input) {
  if (!input.allFinite()) throw NonFiniteState("mlp_forward: input");
  return mlp_forward_batch(net, input.transpose()).row(0).transpose();
}

struct MlpGradients {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
};

// Loss = mean over the batch of ||net(x) - y||^2, gradients by reverse-mode
// accumulation through the normalization and every layer. Pass grads =
// nullptr for a loss-only evaluation.
inline double mlp_loss_and_gradient(const MlpPolicy& net,
                                    const Eigen::MatrixXd& inputs,
                                    const Eigen::MatrixXd& targets,
                                    MlpGradients* grads) {
  const int batch = static_cast<int>(inputs.rows());
  if (batch == 0) throw DimensionMismatch("mlp_loss_and_gradient: empty batch");
  if (targets.rows() != batch || targets.cols() != net.out_dim()) {
    throw DimensionMismatch("mlp_loss_and_gradient: target shape");
  }

  const int last = net.num_layers() - 1;
  std::vector<Eigen::MatrixXd> act(net.num_layers() + 1);
  act[0] = (net.in_scale.cwiseInverse().asDiagonal() *
            (inputs.rowwise() - net.in_mean.transpose()).transpose());
  for (int l = 0; l <= last; ++l) {
    act[l + 1] = (net.w[l] * act[l]).colwise() + net.b[l];
    if (l < last) act[l + 1] = act[l + 1].array().tanh();
  }

  const Eigen::MatrixXd y_hat =
      (net.out_scale.asDiagonal() * act[last + 1]).colwise() + net.out_mean;
  const Eigen::MatrixXd err = y_hat - targets.transpose();
  const double loss = err.squaredNorm() / static_cast<double>(batch);

  if (grads != nullptr) {
    grads->w.assign(net.num_layers(), Eigen::MatrixXd());
    grads->b.assign(net.num_layers(), Eigen::VectorXd());
    // dLoss/d(pre-activation of output layer), through de-normalization.
    Eigen::MatrixXd dz = (2.0 / static_cast<double>(batch)) *
                         (net.out_scale.asDiagonal() * err);
    for (int l = last; l >= 0; --l) {
      grads->w[l] = dz * act[l].transpose();
      grads->b[l] = dz.rowwise().sum();
      if (l > 0) {
        dz = (net.w[l].transpose() * dz).array() *
             (1.0 - act[l].array().square());
      }
    }
  }
  return loss;
}

struct TrainConfig {
  double lr = 0.001;
  int epochs = 15;
  int batch_size = 64;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 7;
  bool normalize = true;

  void validate() const {
    if (lr < 0.0 || epochs < 1 || batch_size < 1) {
      throw Error("TrainConfig: lr >= 0, epochs >= 1, batch_size >= 1");
    }
  }
};

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long t = 0;

  static AdamState zero_like(const MlpPolicy& net) {
    AdamState s;
    for (int l = 0; l < net.num_layers(); ++l) {
      s.mw.push_back(Eigen::MatrixXd::Zero(net.w[l].rows(), net.w[l].cols()));
      s.vw.push_back(Eigen::MatrixXd::Zero(net.w[l].rows(), net.w[l].cols()));
      s.mb.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
      s.vb.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
    }
    return s;
  }
};

// One bias-corrected ADAM update, applied in place.
inline void adam_step(MlpPolicy& net, const MlpGradients& grads,
                      AdamState& state, const TrainConfig& cfg) {
  if (state.mw.size() != net.w.size()) {
    throw DimensionMismatch("adam_step: optimizer state size");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (int l = 0; l < net.num_layers(); ++l) {
    state.mw[l] = cfg.beta1 * state.mw[l] + (1.0 - cfg.beta1) * grads.w[l];
    state.vw[l] = cfg.beta2 * state.vw[l].array() +
                  (1.0 - cfg.beta2) * grads.w[l].array().square();
    net.w[l].array() -= cfg.lr * (state.mw[l].array() / bc1) /
                        ((state.vw[l].array() / bc2).sqrt() + cfg.eps);
    state.mb[l] = cfg.beta1 * state.mb[l] + (1.0 - cfg.beta1) * grads.b[l];
    state.vb[l] = cfg.beta2 * state.vb[l].array() +
                  (1.0 - cfg.beta2) * grads.b[l].array().square();
    net.b[l].array() -= cfg.lr * (state.mb[l].array() / bc1) /
                        ((state.vb[l].array() / bc2).sqrt() + cfg.eps);
  }
}

struct TrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;
};

// Full training loop: dataset statistics -> normalization, Xavier init,
// seeded shuffling, mini-batch ADAM. Deterministic in cfg.seed.
inline MlpPolicy train_mlp(const Eigen::MatrixXd& inputs,
                           const Eigen::MatrixXd& targets,
                           const std::vector<int>& hidden,
                           const TrainConfig& cfg,
                           TrainReport* report = nullptr) {
  cfg.validate();
  const int rows = static_cast<int>(inputs.rows());
  if (rows == 0 || targets.rows() != rows) {
    throw DimensionMismatch("train_mlp: empty dataset or row mismatch");
  }

  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(inputs.cols()));
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(static_cast<int>(targets.cols()));
  MlpPolicy net = make_mlp(sizes, cfg.seed);

  if (cfg.normalize) {
    auto standardize = [rows](const Eigen::MatrixXd& m, Eigen::VectorXd& mean,
                              Eigen::VectorXd& scale) {
      mean = m.colwise().mean().transpose();
      const Eigen::MatrixXd centered = m.rowwise() - mean.transpose();
      scale = (centered.array().square().colwise().sum() /
               static_cast<double>(rows))
                  .sqrt()
                  .max(1e-8)
                  .matrix()
                  .transpose();
    };
    standardize(inputs, net.in_mean, net.in_scale);
    standardize(targets, net.out_mean, net.out_scale);
  }

  const auto full_loss = [&]() {
    return mlp_loss_and_gradient(net, inputs, targets, nullptr);
  };
  if (report != nullptr) {
    report->initial_loss = full_loss();
    report->epoch_losses.clear();
  }

  AdamState state = AdamState::zero_like(net);
  std::mt19937_64 rng(cfg.seed ^ 0x5bf03635d78d11c3ULL);
  std::vector<int> order(rows);
  std::iota(order.begin(), order.end(), 0);

  MlpGradients grads;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (int start = 0; start < rows; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, rows - start);
      Eigen::MatrixXd bx(count, inputs.cols());
      Eigen::MatrixXd by(count, targets.cols());
      for (int i = 0; i < count; ++i) {
        bx.row(i) = inputs.row(order[start + i]);
        by.row(i) = targets.row(order[start + i]);
      }
      const double loss = mlp_loss_and_gradient(net, bx, by, &grads);
      if (!std::isfinite(loss)) {
        throw NonFiniteLoss("train_mlp: loss diverged at epoch " +
                            std::to_string(epoch));
      }
      adam_step(net, grads, state, cfg);
      epoch_loss += loss * count;
    }
    if (report != nullptr) {
      report->epoch_losses.push_back(epoch_loss / static_cast<double>(rows));
    }
  }
  if (report != nullptr) report->final_loss = full_loss();
  return net;
}

// Weights file: `#mlpfmt=1`, layer sizes, per-layer weight rows then the
// bias row, then in_mean / in_scale / out_mean / out_scale, 17 significant
// digits throughout.
inline void weights_write(const MlpPolicy& net, const std::string& path) {
  net.validate();
  std::ofstream out(path);
  if (!out) throw Io("weights_write: cannot open " + path);
  out << "#mlpfmt=1\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < net.sizes.size(); ++i) {
    out << (i ? " " : "") << net.sizes[i];
  }
  out << "\n";
  auto write_row = [&out](const auto& row) {
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      out << (j ? " " : "") << row[j];
    }
    out << "\n";
  };
  for (int l = 0; l < net.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < net.w[l].rows(); ++i) {
      write_row(net.w[l].row(i));
    }
    write_row(net.b[l]);
  }
  write_row(net.in_mean);
  write_row(net.in_scale);
  write_row(net.out_mean);
  write_row(net.out_scale);
  if (!out) throw Io("weights_write: write failed for " + path);
}

inline MlpPolicy weights_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Io("weights_read: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "#mlpfmt=1") {
    throw FormatVersionMismatch("weights_read: expected #mlpfmt=1 header");
  }
  if (!std::getline(in, line)) {
    throw FormatVersionMismatch("weights_read: missing layer sizes");
  }
  MlpPolicy net;
  {
    std::istringstream ss(line);
    int s;
    while (ss >> s) net.sizes.push_back(s);
  }
  if (net.sizes.size() < 2) {
    throw FormatVersionMismatch("weights_read: bad layer count");
  }
  auto read_row = [&in, &path](Eigen::Index n) {
    Eigen::VectorXd row(n);
    std::string row_line;
    if (!std::getline(in, row_line)) {
      throw FormatVersionMismatch("weights_read: truncated file " + path);
    }
    std::istringstream ss(row_line);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!(ss >> row[j])) {
        throw FormatVersionMismatch("weights_read: short row in " + path);
      }
    }
    double extra;
    if (ss >> extra) {
      throw FormatVersionMismatch("weights_read: long row in " + path);
    }
    return row;
  };
  for (std::size_t l = 0; l + 1 < net.sizes.size(); ++l) {
    Eigen::MatrixXd wl(net.sizes[l + 1], net.sizes[l]);
    for (Eigen::Index i = 0; i < wl.rows(); ++i) {
      wl.row(i) = read_row(wl.cols()).transpose();
    }
    net.w.push_back(std::move(wl));
    net.b.push_back(read_row(net.sizes[l + 1]));
  }
  net.in_mean = read_row(net.sizes.front());
  net.in_scale = read_row(net.sizes.front());
  net.out_mean = read_row(net.sizes.back());
  net.out_scale = read_row(net.sizes.back());
  net.validate();
  return net;
}

}  // namespace tubemav
