#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tactile/encoding.hpp"
#include "tactile/error.hpp"

namespace tactile {

inline constexpr int kHiddenLayers = 3;

/// Trainable tensors of the network. Hidden layer k is
/// dense -> batch norm -> relu -> dropout; the head is a plain dense layer.
/// Also used as the gradient container.
struct PsnnParameters {
  std::array<Eigen::MatrixXd, kHiddenLayers + 1> weights;  // out x in
  std::array<Eigen::VectorXd, kHiddenLayers + 1> biases;
  std::array<Eigen::VectorXd, kHiddenLayers> bn_scale;
  std::array<Eigen::VectorXd, kHiddenLayers> bn_shift;

  /// Visits every tensor in declaration order:
  /// W0 b0 scale0 shift0, W1 b1 scale1 shift1, W2 b2 scale2 shift2, W3 b3.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    for (int k = 0; k < kHiddenLayers; ++k) {
      f(self.weights[k]);
      f(self.biases[k]);
      f(self.bn_scale[k]);
      f(self.bn_shift[k]);
    }
    f(self.weights[kHiddenLayers]);
    f(self.biases[kHiddenLayers]);
  }
  template <typename F>
  void for_each(F&& f) { visit(*this, f); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, f); }

  PsnnParameters zeros_like() const {
    PsnnParameters z = *this;
    z.for_each([](auto& t) { t.setZero(); });
    return z;
  }
};

/// Per-pixel photometric-stereo MLP: intensities + positional encoding -> normal.
struct PsnnModel {
  ChannelMode channel_mode = ChannelMode::RgbNir;
  PositionalEncodingConfig encoding;
  double dropout_rate = 0.1;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  PsnnParameters params;
  std::array<Eigen::VectorXd, kHiddenLayers> running_mean;
  std::array<Eigen::VectorXd, kHiddenLayers> running_var;

  int input_width() const { return static_cast<int>(params.weights[0].cols()); }

  /// [input, hidden0, hidden1, hidden2, output]
  std::vector<int> layer_widths() const {
    std::vector<int> w{input_width()};
    for (const auto& m : params.weights) w.push_back(static_cast<int>(m.rows()));
    return w;
  }

  void validate() const {
    const auto w = layer_widths();
    require(w.size() == kHiddenLayers + 2, "psnn: expected exactly three hidden layers");
    require(w.back() == 3, "psnn: output width must be 3");
    for (int k = 0; k <= kHiddenLayers; ++k) {
      require(params.weights[k].cols() == w[k] && params.biases[k].size() == w[k + 1], "psnn: layer shapes do not chain");
    }
    for (int k = 0; k < kHiddenLayers; ++k) {
      const auto n = w[k + 1];
      require(params.bn_scale[k].size() == n && params.bn_shift[k].size() == n && running_mean[k].size() == n &&
                  running_var[k].size() == n,
              "psnn: batch-norm shapes do not match the hidden width");
      require((running_var[k].array() > 0.0).all(), "psnn: running variance must be positive");
    }
  }
};

/// He-initialised model. Widths: input = channels + encoding length.
inline PsnnModel make_psnn(ChannelMode mode, const PositionalEncodingConfig& encoding,
                           const std::array<int, kHiddenLayers>& hidden, double dropout_rate, std::uint64_t seed) {
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "psnn: dropout rate must lie in [0, 1)");
  PsnnModel m;
  m.channel_mode = mode;
  m.encoding = encoding;
  m.dropout_rate = dropout_rate;
  std::vector<int> widths{channel_count(mode) + static_cast<int>(encoding.length())};
  for (int h : hidden) {
    require(h > 0, "psnn: hidden widths must be positive");
    widths.push_back(h);
  }
  widths.push_back(3);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k <= kHiddenLayers; ++k) {
    const double std_dev = std::sqrt(2.0 / widths[k]);
    m.params.weights[k] = Eigen::MatrixXd(widths[k + 1], widths[k]);
    for (Eigen::Index j = 0; j < m.params.weights[k].cols(); ++j)
      for (Eigen::Index i = 0; i < m.params.weights[k].rows(); ++i) m.params.weights[k](i, j) = std_dev * gauss(rng);
    m.params.biases[k] = Eigen::VectorXd::Zero(widths[k + 1]);
  }
  for (int k = 0; k < kHiddenLayers; ++k) {
    m.params.bn_scale[k] = Eigen::VectorXd::Ones(widths[k + 1]);
    m.params.bn_shift[k] = Eigen::VectorXd::Zero(widths[k + 1]);
    m.running_mean[k] = Eigen::VectorXd::Zero(widths[k + 1]);
    m.running_var[k] = Eigen::VectorXd::Ones(widths[k + 1]);
  }
  return m;
}

/// Inference-mode forward pass on a batch (one sample per column). Returns the
/// raw 3 x B output; dropout is inert and batch norm uses running statistics.
inline Eigen::MatrixXd psnn_infer_raw(const PsnnModel& model, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != model.input_width()) throw ContractViolation("psnn: input width does not match the model");
  Eigen::MatrixXd a = inputs;
  for (int k = 0; k < kHiddenLayers; ++k) {
    Eigen::MatrixXd z = model.params.weights[k] * a;
    z.colwise() += model.params.biases[k];
    const Eigen::VectorXd inv_std = (model.running_var[k].array() + model.bn_epsilon).rsqrt().matrix();
    const Eigen::VectorXd gain = model.params.bn_scale[k].cwiseProduct(inv_std);
    const Eigen::VectorXd offset = model.params.bn_shift[k] - gain.cwiseProduct(model.running_mean[k]);
    z = (z.array().colwise() * gain.array()).colwise() + offset.array();
    a = z.cwiseMax(0.0);
  }
  Eigen::MatrixXd out = model.params.weights[kHiddenLayers] * a;
  out.colwise() += model.params.biases[kHiddenLayers];
  return out;
}

inline Eigen::Vector3d normalize_or_up(const Eigen::Vector3d& raw) {
  const double n = raw.norm();
  if (!(n >= 1e-8)) return {0.0, 0.0, 1.0};
  return raw / n;
}

struct PsnnBatch {
  Eigen::MatrixXd inputs;   // input_width x B
  Eigen::MatrixXd targets;  // 3 x B, unit normals
};

struct PsnnLossGrad {
  double loss = 0.0;
  PsnnParameters gradients;
  std::array<Eigen::VectorXd, kHiddenLayers> batch_mean;
  std::array<Eigen::VectorXd, kHiddenLayers> batch_var;
};

/// Training-mode loss and backpropagated gradients. Loss is the batch mean of
/// the squared distance between the raw (unnormalised) output and the target
/// normal. Dropout masks come from `dropout_seed`, so a fixed seed gives a
/// fixed, differentiable function of the parameters.
inline PsnnLossGrad psnn_loss_grad(const PsnnModel& model, const PsnnBatch& batch, std::uint64_t dropout_seed) {
  const Eigen::Index b = batch.inputs.cols();
  if (b == 0) throw ContractViolation("psnn_loss_grad: empty batch");
  if (batch.inputs.rows() != model.input_width()) throw ContractViolation("psnn_loss_grad: input width mismatch");
  if (batch.targets.rows() != 3 || batch.targets.cols() != b) throw ContractViolation("psnn_loss_grad: target shape mismatch");

  const double keep = 1.0 - model.dropout_rate;
  std::mt19937_64 rng(dropout_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  struct Cache {
    Eigen::MatrixXd input, xhat, y, drop;
    Eigen::VectorXd inv_std;
  };
  std::array<Cache, kHiddenLayers> cache;
  PsnnLossGrad res;

  Eigen::MatrixXd a = batch.inputs;
  for (int k = 0; k < kHiddenLayers; ++k) {
    auto& c = cache[k];
    c.input = a;
    Eigen::MatrixXd z = model.params.weights[k] * a;
    z.colwise() += model.params.biases[k];
    const Eigen::VectorXd mean = z.rowwise().mean();
    z.colwise() -= mean;
    const Eigen::VectorXd var = z.array().square().rowwise().mean().matrix();
    c.inv_std = (var.array() + model.bn_epsilon).rsqrt().matrix();
    c.xhat = z.array().colwise() * c.inv_std.array();
    c.y = (c.xhat.array().colwise() * model.params.bn_scale[k].array()).colwise() + model.params.bn_shift[k].array();
    c.drop = Eigen::MatrixXd(c.y.rows(), b);
    for (Eigen::Index j = 0; j < b; ++j)
      for (Eigen::Index i = 0; i < c.y.rows(); ++i) c.drop(i, j) = (unif(rng) < keep) ? 1.0 / keep : 0.0;
    a = c.y.cwiseMax(0.0).cwiseProduct(c.drop);
    res.batch_mean[k] = mean;
    res.batch_var[k] = var;
  }
  Eigen::MatrixXd out = model.params.weights[kHiddenLayers] * a;
  out.colwise() += model.params.biases[kHiddenLayers];

  const Eigen::MatrixXd diff = out - batch.targets;
  res.loss = diff.squaredNorm() / static_cast<double>(b);

  auto& g = res.gradients;
  g = model.params.zeros_like();
  Eigen::MatrixXd d_out = (2.0 / static_cast<double>(b)) * diff;
  g.weights[kHiddenLayers] = d_out * a.transpose();
  g.biases[kHiddenLayers] = d_out.rowwise().sum();
  Eigen::MatrixXd d_a = model.params.weights[kHiddenLayers].transpose() * d_out;

  for (int k = kHiddenLayers - 1; k >= 0; --k) {
    const auto& c = cache[k];
    const Eigen::MatrixXd d_y = (d_a.array() * c.drop.array() * (c.y.array() > 0.0).cast<double>()).matrix();
    g.bn_scale[k] = (d_y.array() * c.xhat.array()).rowwise().sum().matrix();
    g.bn_shift[k] = d_y.rowwise().sum();
    const Eigen::MatrixXd d_xhat = d_y.array().colwise() * model.params.bn_scale[k].array();
    const Eigen::VectorXd sum_dx = d_xhat.rowwise().sum();
    const Eigen::VectorXd sum_dx_xhat = (d_xhat.array() * c.xhat.array()).rowwise().sum().matrix();
    Eigen::MatrixXd d_z = (static_cast<double>(b) * d_xhat.array()).colwise() - sum_dx.array();
    d_z -= (c.xhat.array().colwise() * sum_dx_xhat.array()).matrix();
    d_z = (d_z.array().colwise() * (c.inv_std.array() / static_cast<double>(b))).matrix();
    g.weights[k] = d_z * c.input.transpose();
    g.biases[k] = d_z.rowwise().sum();
    if (k > 0) d_a = model.params.weights[k].transpose() * d_z;
  }
  return res;
}

/// Single-pixel forward pass returning a unit normal ((0,0,1) when the raw
/// output is degenerate). With inference_mode = false the batch-norm layers
/// normalise with the statistics of this one sample and dropout is drawn
/// from `dropout_seed`.
inline Eigen::Vector3d psnn_forward(const PsnnModel& model, std::span<const double> intensities,
                                    std::span<const double> encoding, bool inference_mode = true,
                                    std::uint64_t dropout_seed = 0) {
  if (static_cast<int>(intensities.size()) != channel_count(model.channel_mode))
    throw ContractViolation("psnn_forward: intensity vector does not match the model's channel mode");
  if (encoding.size() != model.encoding.length())
    throw ContractViolation("psnn_forward: encoding length does not match the model");
  Eigen::MatrixXd x(model.input_width(), 1);
  Eigen::Index r = 0;
  for (double v : intensities) x(r++, 0) = v;
  for (double v : encoding) x(r++, 0) = v;
  Eigen::Vector3d raw;
  if (inference_mode) {
    raw = psnn_infer_raw(model, x).col(0);
  } else {
    PsnnBatch batch{x, Eigen::MatrixXd::Zero(3, 1)};
    // With a zero target and B = 1 the head-bias gradient is exactly 2 * raw.
    const PsnnLossGrad lg = psnn_loss_grad(model, batch, dropout_seed);
    raw = 0.5 * lg.gradients.biases[kHiddenLayers];
  }
  return normalize_or_up(raw);
}

/// Adam with bias correction.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  PsnnParameters m, v;

  void apply(PsnnParameters& params, const PsnnParameters& grads) {
    if (step == 0) {
      m = params.zeros_like();
      v = params.zeros_like();
    }
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    auto update = [&](auto& p, const auto& g, auto& mm, auto& vv) {
      mm = beta1 * mm + (1.0 - beta1) * g;
      vv = beta2 * vv + (1.0 - beta2) * g.cwiseProduct(g);
      p.array() -= learning_rate * (mm.array() / c1) / ((vv.array() / c2).sqrt() + epsilon);
    };
    for (int k = 0; k <= kHiddenLayers; ++k) {
      update(params.weights[k], grads.weights[k], m.weights[k], v.weights[k]);
      update(params.biases[k], grads.biases[k], m.biases[k], v.biases[k]);
    }
    for (int k = 0; k < kHiddenLayers; ++k) {
      update(params.bn_scale[k], grads.bn_scale[k], m.bn_scale[k], v.bn_scale[k]);
      update(params.bn_shift[k], grads.bn_shift[k], m.bn_shift[k], v.bn_shift[k]);
    }
  }
};

}  // namespace tactile
