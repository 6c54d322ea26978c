// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "inpose/common.hpp"
#include "inpose/denoiser.hpp"

namespace inpose {

/// Which sensor quantities a model consumes per frame.
struct ConditioningLayout {
  bool angular_velocity = false;  // central differences of the sensed 6DoF rotations
  bool locations = false;         // head height and wrist-minus-head offsets (baseline only)

  int feature_count() const { return 18 + (angular_velocity ? 18 : 0) + (locations ? 7 : 0); }
  bool operator==(const ConditioningLayout&) const = default;
};

inline constexpr int kTimeFeatures = 16;

inline int denoiser_input_size(const ConditioningLayout& layout) {
  return kFrameStateSize + layout.feature_count() + 1 + kTimeFeatures;
}

/// [t, sqrt t, sin(2^k pi t), cos(2^k pi t) for k = 0..6].
inline void write_time_features(double t, double* out) {
  out[0] = t;
  out[1] = std::sqrt(std::max(t, 0.0));
  double freq = std::numbers::pi;
  for (int k = 0; k < 7; ++k, freq *= 2) {
    out[2 + 2 * k] = std::sin(freq * t);
    out[3 + 2 * k] = std::cos(freq * t);
  }
}

/// Writes the per-frame conditioning features followed by the presence flag.
inline void write_condition_features(const Conditioning* cond, int frame,
                                     const ConditioningLayout& layout, double* out) {
  const int count = layout.feature_count();
  if (cond == nullptr) {
    std::fill(out, out + count + 1, 0.0);
    return;
  }
  int at = 0;
  for (int k = 0; k < 18; ++k) {
    out[at++] = cond->rotations(frame, k);
  }
  if (layout.angular_velocity) {
    const int last = cond->frames() - 1;
    const int prev = std::max(frame - 1, 0);
    const int next = std::min(frame + 1, last);
    const double span = std::max(next - prev, 1);
    for (int k = 0; k < 18; ++k) {
      out[at++] = (cond->rotations(next, k) - cond->rotations(prev, k)) / span;
    }
  }
  if (layout.locations) {
    require(cond->locations.rows() == cond->rotations.rows(),
            "location-conditioned model needs sensed locations");
    out[at++] = cond->locations(frame, 1);  // head height
    for (int k = 0; k < 3; ++k) {
      out[at++] = cond->locations(frame, 3 + k) - cond->locations(frame, k);
    }
    for (int k = 0; k < 3; ++k) {
      out[at++] = cond->locations(frame, 6 + k) - cond->locations(frame, k);
    }
  }
  out[at] = 1.0;
}

/// Fully connected residual network: SiLU input layer, `blocks` residual SiLU layers,
/// linear output. Batches are columns.
class ResidualMlp {
 public:
  struct Cache {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> pre;     // pre-activations, one per hidden layer
    std::vector<Eigen::MatrixXd> hidden;  // hidden states after each hidden layer
  };

  ResidualMlp() = default;

  ResidualMlp(int input, int hidden, int blocks, int output, std::uint64_t seed)
      : input_(input), hidden_(hidden), blocks_(blocks), output_(output) {
    require(input > 0 && hidden > 0 && blocks >= 0 && output > 0, "invalid network shape");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto init = [&](int rows, int cols, double scale) {
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = scale * normal(rng);
      }
      return m;
    };
    params_.push_back(init(hidden, input, std::sqrt(1.0 / input)));
    params_.push_back(Eigen::MatrixXd::Zero(hidden, 1));
    for (int b = 0; b < blocks; ++b) {
      params_.push_back(init(hidden, hidden, 0.5 * std::sqrt(1.0 / hidden)));
      params_.push_back(Eigen::MatrixXd::Zero(hidden, 1));
    }
    params_.push_back(init(output, hidden, 0.1 * std::sqrt(1.0 / hidden)));
    params_.push_back(Eigen::MatrixXd::Zero(output, 1));
  }

  int input_size() const { return input_; }
  int hidden_size() const { return hidden_; }
  int blocks() const { return blocks_; }
  int output_size() const { return output_; }

  std::vector<Eigen::MatrixXd>& params() { return params_; }
  const std::vector<Eigen::MatrixXd>& params() const { return params_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
      n += static_cast<std::size_t>(p.size());
    }
    return n;
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const {
    require(x.rows() == input_, "network input has the wrong size");
    Eigen::MatrixXd pre = (params_[0] * x).colwise() + params_[1].col(0);
    Eigen::MatrixXd h = silu(pre);
    if (cache != nullptr) {
      cache->input = x;
      cache->pre.assign(1, pre);
      cache->hidden.assign(1, h);
    }
    for (int b = 0; b < blocks_; ++b) {
      pre = (params_[2 + 2 * b] * h).colwise() + params_[3 + 2 * b].col(0);
      h += silu(pre);
      if (cache != nullptr) {
        cache->pre.push_back(pre);
        cache->hidden.push_back(h);
      }
    }
    const std::size_t out = params_.size() - 2;
    return (params_[out] * h).colwise() + params_[out + 1].col(0);
  }

  /// Backpropagates `d_out`; accumulates parameter gradients into `grads` when given and
  /// returns the gradient with respect to the input.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& d_out,
                           std::vector<Eigen::MatrixXd>* grads) const {
    const std::size_t out = params_.size() - 2;
    if (grads != nullptr) {
      (*grads)[out].noalias() += d_out * cache.hidden.back().transpose();
      (*grads)[out + 1] += d_out.rowwise().sum();
    }
    Eigen::MatrixXd dh = params_[out].transpose() * d_out;
    for (int b = blocks_ - 1; b >= 0; --b) {
      const Eigen::MatrixXd d_pre = dh.cwiseProduct(silu_derivative(cache.pre[b + 1]));
      if (grads != nullptr) {
        (*grads)[2 + 2 * b].noalias() += d_pre * cache.hidden[b].transpose();
        (*grads)[3 + 2 * b] += d_pre.rowwise().sum();
      }
      dh.noalias() += params_[2 + 2 * b].transpose() * d_pre;
    }
    const Eigen::MatrixXd d_pre = dh.cwiseProduct(silu_derivative(cache.pre[0]));
    if (grads != nullptr) {
      (*grads)[0].noalias() += d_pre * cache.input.transpose();
      (*grads)[1] += d_pre.rowwise().sum();
    }
    return params_[0].transpose() * d_pre;
  }

  std::vector<Eigen::MatrixXd> zero_like() const {
    std::vector<Eigen::MatrixXd> out;
    for (const auto& p : params_) {
      out.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
    return out;
  }

 private:
  static Eigen::MatrixXd silu(const Eigen::MatrixXd& x) {
    return x.array() / (1.0 + (-x.array()).exp());
  }
  static Eigen::MatrixXd silu_derivative(const Eigen::MatrixXd& x) {
    const Eigen::ArrayXXd s = 1.0 / (1.0 + (-x.array()).exp());
    return (s * (1.0 + x.array() * (1.0 - s))).matrix();
  }

  int input_ = 0;
  int hidden_ = 0;
  int blocks_ = 0;
  int output_ = 0;
  std::vector<Eigen::MatrixXd> params_;
};

/// Frame-wise noise predictor: each frame's 132 state entries, its conditioning features and
/// the diffusion time go through a shared residual MLP.
class MlpDenoiser final : public Denoiser {
 public:
  MlpDenoiser() = default;
  MlpDenoiser(ResidualMlp net, ConditioningLayout layout, int window_length, bool unconditional)
      : net_(std::move(net)),
        layout_(layout),
        window_length_(window_length),
        unconditional_(unconditional) {
    require(net_.input_size() == denoiser_input_size(layout_),
            "network input does not match conditioning layout");
    require(net_.output_size() == kFrameStateSize, "network output must be 132 wide");
  }

  const ResidualMlp& network() const { return net_; }
  ResidualMlp& network() { return net_; }
  const ConditioningLayout& layout() const { return layout_; }
  int window_length() const { return window_length_; }

  Eigen::MatrixXd build_inputs(const PoseState& state, const DiffusionTime& time,
                               const Conditioning* cond) const {
    if (cond == nullptr && !unconditional_) {
      throw CapabilityError("model was trained without conditioning dropout; no unconditional path");
    }
    if (cond != nullptr) {
      require(cond->frames() == state.rows(), "conditioning and state frame counts differ");
    }
    const int frames = static_cast<int>(state.rows());
    Eigen::MatrixXd x(net_.input_size(), frames);
    for (int f = 0; f < frames; ++f) {
      double* col = x.col(f).data();
      Eigen::Map<FrameState> state_row(col);
      state_row = state.row(f);
      write_condition_features(cond, f, layout_, col + kFrameStateSize);
      write_time_features(time.t, col + kFrameStateSize + layout_.feature_count() + 1);
    }
    return x;
  }

  PoseState predict(const PoseState& state, const DiffusionTime& time,
                    const Conditioning* cond) const override {
    const Eigen::MatrixXd y = net_.forward(build_inputs(state, time, cond));
    return y.transpose();
  }

  bool has_vjp() const override { return true; }

  PoseState vjp(const PoseState& state, const DiffusionTime& time, const Conditioning* cond,
                const PoseState& cotangent) const override {
    ResidualMlp::Cache cache;
    net_.forward(build_inputs(state, time, cond), &cache);
    const Eigen::MatrixXd d_out = cotangent.transpose();
    const Eigen::MatrixXd d_in = net_.backward(cache, d_out, nullptr);
    return d_in.topRows(kFrameStateSize).transpose();
  }

  bool supports_unconditional() const override { return unconditional_; }
  int window_capacity() const override { return window_length_; }

 private:
  ResidualMlp net_;
  ConditioningLayout layout_;
  int window_length_ = kDefaultWindowLength;
  bool unconditional_ = false;
};

}  // namespace inpose
