// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "inpose/common.hpp"
#include "inpose/denoiser.hpp"
#include "inpose/measurement.hpp"
#include "inpose/network.hpp"
#include "inpose/sampler.hpp"
#include "inpose/skeleton.hpp"

namespace inpose {

struct TrainConfig {
  int window_length = kDefaultWindowLength;
  int diffusion_steps = 1000;  // training times are k / diffusion_steps, k = 1..diffusion_steps
  double dropout = 0.1;        // probability of training the unconditional path
  double learning_rate = 1e-3;
  double final_learning_rate_fraction = 0.05;
  long steps = 20000;
  int batch_size = 128;
  int hidden = 256;
  int blocks = 2;
  double gradient_clip = 5.0;
  ConditioningLayout layout;
  std::uint64_t seed = 0;

  void validate() const {
    require(window_length >= 1, "window length must be positive");
    require(diffusion_steps >= 1, "diffusion steps must be positive");
    require(dropout >= 0.0 && dropout < 1.0, "dropout probability must lie in [0, 1)");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be positive");
    require(final_learning_rate_fraction > 0.0 && final_learning_rate_fraction <= 1.0,
            "final learning-rate fraction must lie in (0, 1]");
    require(steps >= 0, "step count must be non-negative");
    require(batch_size >= 1, "batch size must be positive");
    require(hidden >= 1 && blocks >= 0, "invalid network shape");
    require(gradient_clip > 0.0, "gradient clip must be positive");
  }
};

/// Ground-truth sequences paired with their simulated sensor readings.
struct TrainingSet {
  std::vector<PoseSequence> poses;
  std::vector<MeasurementSet> measurements;

  /// Number of full windows of `length` frames the set can be cut into.
  int window_count(int length) const {
    int n = 0;
    for (const auto& p : poses) {
      n += p.frames() / length;
    }
    return n;
  }

  void validate(int window_length) const {
    if (poses.empty()) {
      throw ValidationError("empty dataset");
    }
    require(poses.size() == measurements.size(), "each sequence needs a measurement set");
    for (std::size_t s = 0; s < poses.size(); ++s) {
      require(poses[s].frames() == measurements[s].frames(),
              "sequence " + std::to_string(s) + " and its measurements differ in length");
      if (poses[s].frames() < window_length) {
        throw ValidationError("sequence " + std::to_string(s) + " has " +
                              std::to_string(poses[s].frames()) +
                              " frames, fewer than the window length " +
                              std::to_string(window_length));
      }
    }
    if (window_count(window_length) < 10) {
      throw ValidationError("dataset holds fewer than 10 windows of " +
                            std::to_string(window_length) + " frames");
    }
  }
};

/// Model plus optimizer state; enough to resume training exactly.
struct TrainState {
  MlpDenoiser model;
  TrainConfig config;
  std::vector<Eigen::MatrixXd> adam_m;
  std::vector<Eigen::MatrixXd> adam_v;
  long step = 0;
  std::vector<double> losses;  // per-step batch loss
};

inline MlpDenoiser make_denoiser(const TrainConfig& config) {
  ResidualMlp net(denoiser_input_size(config.layout), config.hidden, config.blocks,
                  kFrameStateSize, config.seed ^ 0x9e3779b97f4a7c15ULL);
  return MlpDenoiser(std::move(net), config.layout, config.window_length, config.dropout > 0.0);
}

inline TrainState initial_train_state(const TrainConfig& config) {
  config.validate();
  TrainState state;
  state.config = config;
  state.model = make_denoiser(config);
  state.adam_m = state.model.network().zero_like();
  state.adam_v = state.model.network().zero_like();
  return state;
}

inline double cosine_learning_rate(const TrainConfig& config, long step) {
  if (config.steps <= 1) {
    return config.learning_rate;
  }
  const double progress = std::min(1.0, static_cast<double>(step) / (config.steps - 1));
  const double floor = config.final_learning_rate_fraction;
  return config.learning_rate * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

using TrainProgress = std::function<void(long step, double loss)>;

/// Noise-prediction training: random frame, random t, r_t = sqrt(abar) r + sqrt(1 - abar) eps,
/// squared error on eps. Conditioning is the sensed rotations, dropped with probability
/// `dropout`. Continues from `state.step` up to `until` (default `state.config.steps`).
inline void train_denoiser(TrainState& state, const TrainingSet& data,
                           const TrainProgress& progress = {}, long until = -1) {
  const TrainConfig& config = state.config;
  config.validate();
  data.validate(config.window_length);

  std::vector<Conditioning> conds;
  std::vector<std::pair<int, int>> frames;  // (sequence, frame)
  for (std::size_t s = 0; s < data.poses.size(); ++s) {
    conds.push_back(Conditioning::from_measurements(data.measurements[s]));
    for (int f = 0; f < data.poses[s].frames(); ++f) {
      frames.emplace_back(static_cast<int>(s), f);
    }
  }

  ResidualMlp& net = state.model.network();
  const VpSchedule vp;
  const int input = net.input_size();
  const int feature_offset = kFrameStateSize;
  const int time_offset = kFrameStateSize + config.layout.feature_count() + 1;
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  Eigen::MatrixXd x(input, config.batch_size);
  Eigen::MatrixXd noise(kFrameStateSize, config.batch_size);
  ResidualMlp::Cache cache;
  std::vector<Eigen::MatrixXd> grads = net.zero_like();

  const long stop = until < 0 ? config.steps : std::min(until, config.steps);
  for (; state.step < stop; ++state.step) {
    // Each step has its own stream so a resumed run matches an uninterrupted one.
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                      static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(state.step),
                      static_cast<std::uint32_t>(state.step >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, frames.size() - 1);
    std::uniform_int_distribution<int> pick_t(1, config.diffusion_steps);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    for (int b = 0; b < config.batch_size; ++b) {
      const auto [s, f] = frames[pick(rng)];
      const double t = static_cast<double>(pick_t(rng)) / config.diffusion_steps;
      const double abar = vp.alpha_bar(t);
      const bool drop = uniform(rng) < config.dropout;
      double* col = x.col(b).data();
      for (int k = 0; k < kFrameStateSize; ++k) {
        const double e = normal(rng);
        noise(k, b) = e;
        col[k] = std::sqrt(abar) * data.poses[s].rotations(f, k) + std::sqrt(1.0 - abar) * e;
      }
      write_condition_features(drop ? nullptr : &conds[s], f, config.layout, col + feature_offset);
      write_time_features(t, col + time_offset);
    }

    const Eigen::MatrixXd out = net.forward(x, &cache);
    const Eigen::MatrixXd diff = out - noise;
    const double loss = diff.squaredNorm() / static_cast<double>(diff.size());
    if (!std::isfinite(loss)) {
      throw DivergenceError("non-finite training loss at step " + std::to_string(state.step));
    }
    state.losses.push_back(loss);

    for (auto& g : grads) {
      g.setZero();
    }
    net.backward(cache, (2.0 / static_cast<double>(diff.size())) * diff, &grads);

    double norm2 = 0.0;
    for (const auto& g : grads) {
      norm2 += g.squaredNorm();
    }
    const double clip = std::min(1.0, config.gradient_clip / std::max(std::sqrt(norm2), 1e-30));

    const double lr = cosine_learning_rate(config, state.step);
    const double t1 = static_cast<double>(state.step + 1);
    const double bias1 = 1.0 - std::pow(beta1, t1);
    const double bias2 = 1.0 - std::pow(beta2, t1);
    auto& params = net.params();
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Eigen::ArrayXXd g = clip * grads[p].array();
      state.adam_m[p] = beta1 * state.adam_m[p].array() + (1.0 - beta1) * g;
      state.adam_v[p] = beta2 * state.adam_v[p].array() + (1.0 - beta2) * g.square();
      params[p].array() -= lr * (state.adam_m[p].array() / bias1) /
                           ((state.adam_v[p].array() / bias2).sqrt() + adam_eps);
    }
    if (progress) {
      progress(state.step, loss);
    }
  }
}

/// Convenience wrapper: fresh state, full run.
inline TrainState train_denoiser(const TrainingSet& data, const TrainConfig& config,
                                 const TrainProgress& progress = {}) {
  TrainState state = initial_train_state(config);
  train_denoiser(state, data, progress);
  return state;
}

/// Mean of the first and last `count` step losses.
inline std::pair<double, double> loss_endpoints(const std::vector<double>& losses, int count) {
  require(!losses.empty(), "no losses recorded");
  const int n = std::min<int>(count, static_cast<int>(losses.size()));
  double first = 0.0, last = 0.0;
  for (int i = 0; i < n; ++i) {
    first += losses[i];
    last += losses[losses.size() - 1 - i];
  }
  return {first / n, last / n};
}

}  // namespace inpose
