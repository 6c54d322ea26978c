// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <memory>
#include <string>

#include "inpose/common.hpp"
#include "inpose/measurement.hpp"
#include "inpose/skeleton.hpp"

namespace inpose {

/// Frames per denoiser window.
inline constexpr int kDefaultWindowLength = 41;
/// Frames shared between consecutive windows.
inline constexpr int kDefaultWindowOverlap = 20;

struct DiffusionTime {
  double t = 0.0;
  double alpha_bar = 1.0;
};

/// Per-frame sensor data for one window. Rotation-conditioned models read only `rotations`;
/// `locations` is there for location-conditioned baselines.
struct Conditioning {
  RowMatrixX18 rotations;
  RowMatrixX9 locations;
  int frame_offset = 0;  // first frame of the window within the full sequence

  int frames() const { return static_cast<int>(rotations.rows()); }

  static Conditioning from_measurements(const MeasurementSet& m, int begin, int count) {
    require(begin >= 0 && count >= 0 && begin + count <= m.frames(), "window outside sequence");
    Conditioning c;
    c.rotations = m.rotations.middleRows(begin, count);
    c.locations = m.locations.middleRows(begin, count);
    c.frame_offset = begin;
    return c;
  }

  static Conditioning from_measurements(const MeasurementSet& m) {
    return from_measurements(m, 0, m.frames());
  }
};

/// Conditional noise-prediction model eps(r_t, t, cond). A null `cond` requests the
/// unconditional prediction.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual PoseState predict(const PoseState& state, const DiffusionTime& time,
                            const Conditioning* cond) const = 0;

  /// cotangent^T * d predict / d state, when the model can provide it analytically.
  virtual bool has_vjp() const { return false; }
  virtual PoseState vjp(const PoseState& /*state*/, const DiffusionTime& /*time*/,
                        const Conditioning* /*cond*/, const PoseState& /*cotangent*/) const {
    throw CapabilityError("denoiser has no analytic vector-Jacobian product");
  }

  virtual bool supports_unconditional() const { return true; }
  virtual int window_capacity() const { return kDefaultWindowLength; }
};

/// Step of the central-difference fallback VJP.
inline constexpr double kFiniteDifferenceVjpStep = 1e-4;

/// Central-difference VJP: one pair of predictions per state entry.
inline PoseState finite_difference_vjp(const Denoiser& model, const PoseState& state,
                                       const DiffusionTime& time, const Conditioning* cond,
                                       const PoseState& cotangent,
                                       double step = kFiniteDifferenceVjpStep) {
  PoseState out = PoseState::Zero(state.rows(), kFrameStateSize);
  PoseState probe = state;
  for (Eigen::Index f = 0; f < state.rows(); ++f) {
    for (int k = 0; k < kFrameStateSize; ++k) {
      const double saved = probe(f, k);
      probe(f, k) = saved + step;
      const PoseState plus = model.predict(probe, time, cond);
      probe(f, k) = saved - step;
      const PoseState minus = model.predict(probe, time, cond);
      probe(f, k) = saved;
      out(f, k) = (cotangent.array() * (plus - minus).array()).sum() / (2 * step);
    }
  }
  return out;
}

inline PoseState noise_vjp(const Denoiser& model, const PoseState& state,
                           const DiffusionTime& time, const Conditioning* cond,
                           const PoseState& cotangent) {
  if (model.has_vjp()) {
    return model.vjp(state, time, cond, cotangent);
  }
  return finite_difference_vjp(model, state, time, cond, cotangent);
}

/// eps_uncond + weight * (eps_cond - eps_uncond). Weight 1 is the plain conditional call and
/// weight 0 the plain unconditional call.
inline PoseState predict_with_cfg(const Denoiser& model, const PoseState& state,
                                  const DiffusionTime& time, const Conditioning* cond,
                                  double cfg_weight) {
  if (cond == nullptr || cfg_weight == 1.0) {
    return model.predict(state, time, cond);
  }
  if (!model.supports_unconditional()) {
    throw CapabilityError("model was trained without conditioning dropout; no unconditional path");
  }
  if (cfg_weight == 0.0) {
    return model.predict(state, time, nullptr);
  }
  const PoseState eps_uncond = model.predict(state, time, nullptr);
  const PoseState eps_cond = model.predict(state, time, cond);
  return eps_uncond + cfg_weight * (eps_cond - eps_uncond);
}

inline PoseState vjp_with_cfg(const Denoiser& model, const PoseState& state,
                              const DiffusionTime& time, const Conditioning* cond,
                              double cfg_weight, const PoseState& cotangent) {
  if (cond == nullptr || cfg_weight == 1.0) {
    return noise_vjp(model, state, time, cond, cotangent);
  }
  if (!model.supports_unconditional()) {
    throw CapabilityError("model was trained without conditioning dropout; no unconditional path");
  }
  if (cfg_weight == 0.0) {
    return noise_vjp(model, state, time, nullptr, cotangent);
  }
  const PoseState uncond = noise_vjp(model, state, time, nullptr, cotangent);
  const PoseState conditional = noise_vjp(model, state, time, cond, cotangent);
  return uncond + cfg_weight * (conditional - uncond);
}

/// Test oracle that knows the clean sequence: eps = (r_t - sqrt(abar) r_true) / sqrt(1 - abar),
/// so Tweedie denoising returns r_true exactly and d r_hat / d r_t vanishes.
class OracleDenoiser final : public Denoiser {
 public:
  explicit OracleDenoiser(PoseSequence truth, int window = kDefaultWindowLength)
      : truth_(std::move(truth)), window_(window) {}

  PoseState predict(const PoseState& state, const DiffusionTime& time,
                    const Conditioning* cond) const override {
    const int offset = cond != nullptr ? cond->frame_offset : 0;
    require(offset + state.rows() <= truth_.frames(), "oracle window exceeds ground truth");
    if (time.alpha_bar >= 1.0) {
      return PoseState::Zero(state.rows(), kFrameStateSize);
    }
    const auto clean = truth_.rotations.middleRows(offset, state.rows());
    return (state - std::sqrt(time.alpha_bar) * clean) / std::sqrt(1.0 - time.alpha_bar);
  }

  bool has_vjp() const override { return true; }
  PoseState vjp(const PoseState& state, const DiffusionTime& time, const Conditioning*,
                const PoseState& cotangent) const override {
    if (time.alpha_bar >= 1.0) {
      return PoseState::Zero(state.rows(), kFrameStateSize);
    }
    return cotangent / std::sqrt(1.0 - time.alpha_bar);
  }

  int window_capacity() const override { return window_; }

 private:
  PoseSequence truth_;
  int window_;
};

}  // namespace inpose
