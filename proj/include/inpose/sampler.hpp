// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "inpose/common.hpp"
#include "inpose/denoiser.hpp"
#include "inpose/measurement.hpp"
#include "inpose/rot6d.hpp"
#include "inpose/skeleton.hpp"
#include "inpose/uncertainty.hpp"

namespace inpose {

// ---------------------------------------------------------------------------------------------
// Noise schedule

inline double alpha_bar_from_sigma(double sigma) { return 1.0 / (1.0 + sigma * sigma); }

using SigmaRule = std::function<double(double)>;

/// Variance-preserving SDE with a linear beta(t) on t in [0, 1]:
/// abar(t) = exp(-(beta_min t + (beta_max - beta_min) t^2 / 2)), sigma^2 = 1/abar - 1.
struct VpSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;

  double alpha_bar(double t) const {
    return std::exp(-(beta_min * t + 0.5 * (beta_max - beta_min) * t * t));
  }
  double sigma(double t) const {
    const double exponent = beta_min * t + 0.5 * (beta_max - beta_min) * t * t;
    return std::sqrt(std::expm1(exponent));
  }
  SigmaRule rule() const {
    return [s = *this](double t) { return s.sigma(t); };
  }
};

struct Schedule {
  std::vector<double> times;       // q_0 = 0 < ... < q_N = T
  std::vector<double> sigmas;
  std::vector<double> alpha_bars;  // 1 / (1 + sigma^2)

  int steps() const { return static_cast<int>(times.size()) - 1; }
  double terminal() const { return times.back(); }
  DiffusionTime at(int i) const { return {times[i], alpha_bars[i]}; }
};

/// Uniform timesteps q_i = T i / N with abar_i = 1 / (1 + sigma(q_i)^2).
inline Schedule make_schedule(int steps, double terminal, const SigmaRule& sigma_rule) {
  require(steps >= 1, "schedule needs at least one step");
  require(terminal > 0.0, "terminal diffusion time must be positive");
  Schedule s;
  for (int i = 0; i <= steps; ++i) {
    const double t = i == steps ? terminal : terminal * i / steps;
    const double sigma = sigma_rule(t);
    if (!std::isfinite(sigma) || sigma < 0.0) {
      throw ValidationError("sigma rule produced an invalid value at t=" + std::to_string(t));
    }
    if (i == 0 && sigma != 0.0) {
      throw ValidationError("sigma rule must vanish at t=0");
    }
    if (i > 0 && !(sigma > s.sigmas.back())) {
      throw ValidationError("non-monotone sigma rule at t=" + std::to_string(t));
    }
    s.times.push_back(t);
    s.sigmas.push_back(sigma);
    s.alpha_bars.push_back(alpha_bar_from_sigma(sigma));
  }
  return s;
}

inline Schedule default_schedule(int steps = 50) {
  return make_schedule(steps, 1.0, VpSchedule{}.rule());
}

// ---------------------------------------------------------------------------------------------
// Denoising and update

/// Tweedie posterior mean (r_t - sqrt(1 - abar) eps) / sqrt(abar).
template <typename Derived1, typename Derived2>
PoseState tweedie_denoise(const Eigen::MatrixBase<Derived1>& r_t,
                          const Eigen::MatrixBase<Derived2>& eps, double alpha_bar) {
  if (!(alpha_bar > 0.0) || alpha_bar > 1.0) {
    throw ValidationError("alpha_bar must lie in (0, 1]");
  }
  return (r_t - std::sqrt(1.0 - alpha_bar) * eps) / std::sqrt(alpha_bar);
}

struct DdimCoefficients {
  double c1 = 0.0;  // fresh-noise weight
  double c2 = 0.0;  // predicted-noise weight
};

inline DdimCoefficients ddim_coefficients(double alpha_t, double alpha_s, double eta) {
  require(eta >= 0.0 && eta <= 1.0, "eta must lie in [0, 1]");
  require(alpha_t > 0.0 && alpha_t < 1.0 && alpha_s > 0.0 && alpha_s <= 1.0,
          "alpha_bar values out of range");
  DdimCoefficients c;
  c.c1 = eta * std::sqrt((1.0 - alpha_t / alpha_s) * (1.0 - alpha_s) / (1.0 - alpha_t));
  const double rest = 1.0 - alpha_s - c.c1 * c.c1;
  if (rest < 0.0) {
    if (rest < -1e-12) {
      throw ValidationError("invalid schedule/eta combination: 1 - abar_s - c1^2 < 0");
    }
    c.c2 = 0.0;
  } else {
    c.c2 = std::sqrt(rest);
  }
  return c;
}

/// sqrt(abar_s) r_hat + c1 eps_fresh + c2 eps_t + sqrt(abar_t) g.
template <typename Rng>
PoseState ddim_step(const PoseState& r_t, const PoseState& r_hat, const PoseState& eps_t,
                    const PoseState& g, double alpha_t, double alpha_s, double eta, Rng& rng) {
  const DdimCoefficients c = ddim_coefficients(alpha_t, alpha_s, eta);
  std::normal_distribution<double> normal(0.0, 1.0);
  PoseState fresh(r_t.rows(), kFrameStateSize);
  for (Eigen::Index i = 0; i < fresh.size(); ++i) {
    fresh.data()[i] = normal(rng);
  }
  return std::sqrt(alpha_s) * r_hat + c.c1 * fresh + c.c2 * eps_t + std::sqrt(alpha_t) * g;
}

// ---------------------------------------------------------------------------------------------
// Likelihood guidance

enum class CovarianceMode {
  kIdentity,    // Sigma = I
  kClosedForm,  // per-joint pushforward covariance
};

/// w_t^2 = sigma_t^2 / (1 + sigma_t^2) = 1 - abar_t.
inline double pigdm_width_squared(double alpha_bar) { return 1.0 - alpha_bar; }

struct GuidanceConfig {
  double eta = 0.0;
  double guidance_scale = 1.0;
  /// Measurement noise used inside the score; unset means the measurement set's sigma_l.
  std::optional<double> sigma_l;
  /// Lower bound on the score-side sigma_l; keeps late, low-noise steps from overshooting.
  double sigma_l_floor = 0.2;
  CovarianceMode covariance_mode = CovarianceMode::kIdentity;
  double cfg_weight = 1.0;
  double divergence_threshold = 1e3;

  void validate() const {
    require(eta >= 0.0 && eta <= 1.0, "eta must lie in [0, 1]");
    require(guidance_scale >= 0.0 && std::isfinite(guidance_scale),
            "guidance scale must be non-negative");
    require(!sigma_l || *sigma_l >= 0.0, "sigma_l must be non-negative");
    require(sigma_l_floor >= 0.0, "sigma_l floor must be non-negative");
    require(cfg_weight >= 0.0 && std::isfinite(cfg_weight), "cfg weight must be non-negative");
    require(divergence_threshold > 0.0, "divergence threshold must be positive");
  }
};

using DiffLocations = Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor>;

struct LocationLikelihood {
  PoseState grad_r_hat;    // A^T (w^2 A Sigma A^T + sigma_l^2 I)^{-1} e pulled back through D
  double quadratic = 0.0;  // 1/2 sum_f e_f^T M_f^{-1} e_f
};

/// Per-frame normal matrix w^2 A Sigma A^T + sigma_l^2 I.
inline Eigen::MatrixXd likelihood_normal_matrix(const LinearOperatorA& a, const FrameState& r_hat,
                                                CovarianceMode mode, double w2, double sigma_l) {
  const Eigen::MatrixXd& m = a.matrix();
  Eigen::MatrixXd normal = sigma_l * sigma_l * Eigen::MatrixXd::Identity(a.rows(), a.rows());
  if (mode == CovarianceMode::kIdentity) {
    normal.noalias() += w2 * m * m.transpose();
    return normal;
  }
  const double w = std::sqrt(w2);
  for (int j : a.support()) {
    const SixDof r = r_hat.segment<kSixDofSize>(kSixDofSize * j).transpose();
    const PushforwardGaussian g = covariance_sixdof_pushforward(r, w, HypothesisPolicy::kProject);
    const auto block = m.middleCols(9 * j, 9);
    normal.noalias() += block * g.covariance * block.transpose();
  }
  return normal;
}

/// Gradient of -1/2 e^T M^{-1} e with respect to r_hat (M held fixed), e = l - A D(r_hat).
inline LocationLikelihood location_likelihood(const DiffLocations& l_diff,
                                              const LinearOperatorA& a, const PoseState& r_hat,
                                              CovarianceMode mode, double w2, double sigma_l) {
  require(l_diff.rows() == r_hat.rows(), "location and state frame counts differ");
  require(a.rows() == 6, "expected the differential operator (6 rows)");
  LocationLikelihood out;
  out.grad_r_hat = PoseState::Zero(r_hat.rows(), kFrameStateSize);
  for (Eigen::Index f = 0; f < r_hat.rows(); ++f) {
    const FrameState frame = r_hat.row(f);
    Eigen::VectorXd predicted;
    try {
      predicted = apply_measurement_operator(a, frame);
    } catch (const DegenerateRotationError& e) {
      throw DegenerateRotationError(std::string(e.what()) + " in frame " + std::to_string(f),
                                    e.joint(), static_cast<int>(f));
    }
    const Eigen::VectorXd residual = l_diff.row(f).transpose() - predicted;
    const Eigen::MatrixXd normal = likelihood_normal_matrix(a, frame, mode, w2, sigma_l);
    const Eigen::LLT<Eigen::MatrixXd> llt(normal);
    if (llt.info() != Eigen::Success) {
      throw ValidationError("singular likelihood normal matrix in frame " + std::to_string(f));
    }
    const Eigen::VectorXd u = llt.solve(residual);
    out.quadratic += 0.5 * residual.dot(u);
    const Eigen::VectorXd v = a.matrix().transpose() * u;
    for (int j : a.support()) {
      const SixDof r = frame.segment<kSixDofSize>(kSixDofSize * j).transpose();
      const Vec9 cot = v.segment<9>(9 * j);
      out.grad_r_hat.row(f).segment<kSixDofSize>(kSixDofSize * j) =
          vjp_from_sixdof(r, cot).transpose();
    }
  }
  return out;
}

/// Maps a cotangent on r_hat to a cotangent on r_t (the transpose of d r_hat / d r_t).
using DenoisedVjp = std::function<PoseState(const PoseState&)>;

/// Pseudoinverse-guided likelihood score: guidance_scale * (dD(r_hat)/dr_t)^T A^T M^{-1} e.
inline PoseState likelihood_score(const DiffLocations& l_diff, const LinearOperatorA& a_diff,
                                  const PoseState& r_hat, const DenoisedVjp& denoised_vjp,
                                  const GuidanceConfig& config, double w2, double sigma_l) {
  const LocationLikelihood lk =
      location_likelihood(l_diff, a_diff, r_hat, config.covariance_mode, w2, sigma_l);
  return config.guidance_scale * denoised_vjp(lk.grad_r_hat);
}

// ---------------------------------------------------------------------------------------------
// Algorithm loop

struct SamplerStats {
  int windows = 0;
  int steps = 0;
  double max_state_norm = 0.0;
};

/// One guided reverse trajectory over a window of frames.
template <typename Rng>
PoseState sample_window(const DiffLocations& l_diff, const Conditioning& cond,
                        const LinearOperatorA& a_diff, const Denoiser& denoiser,
                        const Schedule& schedule, const GuidanceConfig& config, double sigma_l,
                        Rng& rng, SamplerStats* stats = nullptr) {
  const int frames = cond.frames();
  std::normal_distribution<double> normal(0.0, 1.0);
  PoseState r(frames, kFrameStateSize);
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    r.data()[i] = normal(rng);
  }
  const PoseState zero = PoseState::Zero(frames, kFrameStateSize);
  for (int i = schedule.steps(); i >= 1; --i) {
    const DiffusionTime t = schedule.at(i);
    const double alpha_s = schedule.alpha_bars[i - 1];
    const PoseState eps = predict_with_cfg(denoiser, r, t, &cond, config.cfg_weight);
    const PoseState r_hat = tweedie_denoise(r, eps, t.alpha_bar);

    PoseState g = zero;
    if (config.guidance_scale > 0.0) {
      const double scale_eps = std::sqrt(1.0 - t.alpha_bar);
      const double inv_sqrt_alpha = 1.0 / std::sqrt(t.alpha_bar);
      const DenoisedVjp through_denoiser = [&](const PoseState& cot) -> PoseState {
        const PoseState eps_cot = vjp_with_cfg(denoiser, r, t, &cond, config.cfg_weight, cot);
        return (cot - scale_eps * eps_cot) * inv_sqrt_alpha;
      };
      g = likelihood_score(l_diff, a_diff, r_hat, through_denoiser, config,
                           pigdm_width_squared(t.alpha_bar), sigma_l);
    }
    r = ddim_step(r, r_hat, eps, g, t.alpha_bar, alpha_s, config.eta, rng);

    const double norm = r.norm();
    if (stats != nullptr) {
      stats->steps += 1;
      stats->max_state_norm = std::max(stats->max_state_norm, norm);
    }
    if (!(norm <= config.divergence_threshold)) {
      throw DivergenceError("sampler diverged at step " + std::to_string(i) + " (t=" +
                            std::to_string(t.t) + "): state norm " + std::to_string(norm));
    }
  }
  return r;
}

struct WindowSpan {
  int begin = 0;
  int length = 0;
};

/// Windows of `window` frames advancing by window - overlap; the last one is end-aligned.
inline std::vector<WindowSpan> plan_windows(int frames, int window, int overlap) {
  require(frames >= 1, "sequence has no frames");
  require(window >= 1 && overlap >= 0 && overlap < window, "invalid window/overlap");
  if (frames <= window) {
    return {{0, frames}};
  }
  std::vector<WindowSpan> out;
  const int stride = window - overlap;
  for (int begin = 0;; begin += stride) {
    if (begin + window >= frames) {
      out.push_back({frames - window, window});
      break;
    }
    out.push_back({begin, window});
  }
  return out;
}

/// Linear cross-fade weights of window k's frames given its neighbors.
inline std::vector<double> window_blend_weights(const std::vector<WindowSpan>& spans,
                                                std::size_t k) {
  const WindowSpan& w = spans[k];
  std::vector<double> weights(w.length, 1.0);
  if (k > 0) {
    const int overlap = spans[k - 1].begin + spans[k - 1].length - w.begin;
    for (int f = 0; f < overlap; ++f) {
      weights[f] *= static_cast<double>(f + 1) / (overlap + 1);
    }
  }
  if (k + 1 < spans.size()) {
    const int overlap = w.begin + w.length - spans[k + 1].begin;
    for (int m = 0; m < overlap; ++m) {
      weights[w.length - overlap + m] *= static_cast<double>(overlap - m) / (overlap + 1);
    }
  }
  return weights;
}

/// Full estimator: guided sampling per window, cross-fade, projection onto valid rotations,
/// then root translation from the measured head.
inline PoseSequence run_inpose(const MeasurementSet& measurements, const Skeleton& skeleton,
                               const Denoiser& denoiser, const Schedule& schedule,
                               const GuidanceConfig& config, std::uint64_t seed,
                               SamplerStats* stats = nullptr) {
  config.validate();
  require(measurements.frames() >= 1, "measurement set is empty");
  const int frames = measurements.frames();
  const int window = denoiser.window_capacity();
  require(window > kDefaultWindowOverlap || frames <= window,
          "denoiser window too short for the configured overlap");
  const double sigma_l = std::max(config.sigma_l.value_or(measurements.sigma_l), config.sigma_l_floor);

  const LinearOperatorA a_diff = build_A(skeleton).differential();
  const DiffLocations l_diff = differential_transform(measurements);
  const auto spans = plan_windows(frames, window, kDefaultWindowOverlap);

  PoseState blended = PoseState::Zero(frames, kFrameStateSize);
  Eigen::VectorXd weight_sum = Eigen::VectorXd::Zero(frames);
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const WindowSpan& span = spans[k];
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 rng(seq);
    const Conditioning cond = Conditioning::from_measurements(measurements, span.begin, span.length);
    const PoseState r = sample_window(l_diff.middleRows(span.begin, span.length), cond, a_diff,
                                      denoiser, schedule, config, sigma_l, rng, stats);
    const auto weights = window_blend_weights(spans, k);
    for (int f = 0; f < span.length; ++f) {
      blended.row(span.begin + f) += weights[f] * r.row(f);
      weight_sum[span.begin + f] += weights[f];
    }
    if (stats != nullptr) {
      stats->windows += 1;
    }
  }

  PoseSequence out(frames);
  for (int f = 0; f < frames; ++f) {
    const FrameState row = blended.row(f) / weight_sum[f];
    RotationSet rotations(kJointCount);
    for (int j = 0; j < kJointCount; ++j) {
      const SixDof r = row.segment<kSixDofSize>(kSixDofSize * j).transpose();
      try {
        rotations[j] = from_sixdof(r);
      } catch (const DegenerateRotationError& e) {
        throw DegenerateRotationError(std::string(e.what()) + " at joint " + std::to_string(j) +
                                          " of frame " + std::to_string(f),
                                      j, f);
      }
      out.set_sixdof(f, j, to_sixdof(rotations[j]));
    }
    out.root_translation.row(f) =
        recover_root_translation(skeleton, rotations, measurements.location(f, 0),
                                 skeleton.measured().front())
            .transpose();
  }
  return out;
}

}  // namespace inpose
