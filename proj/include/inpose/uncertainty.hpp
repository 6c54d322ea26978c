// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "inpose/common.hpp"
#include "inpose/rot6d.hpp"

namespace inpose {

/// Gaussian approximation of vec(D(r)) for r ~ N(r_hat, w^2 I6).
///
/// Entry order is [r1..r6, R(3,1), R(3,2), R(3,3)], i.e. column-major vec(R): the first two
/// columns pass through linearly and the third column is their cross product.
struct PushforwardGaussian {
  Vec9 mean;
  Mat9 sigma;       // unscaled; leading 6x6 block is the identity
  Mat9 covariance;  // w^2 * sigma
  double w = 0.0;
};

/// Within this deviation from an orthonormal pair the hypothesis is taken as satisfied.
inline constexpr double kHypothesisTolerance = 1e-6;
/// Beyond this deviation the input is rejected instead of projected.
inline constexpr double kHypothesisRejectTolerance = 1e-2;

enum class HypothesisPolicy {
  kStrict,   // project small deviations, reject large ones
  kProject,  // always project; used inside the sampler where r_hat is unconstrained
};

/// Closed-form Sigma: third-column variances 2w^2 + four squared means, the twelve
/// third-column/first-two-column covariances, and the three third-column cross terms.
inline Mat9 pushforward_sigma(const SixDof& r, double w) {
  const double r1 = r[0], r2 = r[1], r3 = r[2], r4 = r[3], r5 = r[4], r6 = r[5];
  const double w2 = w * w;
  Mat9 s = Mat9::Zero();
  s.topLeftCorner<6, 6>().setIdentity();

  s(6, 6) = 2 * w2 + r2 * r2 + r6 * r6 + r5 * r5 + r3 * r3;
  s(7, 7) = 2 * w2 + r3 * r3 + r4 * r4 + r1 * r1 + r6 * r6;
  s(8, 8) = 2 * w2 + r1 * r1 + r5 * r5 + r4 * r4 + r2 * r2;

  auto set = [&s](int a, int b, double v) {
    s(a, b) = v;
    s(b, a) = v;
  };
  // R(3,1) = r2 r6 - r3 r5
  set(6, 1, r6);
  set(6, 2, -r5);
  set(6, 4, -r3);
  set(6, 5, r2);
  // R(3,2) = r3 r4 - r1 r6
  set(7, 0, -r6);
  set(7, 2, r4);
  set(7, 3, r3);
  set(7, 5, -r1);
  // R(3,3) = r1 r5 - r2 r4
  set(8, 0, r5);
  set(8, 1, -r4);
  set(8, 3, -r2);
  set(8, 4, r1);

  set(6, 7, -(r1 * r2 + r4 * r5));
  set(7, 8, -(r2 * r3 + r5 * r6));
  set(8, 6, -(r1 * r3 + r4 * r6));
  return s;
}

inline PushforwardGaussian covariance_sixdof_pushforward(
    const SixDof& r_hat, double w, HypothesisPolicy policy = HypothesisPolicy::kStrict) {
  require(w >= 0.0 && std::isfinite(w), "pushforward width must be non-negative");
  SixDof r = r_hat;
  const double deviation = orthonormal_pair_deviation(r_hat);
  if (policy == HypothesisPolicy::kStrict && !(deviation <= kHypothesisRejectTolerance)) {
    throw ValidationError("6DoF mean violates the orthonormal-pair hypothesis (deviation " +
                          std::to_string(deviation) + ")");
  }
  if (policy == HypothesisPolicy::kProject || deviation > kHypothesisTolerance) {
    r = project_sixdof(r_hat);
  }
  PushforwardGaussian out;
  out.w = w;
  out.mean << r, r.head<3>().cross(r.tail<3>());
  out.sigma = pushforward_sigma(r, w);
  out.covariance = (w * w) * out.sigma;
  return out;
}

struct MonteCarloMoments {
  Vec9 mean;
  Mat9 covariance;
  Vec9 mean_standard_error;
  Mat9 covariance_standard_error;
  long samples = 0;
};

/// Empirical moments of [r, r[0:3] x r[3:6]] for r ~ N(r_hat, w^2 I6). Deterministic in seed.
inline MonteCarloMoments monte_carlo_pushforward(const SixDof& r_hat, double w, long samples,
                                                 std::uint64_t seed) {
  require(samples >= 1000, "Monte Carlo needs at least 1000 samples");
  require(w >= 0.0, "pushforward width must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::Matrix<double, 9, Eigen::Dynamic> draws(9, samples);
  for (long n = 0; n < samples; ++n) {
    SixDof r;
    for (int k = 0; k < 6; ++k) {
      r[k] = r_hat[k] + w * normal(rng);
    }
    draws.col(n) << r, r.head<3>().cross(r.tail<3>());
  }

  MonteCarloMoments out;
  out.samples = samples;
  out.mean = draws.rowwise().mean();
  const Eigen::Matrix<double, 9, Eigen::Dynamic> centered = draws.colwise() - out.mean;
  const double n = static_cast<double>(samples);
  out.covariance = (centered * centered.transpose()) / (n - 1.0);
  out.mean_standard_error =
      (centered.array().square().rowwise().sum() / (n - 1.0)).sqrt() / std::sqrt(n);

  Mat9 second = Mat9::Zero();
  for (long s = 0; s < samples; ++s) {
    const Vec9 c = centered.col(s);
    second.noalias() += ((c * c.transpose()).array().square()).matrix();
  }
  // Var of the per-sample product (x_a - m_a)(x_b - m_b), divided by N.
  const Mat9 product_mean = out.covariance * ((n - 1.0) / n);
  out.covariance_standard_error =
      ((second / n).array() - product_mean.array().square()).max(0.0).sqrt() / std::sqrt(n);
  return out;
}

/// Determinants of the leading n x n blocks, n = 1..size.
inline std::vector<double> sylvester_minors(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw ValidationError("Sylvester minors need a square matrix");
  }
  std::vector<double> out;
  out.reserve(m.rows());
  for (Eigen::Index n = 1; n <= m.rows(); ++n) {
    out.push_back(m.topLeftCorner(n, n).fullPivLu().determinant());
  }
  return out;
}

/// The closed-form corner determinants of Sigma: six ones, then 2w^2, (2w^2)^2, (2w^2)^3.
inline std::vector<double> expected_sylvester_minors(double w) {
  const double d = 2 * w * w;
  return {1, 1, 1, 1, 1, 1, d, d * d, d * d * d};
}

/// Uniformly distributed rotation (normalized Gaussian quaternion).
template <typename Rng>
Mat3 random_rotation(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  return q.toRotationMatrix();
}

/// Two-sided standard-normal critical value z with P(|Z| > z) = alpha.
inline double normal_critical_value(double alpha) {
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(mid / std::sqrt(2.0)) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct EntryMismatch {
  int row = 0;
  int col = 0;
  double closed_form = 0.0;
  double monte_carlo = 0.0;
  double standard_error = 0.0;
  double z = 0.0;
};

struct PointCheck {
  SixDof r_hat;
  double w = 0.0;
  double max_abs_deviation = 0.0;  // max |closed - MC| over covariance entries
  double max_z = 0.0;              // in standard errors
  std::vector<EntryMismatch> mismatches;
  std::vector<double> minors;
  std::vector<double> expected_minors;
  double max_minor_rel_error = 0.0;
  bool minors_ok = false;
  bool all_minors_positive = false;
  bool moments_ok = false;
};

struct PushforwardCheckOptions {
  int points = 20;
  std::vector<double> widths = {0.05, 0.3, 1.0};
  long samples = 200000;
  std::uint64_t seed = 1;
  double sigma_threshold = 3.0;       // per-entry bound in standard errors
  double minor_rel_tolerance = 1e-9;
  bool inject_sign_error = false;     // test hook: flips Cov[R(3,2), r1]
};

struct PushforwardCheckReport {
  PushforwardCheckOptions options;
  std::vector<PointCheck> points;
  int entries_tested = 0;
  int entries_failed = 0;
  double max_z = 0.0;
  bool minors_ok = true;
  bool moments_ok = true;
  bool passed() const { return minors_ok && moments_ok; }
};

inline const char* pushforward_entry_name(int index) {
  static const char* names[9] = {"r1", "r2", "r3", "r4", "r5", "r6", "R(3,1)", "R(3,2)", "R(3,3)"};
  return names[index];
}

/// Closed-form covariance vs Monte Carlo and Sylvester minors over random hypothesis points.
inline PushforwardCheckReport check_pushforward(const PushforwardCheckOptions& options) {
  PushforwardCheckReport report;
  report.options = options;
  std::mt19937_64 rng(options.seed);
  for (int p = 0; p < options.points; ++p) {
    const SixDof r_hat = to_sixdof(random_rotation(rng));
    for (double w : options.widths) {
      PointCheck check;
      check.r_hat = r_hat;
      check.w = w;
      PushforwardGaussian g = covariance_sixdof_pushforward(r_hat, w);
      if (options.inject_sign_error) {
        g.sigma(7, 0) = -g.sigma(7, 0);
        g.sigma(0, 7) = -g.sigma(0, 7);
        g.covariance = w * w * g.sigma;
      }
      const MonteCarloMoments mc = monte_carlo_pushforward(r_hat, w, options.samples, rng());
      for (int a = 0; a < 9; ++a) {
        for (int b = a; b < 9; ++b) {
          const double diff = std::abs(g.covariance(a, b) - mc.covariance(a, b));
          const double se = mc.covariance_standard_error(a, b);
          const double z = se > 0.0 ? diff / se : (diff > 0.0 ? INFINITY : 0.0);
          check.max_abs_deviation = std::max(check.max_abs_deviation, diff);
          check.max_z = std::max(check.max_z, z);
          ++report.entries_tested;
          if (!(z <= options.sigma_threshold)) {
            check.mismatches.push_back({a, b, g.covariance(a, b), mc.covariance(a, b), se, z});
            ++report.entries_failed;
          }
        }
      }
      check.moments_ok = check.mismatches.empty();
      check.minors = sylvester_minors(g.sigma);
      check.expected_minors = expected_sylvester_minors(w);
      check.all_minors_positive = true;
      for (std::size_t n = 0; n < check.minors.size(); ++n) {
        const double expected = check.expected_minors[n];
        check.max_minor_rel_error = std::max(
            check.max_minor_rel_error, std::abs(check.minors[n] - expected) / std::abs(expected));
        check.all_minors_positive = check.all_minors_positive && check.minors[n] > 0.0;
      }
      check.minors_ok = check.max_minor_rel_error <= options.minor_rel_tolerance &&
                        check.all_minors_positive;
      report.minors_ok = report.minors_ok && check.minors_ok;
      report.moments_ok = report.moments_ok && check.moments_ok;
      report.max_z = std::max(report.max_z, check.max_z);
      report.points.push_back(std::move(check));
    }
  }
  return report;
}

}  // namespace inpose
