// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>

#include "inpose/common.hpp"

namespace inpose {

/// Norm below which a Gram-Schmidt column is considered degenerate.
inline constexpr double kDegenerateThreshold = 1e-8;

inline SixDof to_sixdof(const Mat3& rotation) {
  SixDof r;
  r << rotation.col(0), rotation.col(1);
  return r;
}

inline Mat3 from_sixdof(const SixDof& r) {
  const Vec3 a = r.head<3>();
  const Vec3 b = r.tail<3>();
  const double a_norm = a.norm();
  if (!(a_norm >= kDegenerateThreshold)) {
    throw DegenerateRotationError("degenerate 6DoF representation: zero first column");
  }
  const Vec3 c1 = a / a_norm;
  const Vec3 c2_raw = b - c1.dot(b) * c1;
  const double c2_norm = c2_raw.norm();
  if (!(c2_norm >= kDegenerateThreshold)) {
    throw DegenerateRotationError(
        "degenerate 6DoF representation: second column parallel to first");
  }
  const Vec3 c2 = c2_raw / c2_norm;
  Mat3 rotation;
  rotation << c1, c2, c1.cross(c2);
  return rotation;
}

/// Elementwise inverse over a flat per-joint array of 6DoF vectors (the batched map D).
inline RotationSet batch_from_sixdof(std::span<const double> sixdofs) {
  require(sixdofs.size() % kSixDofSize == 0, "6DoF batch length must be a multiple of 6");
  const int joints = static_cast<int>(sixdofs.size() / kSixDofSize);
  RotationSet out(joints);
  for (int j = 0; j < joints; ++j) {
    const SixDof r = Eigen::Map<const SixDof>(sixdofs.data() + kSixDofSize * j);
    try {
      out[j] = from_sixdof(r);
    } catch (const DegenerateRotationError& e) {
      throw DegenerateRotationError(
          std::string(e.what()) + " at joint " + std::to_string(j), j);
    }
  }
  return out;
}

inline RotationSet batch_from_sixdof(const FrameState& frame) {
  return batch_from_sixdof(std::span<const double>(frame.data(), kFrameStateSize));
}

/// Column-major vec(R), the ordering shared with the 6DoF layout.
inline Vec9 vec_column_major(const Mat3& rotation) {
  return Eigen::Map<const Vec9>(rotation.data());
}

/// cotangent^T * d vec(from_sixdof(r)) / dr, with vec taken column-major.
inline SixDof vjp_from_sixdof(const SixDof& r, const Vec9& cotangent) {
  const Vec3 a = r.head<3>();
  const Vec3 b = r.tail<3>();
  const double a_norm = a.norm();
  if (!(a_norm >= kDegenerateThreshold)) {
    throw DegenerateRotationError("degenerate 6DoF representation: zero first column");
  }
  const Vec3 c1 = a / a_norm;
  const double proj = c1.dot(b);
  const Vec3 c2_raw = b - proj * c1;
  const double c2_norm = c2_raw.norm();
  if (!(c2_norm >= kDegenerateThreshold)) {
    throw DegenerateRotationError(
        "degenerate 6DoF representation: second column parallel to first");
  }
  const Vec3 c2 = c2_raw / c2_norm;

  Vec3 g1 = cotangent.segment<3>(0);
  Vec3 g2 = cotangent.segment<3>(3);
  const Vec3 g3 = cotangent.segment<3>(6);

  // c3 = c1 x c2
  g1 += c2.cross(g3);
  g2 += g3.cross(c1);

  // c2 = normalize(c2_raw)
  const Vec3 g_c2_raw = (g2 - c2 * c2.dot(g2)) / c2_norm;

  // c2_raw = b - (c1 . b) c1
  const double g_dot = c1.dot(g_c2_raw);
  const Vec3 g_b = g_c2_raw - c1 * g_dot;
  g1 -= proj * g_c2_raw + b * g_dot;

  // c1 = normalize(a)
  const Vec3 g_a = (g1 - c1 * c1.dot(g1)) / a_norm;

  SixDof out;
  out << g_a, g_b;
  return out;
}

/// Geodesic distance between two rotations, in degrees, within [0, 180].
/// atan2 of the skew and symmetric parts; acos of the trace loses precision near 0 and 180.
inline double geodesic_angle(const Mat3& r1, const Mat3& r2) {
  const Mat3 rel = r1.transpose() * r2;
  const Vec3 skew(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  return std::atan2(0.5 * skew.norm(), 0.5 * (rel.trace() - 1.0)) * 180.0 / std::numbers::pi;
}

/// Maximum deviation of the (first column, second column) pair from an orthonormal pair.
inline double orthonormal_pair_deviation(const SixDof& r) {
  const Vec3 a = r.head<3>();
  const Vec3 b = r.tail<3>();
  return std::max({std::abs(a.norm() - 1.0), std::abs(b.norm() - 1.0), std::abs(a.dot(b))});
}

/// Snaps a 6DoF vector onto the orthonormal-pair manifold.
inline SixDof project_sixdof(const SixDof& r) { return to_sixdof(from_sixdof(r)); }

inline Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

inline Mat3 rot_x(double angle) { return axis_angle(Vec3::UnitX(), angle); }
inline Mat3 rot_y(double angle) { return axis_angle(Vec3::UnitY(), angle); }
inline Mat3 rot_z(double angle) { return axis_angle(Vec3::UnitZ(), angle); }

}  // namespace inpose
