// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace inpose {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;

/// First two columns of a rotation matrix, column-stacked: [R11 R21 R31 R12 R22 R32].
using SixDof = Vec6;

inline constexpr int kJointCount = 22;
inline constexpr int kSixDofSize = 6;
inline constexpr int kFrameStateSize = kJointCount * kSixDofSize;  // 132
inline constexpr int kMeasuredCount = 3;

// SMPL joint indices used throughout.
namespace joint {
inline constexpr int kPelvis = 0;
inline constexpr int kLeftHip = 1;
inline constexpr int kRightHip = 2;
inline constexpr int kSpine1 = 3;
inline constexpr int kLeftKnee = 4;
inline constexpr int kRightKnee = 5;
inline constexpr int kSpine2 = 6;
inline constexpr int kLeftAnkle = 7;
inline constexpr int kRightAnkle = 8;
inline constexpr int kSpine3 = 9;
inline constexpr int kLeftFoot = 10;
inline constexpr int kRightFoot = 11;
inline constexpr int kNeck = 12;
inline constexpr int kLeftCollar = 13;
inline constexpr int kRightCollar = 14;
inline constexpr int kHead = 15;
inline constexpr int kLeftShoulder = 16;
inline constexpr int kRightShoulder = 17;
inline constexpr int kLeftElbow = 18;
inline constexpr int kRightElbow = 19;
inline constexpr int kLeftWrist = 20;
inline constexpr int kRightWrist = 21;
}  // namespace joint

/// Sensed joints in their fixed order: head, left wrist, right wrist.
inline constexpr std::array<int, kMeasuredCount> kMeasuredJoints = {
    joint::kHead, joint::kLeftWrist, joint::kRightWrist};

/// Per-frame state of the whole body: one row per frame, 22 x 6 entries per row.
using PoseState = Eigen::Matrix<double, Eigen::Dynamic, kFrameStateSize, Eigen::RowMajor>;
using FrameState = Eigen::Matrix<double, 1, kFrameStateSize>;
using RowMatrixX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using RowMatrixX9 = Eigen::Matrix<double, Eigen::Dynamic, 9, Eigen::RowMajor>;
using RowMatrixX18 = Eigen::Matrix<double, Eigen::Dynamic, 18, Eigen::RowMajor>;

using RotationSet = std::vector<Mat3>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument or malformed structure.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A 6DoF vector whose Gram-Schmidt inverse is undefined.
class DegenerateRotationError : public Error {
 public:
  DegenerateRotationError(const std::string& what, int joint = -1, int frame = -1)
      : Error(what), joint_(joint), frame_(frame) {}

  int joint() const noexcept { return joint_; }
  int frame() const noexcept { return frame_; }

 private:
  int joint_;
  int frame_;
};

/// Requested model capability was not trained or is unavailable.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// File content could not be parsed or failed validation.
class FormatError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) {
    throw ValidationError(message);
  }
}

}  // namespace inpose
