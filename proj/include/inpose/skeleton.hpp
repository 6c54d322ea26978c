// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "inpose/common.hpp"
#include "inpose/rot6d.hpp"

namespace inpose {

/// Parent array of the 22-joint SMPL body tree; -1 marks the root.
inline const std::vector<int>& smpl_parents() {
  static const std::vector<int> parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7,
                                           8,  9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
  return parents;
}

/// Rest-pose bone vectors (meters, y up, +x to the body's left) of the synthetic default body.
/// Entry j is the offset of joint j from its parent.
inline const std::vector<Vec3>& default_bone_table() {
  static const std::vector<Vec3> bones = {
      {0.000, 0.000, 0.000},    // pelvis
      {0.060, -0.090, 0.000},   // left hip
      {-0.060, -0.090, 0.000},  // right hip
      {0.000, 0.110, -0.010},   // spine1
      {0.040, -0.380, 0.000},   // left knee
      {-0.040, -0.380, 0.000},  // right knee
      {0.000, 0.130, 0.010},    // spine2
      {-0.010, -0.400, -0.040}, // left ankle
      {0.010, -0.400, -0.040},  // right ankle
      {0.000, 0.050, 0.000},    // spine3
      {0.030, -0.050, 0.120},   // left foot
      {-0.030, -0.050, 0.120},  // right foot
      {0.000, 0.210, -0.030},   // neck
      {0.080, 0.120, -0.020},   // left collar
      {-0.080, 0.120, -0.020},  // right collar
      {0.000, 0.090, 0.050},    // head
      {0.120, 0.040, -0.010},   // left shoulder
      {-0.120, 0.040, -0.010},  // right shoulder
      {0.260, -0.010, -0.020},  // left elbow
      {-0.260, -0.010, -0.020}, // right elbow
      {0.250, 0.010, 0.000},    // left wrist
      {-0.250, 0.010, 0.000},   // right wrist
  };
  return bones;
}

/// Joint tree with rest-pose bone vectors. Immutable once built.
class Skeleton {
 public:
  /// General constructor for any rooted, topologically ordered tree.
  static Skeleton from_tree(std::vector<int> parents, std::vector<Vec3> bones,
                            std::vector<int> measured) {
    const int n = static_cast<int>(parents.size());
    require(n >= 1, "skeleton needs at least one joint");
    require(static_cast<int>(bones.size()) == n, "bone count must match parent count");

    int roots = 0;
    for (int j = 0; j < n; ++j) {
      const int p = parents[j];
      if (p < 0) {
        ++roots;
        continue;
      }
      if (p == j) {
        throw ValidationError("cycle detected: joint " + std::to_string(j) + " is its own parent");
      }
      if (p >= n) {
        throw ValidationError("parent index out of range at joint " + std::to_string(j));
      }
    }
    if (roots > 1) {
      throw ValidationError("multiple roots");
    }
    if (roots == 0) {
      throw ValidationError("cycle detected: no root joint");
    }
    for (int j = 0; j < n; ++j) {
      int steps = 0;
      for (int k = j; parents[k] >= 0; k = parents[k]) {
        if (++steps > n) {
          throw ValidationError("cycle detected at joint " + std::to_string(j));
        }
      }
    }
    if (parents[0] >= 0) {
      throw ValidationError("joint 0 must be the root");
    }
    for (int j = 1; j < n; ++j) {
      if (parents[j] >= j) {
        throw ValidationError("parent index >= child index at joint " + std::to_string(j));
      }
    }
    if (!bones[0].isZero(0.0)) {
      throw ValidationError("root bone vector must be zero");
    }
    for (int m : measured) {
      if (m < 0 || m >= n) {
        throw ValidationError("measured joint " + std::to_string(m) + " not in tree");
      }
    }
    for (const Vec3& b : bones) {
      require(b.allFinite(), "bone vectors must be finite");
    }
    Skeleton s;
    s.parents_ = std::move(parents);
    s.bones_ = std::move(bones);
    s.measured_ = std::move(measured);
    return s;
  }

  int joint_count() const { return static_cast<int>(parents_.size()); }
  const std::vector<int>& parents() const { return parents_; }
  int parent(int j) const { return parents_.at(j); }
  const std::vector<Vec3>& bones() const { return bones_; }
  const Vec3& bone(int j) const { return bones_.at(j); }
  const std::vector<int>& measured() const { return measured_; }

  /// Joints from the root down to and including `j`.
  std::vector<int> chain(int j) const {
    require(j >= 0 && j < joint_count(), "joint index out of range");
    std::vector<int> out;
    for (int k = j; k >= 0; k = parents_[k]) {
      out.push_back(k);
    }
    return {out.rbegin(), out.rend()};
  }

  bool operator==(const Skeleton&) const = default;

 private:
  Skeleton() = default;

  std::vector<int> parents_;
  std::vector<Vec3> bones_;
  std::vector<int> measured_;
};

/// Validated 22-joint body. Rejects anything but a topologically ordered single tree.
inline Skeleton build_skeleton(std::vector<int> parents, std::vector<Vec3> bones,
                               std::vector<int> measured = {kMeasuredJoints.begin(),
                                                            kMeasuredJoints.end()}) {
  require(parents.size() == static_cast<std::size_t>(kJointCount), "parents must have 22 entries");
  require(bones.size() == static_cast<std::size_t>(kJointCount), "bones must have 22 entries");
  return Skeleton::from_tree(std::move(parents), std::move(bones), std::move(measured));
}

inline Skeleton default_skeleton() { return build_skeleton(smpl_parents(), default_bone_table()); }

/// l_j = l_{p_j} + R_{p_j} b_j in topological order, with l_root = root_translation.
inline std::vector<Vec3> forward_kinematics(const Skeleton& skeleton,
                                            std::span<const Mat3> rotations,
                                            const Vec3& root_translation) {
  const int n = skeleton.joint_count();
  require(static_cast<int>(rotations.size()) == n, "one rotation per joint required");
  std::vector<Vec3> locations(n);
  locations[0] = root_translation;
  for (int j = 1; j < n; ++j) {
    const int p = skeleton.parent(j);
    locations[j] = locations[p] + rotations[p] * skeleton.bone(j);
  }
  return locations;
}

inline Skeleton scale_skeleton(const Skeleton& skeleton, std::span<const double> factors) {
  require(static_cast<int>(factors.size()) == skeleton.joint_count(),
          "one scale factor per bone required");
  std::vector<Vec3> bones = skeleton.bones();
  for (std::size_t j = 0; j < bones.size(); ++j) {
    if (!(factors[j] > 0.0)) {
      throw ValidationError("scale factor must be positive at bone " + std::to_string(j));
    }
    bones[j] *= factors[j];
  }
  return Skeleton::from_tree(skeleton.parents(), std::move(bones), skeleton.measured());
}

/// Translation that drags the zero-rooted pose until the head meets the measured head.
inline Vec3 recover_root_translation(const Skeleton& skeleton, std::span<const Mat3> rotations,
                                     const Vec3& measured_head, int head_joint = joint::kHead) {
  const auto zero_rooted = forward_kinematics(skeleton, rotations, Vec3::Zero());
  return measured_head - zero_rooted.at(head_joint);
}

/// Global 6DoF rotations and root translations of a sequence of frames.
struct PoseSequence {
  PoseState rotations;
  RowMatrixX3 root_translation;

  PoseSequence() = default;
  explicit PoseSequence(int frames)
      : rotations(PoseState::Zero(frames, kFrameStateSize)),
        root_translation(RowMatrixX3::Zero(frames, 3)) {}

  int frames() const { return static_cast<int>(rotations.rows()); }

  SixDof sixdof(int frame, int j) const {
    return rotations.row(frame).segment<kSixDofSize>(kSixDofSize * j).transpose();
  }
  void set_sixdof(int frame, int j, const SixDof& r) {
    rotations.row(frame).segment<kSixDofSize>(kSixDofSize * j) = r.transpose();
  }
  Vec3 root(int frame) const { return root_translation.row(frame).transpose(); }

  RotationSet rotation_matrices(int frame) const {
    return batch_from_sixdof(FrameState(rotations.row(frame)));
  }

  /// True when every joint's 6DoF is an orthonormal pair within `tolerance`.
  bool is_valid(double tolerance = 1e-9) const {
    if (rotations.rows() != root_translation.rows()) {
      return false;
    }
    for (int f = 0; f < frames(); ++f) {
      for (int j = 0; j < kJointCount; ++j) {
        const SixDof r = sixdof(f, j);
        if (!r.allFinite() || orthonormal_pair_deviation(r) > tolerance) {
          return false;
        }
      }
    }
    return true;
  }

  std::vector<Vec3> joint_locations(const Skeleton& skeleton, int frame) const {
    return forward_kinematics(skeleton, rotation_matrices(frame), root(frame));
  }
};

}  // namespace inpose
