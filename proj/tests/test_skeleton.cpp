// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "inpose/skeleton.hpp"
#include "inpose/uncertainty.hpp"

namespace inpose {
namespace {

void expect_rejected(std::vector<int> parents, const std::string& fragment,
                     std::vector<int> measured = {}) {
  std::vector<Vec3> bones(parents.size(), Vec3(0.1, 0.0, 0.0));
  bones[0].setZero();
  try {
    Skeleton::from_tree(parents, bones, measured);
    FAIL() << "expected rejection containing '" << fragment << "'";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Skeleton, DefaultBodyIsValid) {
  const Skeleton s = default_skeleton();
  EXPECT_EQ(s.joint_count(), 22);
  EXPECT_EQ(s.measured(), (std::vector<int>{15, 20, 21}));
  EXPECT_EQ(s.chain(21), (std::vector<int>{0, 3, 6, 9, 14, 17, 19, 21}));
  EXPECT_EQ(s.chain(15), (std::vector<int>{0, 3, 6, 9, 12, 15}));
}

TEST(Skeleton, RejectsMalformedTrees) {
  expect_rejected({-1, 1, 0}, "cycle");
  expect_rejected({1, 2, 0}, "cycle");
  expect_rejected({-1, -1, 0}, "multiple roots");
  expect_rejected({1, -1, 1}, "joint 0 must be the root");
  expect_rejected({-1, 2, 0}, "parent index >= child index");
  expect_rejected({-1, 0, 1}, "not in tree", {5});
}

TEST(Skeleton, RejectsNonZeroRootBone) {
  std::vector<Vec3> bones(3, Vec3(0.1, 0, 0));
  EXPECT_THROW(Skeleton::from_tree({-1, 0, 1}, bones, {}), ValidationError);
}

TEST(Skeleton, BuildSkeletonEnforces22Joints) {
  EXPECT_THROW(build_skeleton({-1, 0}, {Vec3::Zero(), Vec3::Ones()}), ValidationError);
}

/// Recursive FK straight from the definition, as an independent oracle.
Vec3 recursive_location(const Skeleton& s, const RotationSet& rotations, const Vec3& root, int j) {
  if (j == 0) return root;
  const int p = s.parent(j);
  return recursive_location(s, rotations, root, p) + rotations[p] * s.bone(j);
}

TEST(Skeleton, ForwardKinematicsMatchesRecursiveOracle) {
  std::mt19937_64 rng(2);
  const Skeleton s = default_skeleton();
  for (int trial = 0; trial < 50; ++trial) {
    RotationSet rotations(kJointCount);
    for (auto& r : rotations) r = random_rotation(rng);
    const Vec3 root(0.3, 1.0, -2.0);
    const auto fk = forward_kinematics(s, rotations, root);
    for (int j = 0; j < kJointCount; ++j) {
      EXPECT_LT((fk[j] - recursive_location(s, rotations, root, j)).norm(), 1e-14);
    }
  }
}

TEST(Skeleton, TPoseUsesRestOffsets) {
  const Skeleton s = default_skeleton();
  const RotationSet identity(kJointCount, Mat3::Identity());
  const auto fk = forward_kinematics(s, identity, Vec3::Zero());
  EXPECT_NEAR(fk[joint::kLeftWrist].x(), 0.08 + 0.12 + 0.26 + 0.25, 1e-12);
  EXPECT_GT(fk[joint::kHead].y(), 0.5);
}

TEST(Skeleton, BoneLengthsScaleAndStayPositive) {
  const Skeleton s = default_skeleton();
  std::vector<double> factors(kJointCount, 2.0);
  const Skeleton doubled = scale_skeleton(s, factors);
  for (int j = 0; j < kJointCount; ++j) {
    EXPECT_TRUE(doubled.bone(j).isApprox(2.0 * s.bone(j)));
  }
  factors[4] = 0.0;
  EXPECT_THROW(scale_skeleton(s, factors), ValidationError);
}

TEST(Skeleton, RootRecoveryPutsHeadOnMeasurement) {
  std::mt19937_64 rng(8);
  const Skeleton s = default_skeleton();
  RotationSet rotations(kJointCount);
  for (auto& r : rotations) r = random_rotation(rng);
  const Vec3 root(1.0, 2.0, 3.0);
  const Vec3 head = forward_kinematics(s, rotations, root)[joint::kHead];
  EXPECT_LT((recover_root_translation(s, rotations, head) - root).norm(), 1e-14);
}

TEST(Skeleton, PoseSequenceValidity) {
  PoseSequence p(3);
  for (int f = 0; f < 3; ++f)
    for (int j = 0; j < kJointCount; ++j) p.set_sixdof(f, j, to_sixdof(Mat3::Identity()));
  EXPECT_TRUE(p.is_valid());
  p.rotations(1, 0) = 1.1;
  EXPECT_FALSE(p.is_valid());
}

}  // namespace
}  // namespace inpose
