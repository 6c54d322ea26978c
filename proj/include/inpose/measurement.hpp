// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "inpose/common.hpp"
#include "inpose/rot6d.hpp"
#include "inpose/skeleton.hpp"

namespace inpose {

/// Noisy per-frame locations and 6DoF rotations of the sensed joints (head, left wrist,
/// right wrist). Locations are in meters; columns are [head xyz, lwrist xyz, rwrist xyz].
struct MeasurementSet {
  RowMatrixX9 locations;
  RowMatrixX18 rotations;
  double sigma_l = 0.0;
  double sigma_r = 0.0;

  MeasurementSet() = default;
  explicit MeasurementSet(int frames)
      : locations(RowMatrixX9::Zero(frames, 9)), rotations(RowMatrixX18::Zero(frames, 18)) {}

  int frames() const { return static_cast<int>(locations.rows()); }

  Vec3 location(int frame, int k) const {
    return locations.row(frame).segment<3>(3 * k).transpose();
  }
  SixDof rotation(int frame, int k) const {
    return rotations.row(frame).segment<6>(6 * k).transpose();
  }

  /// Rows [begin, begin + count).
  MeasurementSet slice(int begin, int count) const {
    MeasurementSet out;
    out.locations = locations.middleRows(begin, count);
    out.rotations = rotations.middleRows(begin, count);
    out.sigma_l = sigma_l;
    out.sigma_r = sigma_r;
    return out;
  }

  bool operator==(const MeasurementSet& other) const {
    return sigma_l == other.sigma_l && sigma_r == other.sigma_r &&
           locations.rows() == other.locations.rows() && locations == other.locations &&
           rotations == other.rotations;
  }
};

/// Simulates the three sensors: FK locations plus sigma_l Gaussian noise, ground-truth 6DoF
/// plus sigma_r Gaussian noise added in 6DoF coordinates. Deterministic in `seed`.
inline MeasurementSet extract_measurements(const PoseSequence& poses, const Skeleton& skeleton,
                                           double sigma_l, double sigma_r, std::uint64_t seed) {
  require(sigma_l >= 0.0 && sigma_r >= 0.0, "noise levels must be non-negative");
  require(static_cast<int>(skeleton.measured().size()) == kMeasuredCount,
          "skeleton must declare three measured joints");
  const int frames = poses.frames();
  MeasurementSet out(frames);
  out.sigma_l = sigma_l;
  out.sigma_r = sigma_r;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int f = 0; f < frames; ++f) {
    const auto locations = poses.joint_locations(skeleton, f);
    for (int k = 0; k < kMeasuredCount; ++k) {
      const int j = skeleton.measured()[k];
      for (int a = 0; a < 3; ++a) {
        out.locations(f, 3 * k + a) = locations[j][a] + sigma_l * normal(rng);
      }
      const SixDof r = poses.sixdof(f, j);
      for (int a = 0; a < 6; ++a) {
        out.rotations(f, 6 * k + a) = r[a] + sigma_r * normal(rng);
      }
    }
  }
  return out;
}

/// I3 (x) kappa^T: a 3 x 3n block-diagonal matrix of kappa^T rows.
inline Eigen::MatrixXd kron_identity3(const Eigen::VectorXd& kappa) {
  const Eigen::Index n = kappa.size();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(3, 3 * n);
  for (int i = 0; i < 3; ++i) {
    out.block(i, i * n, 1, n) = kappa.transpose();
  }
  return out;
}

/// Row-major vectorization: rows of `m` concatenated.
inline Eigen::VectorXd vec_row_major(const Eigen::MatrixXd& m) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  return Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size());
}

/// One sensed joint in Kronecker form: l_j = C kappa = (I3 (x) kappa^T) vec_row(C), where
/// C = [R_{a_0} ... R_{a_{k-1}}] holds the rotations of j's proper ancestors.
struct ChainOperator {
  int joint = 0;
  std::vector<int> rotation_joints;  // a_0 (root) ... a_{k-1} (parent of j)
  Eigen::VectorXd kappa;             // b_{a_1} ... b_{a_k}, stacked

  Eigen::MatrixXd kronecker() const { return kron_identity3(kappa); }

  /// C = [R_{a_0} ... R_{a_{k-1}}] gathered from a per-joint rotation array.
  Eigen::MatrixXd gather(std::span<const Mat3> rotations) const {
    Eigen::MatrixXd c(3, 3 * rotation_joints.size());
    for (std::size_t k = 0; k < rotation_joints.size(); ++k) {
      c.block<3, 3>(0, 3 * k) = rotations[rotation_joints[k]];
    }
    return c;
  }
};

/// The linear map from per-joint rotation-matrix entries to sensed-joint locations with the
/// root pinned at the origin. Columns follow the state layout: joint-major, and within a
/// joint column-major vec(R) (the same order as the 6DoF entries followed by the third column).
class LinearOperatorA {
 public:
  enum class Form { kAbsolute, kDifferential };

  LinearOperatorA(Eigen::MatrixXd matrix, std::vector<ChainOperator> chains, Form form)
      : matrix_(std::move(matrix)), chains_(std::move(chains)), form_(form) {
    const int joints = static_cast<int>(matrix_.cols() / 9);
    for (int j = 0; j < joints; ++j) {
      if (!matrix_.middleCols(9 * j, 9).isZero(0.0)) {
        support_.push_back(j);
      }
    }
  }

  const Eigen::MatrixXd& matrix() const { return matrix_; }
  const std::vector<ChainOperator>& chains() const { return chains_; }
  Form form() const { return form_; }
  int rows() const { return static_cast<int>(matrix_.rows()); }
  int joint_count() const { return static_cast<int>(matrix_.cols() / 9); }

  /// Joints whose rotations influence the output.
  const std::vector<int>& support() const { return support_; }

  Eigen::VectorXd apply(std::span<const Mat3> rotations) const {
    require(static_cast<int>(rotations.size()) == joint_count(), "one rotation per joint required");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(rows());
    for (int j : support_) {
      out.noalias() += matrix_.middleCols(9 * j, 9) * vec_column_major(rotations[j]);
    }
    return out;
  }

  /// Rows (A_k - A_ref) for every sensed joint k after the first, the reference.
  LinearOperatorA differential() const {
    require(form_ == Form::kAbsolute, "operator is already differential");
    const int sensed = rows() / 3;
    require(sensed >= 2, "differential form needs at least two sensed joints");
    Eigen::MatrixXd diff(3 * (sensed - 1), matrix_.cols());
    for (int k = 1; k < sensed; ++k) {
      diff.middleRows(3 * (k - 1), 3) = matrix_.middleRows(3 * k, 3) - matrix_.middleRows(0, 3);
    }
    return LinearOperatorA(std::move(diff), chains_, Form::kDifferential);
  }

 private:
  Eigen::MatrixXd matrix_;
  std::vector<ChainOperator> chains_;
  Form form_;
  std::vector<int> support_;
};

inline ChainOperator build_chain_operator(const Skeleton& skeleton, int joint) {
  if (joint < 0 || joint >= skeleton.joint_count()) {
    throw ValidationError("measured joint " + std::to_string(joint) + " not in tree");
  }
  const std::vector<int> chain = skeleton.chain(joint);
  ChainOperator op;
  op.joint = joint;
  op.rotation_joints.assign(chain.begin(), chain.end() - 1);
  op.kappa = Eigen::VectorXd::Zero(3 * op.rotation_joints.size());
  for (std::size_t k = 1; k < chain.size(); ++k) {
    op.kappa.segment<3>(3 * (k - 1)) = skeleton.bone(chain[k]);
  }
  return op;
}

inline LinearOperatorA build_A(const Skeleton& skeleton, std::span<const int> measured) {
  const int joints = skeleton.joint_count();
  const int sensed = static_cast<int>(measured.size());
  Eigen::MatrixXd matrix = Eigen::MatrixXd::Zero(3 * sensed, 9 * joints);
  std::vector<ChainOperator> chains;
  for (int k = 0; k < sensed; ++k) {
    ChainOperator op = build_chain_operator(skeleton, measured[k]);
    for (std::size_t c = 0; c < op.rotation_joints.size(); ++c) {
      const int a = op.rotation_joints[c];
      const Vec3 bone = op.kappa.segment<3>(3 * c);
      // l[i] += sum_col R_a(i, col) * bone[col]; R_a(i, col) sits at 9a + 3col + i.
      for (int i = 0; i < 3; ++i) {
        for (int col = 0; col < 3; ++col) {
          matrix(3 * k + i, 9 * a + 3 * col + i) += bone[col];
        }
      }
    }
    chains.push_back(std::move(op));
  }
  return LinearOperatorA(std::move(matrix), std::move(chains), LinearOperatorA::Form::kAbsolute);
}

inline LinearOperatorA build_A(const Skeleton& skeleton) {
  return build_A(skeleton, skeleton.measured());
}

/// A o D: predicted sensed-joint locations (root at origin) from one frame of 6DoF vectors.
/// Only joints on the sensed chains are converted, so others may be arbitrary.
inline Eigen::VectorXd apply_measurement_operator(const LinearOperatorA& a,
                                                  std::span<const double> frame_sixdof) {
  require(static_cast<int>(frame_sixdof.size()) == kSixDofSize * a.joint_count(),
          "6DoF frame size does not match operator");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(a.rows());
  for (int j : a.support()) {
    const SixDof r = Eigen::Map<const SixDof>(frame_sixdof.data() + kSixDofSize * j);
    Mat3 rotation;
    try {
      rotation = from_sixdof(r);
    } catch (const DegenerateRotationError& e) {
      throw DegenerateRotationError(std::string(e.what()) + " at joint " + std::to_string(j), j);
    }
    out.noalias() += a.matrix().middleCols(9 * j, 9) * vec_column_major(rotation);
  }
  return out;
}

inline Eigen::VectorXd apply_measurement_operator(const LinearOperatorA& a,
                                                  const FrameState& frame) {
  return apply_measurement_operator(a, std::span<const double>(frame.data(), frame.size()));
}

/// Grid (2^-32 m) onto which locations are snapped before differencing. On the grid,
/// adding a common translation and subtracting are both exact, so the root cancels bit-exactly.
inline constexpr int kLocationGridBits = 32;

inline double snap_location(double x) {
  return std::ldexp(std::nearbyint(std::ldexp(x, kLocationGridBits)), -kLocationGridBits);
}

/// (l_lwrist - l_head, l_rwrist - l_head) for one frame's [head, lwrist, rwrist] locations.
inline Eigen::Matrix<double, 6, 1> differential_transform(const Eigen::Matrix<double, 9, 1>& l) {
  Eigen::Matrix<double, 9, 1> s = l.unaryExpr([](double x) { return snap_location(x); });
  Eigen::Matrix<double, 6, 1> out;
  out << s.segment<3>(3) - s.segment<3>(0), s.segment<3>(6) - s.segment<3>(0);
  return out;
}

/// Per-frame differential locations of a measurement set (frames x 6).
inline Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor> differential_transform(
    const MeasurementSet& m) {
  Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor> out(m.frames(), 6);
  for (int f = 0; f < m.frames(); ++f) {
    out.row(f) = differential_transform(Eigen::Matrix<double, 9, 1>(m.locations.row(f).transpose()))
                     .transpose();
  }
  return out;
}

}  // namespace inpose
