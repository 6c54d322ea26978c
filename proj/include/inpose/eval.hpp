// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "inpose/common.hpp"
#include "inpose/rot6d.hpp"
#include "inpose/skeleton.hpp"

namespace inpose {

inline constexpr double kCentimetersPerMeter = 100.0;

/// Pelvis, hips, knees, ankles and feet. Everything else counts as upper body.
inline constexpr std::array<int, 9> kLowerBodyJoints = {0, 1, 2, 4, 5, 7, 8, 10, 11};

inline const std::vector<int>& lower_body_joints() {
  static const std::vector<int> joints(kLowerBodyJoints.begin(), kLowerBodyJoints.end());
  return joints;
}

inline const std::vector<int>& upper_body_joints() {
  static const std::vector<int> joints = [] {
    std::vector<int> out;
    for (int j = 0; j < kJointCount; ++j) {
      if (std::find(kLowerBodyJoints.begin(), kLowerBodyJoints.end(), j) == kLowerBodyJoints.end()) {
        out.push_back(j);
      }
    }
    return out;
  }();
  return joints;
}

/// A pose sequence with the body it is evaluated on.
struct Posed {
  const PoseSequence& poses;
  const Skeleton& skeleton;
};

namespace detail {

inline void require_same_length(const PoseSequence& a, const PoseSequence& b) {
  if (a.frames() != b.frames()) {
    throw ValidationError("frame mismatch: " + std::to_string(a.frames()) + " vs " +
                          std::to_string(b.frames()));
  }
  require(a.frames() >= 1, "empty sequence");
}

/// Per-joint location error summed over frames (meters).
inline std::vector<double> joint_error_sums(const Posed& pred, const Posed& truth) {
  require_same_length(pred.poses, truth.poses);
  std::vector<double> sums(kJointCount, 0.0);
  for (int f = 0; f < pred.poses.frames(); ++f) {
    const auto lp = pred.poses.joint_locations(pred.skeleton, f);
    const auto lt = truth.poses.joint_locations(truth.skeleton, f);
    for (int j = 0; j < kJointCount; ++j) {
      sums[j] += (lp[j] - lt[j]).norm();
    }
  }
  return sums;
}

inline double mean_over(const std::vector<double>& sums, const std::vector<int>& joints, int frames) {
  double total = 0.0;
  for (int j : joints) {
    total += sums[j];
  }
  return kCentimetersPerMeter * total / (static_cast<double>(joints.size()) * frames);
}

}  // namespace detail

/// Mean per-joint position error in cm, both sides through FK with their own roots.
inline double mpjpe(const Posed& pred, const Posed& truth) {
  const auto sums = detail::joint_error_sums(pred, truth);
  std::vector<int> all(kJointCount);
  std::iota(all.begin(), all.end(), 0);
  return detail::mean_over(sums, all, pred.poses.frames());
}

/// Mean geodesic angle between global rotations, degrees.
inline double mpjre(const PoseSequence& pred, const PoseSequence& truth) {
  detail::require_same_length(pred, truth);
  double total = 0.0;
  for (int f = 0; f < pred.frames(); ++f) {
    const auto rp = pred.rotation_matrices(f);
    const auto rt = truth.rotation_matrices(f);
    for (int j = 0; j < kJointCount; ++j) {
      total += geodesic_angle(rp[j], rt[j]);
    }
  }
  return total / (static_cast<double>(kJointCount) * pred.frames());
}

struct UpperLower {
  double upe = 0.0;
  double lpe = 0.0;
};

inline UpperLower upe_lpe(const Posed& pred, const Posed& truth) {
  const auto sums = detail::joint_error_sums(pred, truth);
  const int frames = pred.poses.frames();
  return {detail::mean_over(sums, upper_body_joints(), frames),
          detail::mean_over(sums, lower_body_joints(), frames)};
}

inline double scaled_mpjpe(const Posed& pred, const Posed& truth, double scale) {
  if (!(scale > 0.0)) {
    throw ValidationError("scale must be positive");
  }
  return mpjpe(pred, truth) / scale;
}

/// Mean frame-to-frame joint displacement, cm/frame.
inline double jitter(const Posed& pred) {
  const int frames = pred.poses.frames();
  if (frames < 2) {
    throw ValidationError("jitter needs at least two frames");
  }
  double total = 0.0;
  auto prev = pred.poses.joint_locations(pred.skeleton, 0);
  for (int f = 1; f < frames; ++f) {
    auto cur = pred.poses.joint_locations(pred.skeleton, f);
    for (int j = 0; j < kJointCount; ++j) {
      total += (cur[j] - prev[j]).norm();
    }
    prev = std::move(cur);
  }
  return kCentimetersPerMeter * total / (static_cast<double>(kJointCount) * (frames - 1));
}

struct CellMetrics {
  std::string name;
  std::string preset;
  double scale = 1.0;
  double sigma_l = 0.0;
  double sigma_r = 0.0;
  double mpjpe = 0.0;
  double scaled_mpjpe = 0.0;
  double mpjre = 0.0;
  double upe = 0.0;
  double lpe = 0.0;
  double jitter = 0.0;
};

inline CellMetrics evaluate_cell(const Posed& pred, const Posed& truth, double scale) {
  CellMetrics m;
  m.scale = scale;
  m.mpjpe = mpjpe(pred, truth);
  m.scaled_mpjpe = m.mpjpe / scale;
  m.mpjre = mpjre(pred.poses, truth.poses);
  const UpperLower ul = upe_lpe(pred, truth);
  m.upe = ul.upe;
  m.lpe = ul.lpe;
  m.jitter = pred.poses.frames() >= 2 ? jitter(pred) : 0.0;
  return m;
}

struct EvalReport {
  std::vector<CellMetrics> cells;

  CellMetrics mean() const {
    CellMetrics out;
    out.name = "mean";
    if (cells.empty()) {
      return out;
    }
    for (const auto& c : cells) {
      out.mpjpe += c.mpjpe;
      out.scaled_mpjpe += c.scaled_mpjpe;
      out.mpjre += c.mpjre;
      out.upe += c.upe;
      out.lpe += c.lpe;
      out.jitter += c.jitter;
    }
    const double n = static_cast<double>(cells.size());
    out.mpjpe /= n;
    out.scaled_mpjpe /= n;
    out.mpjre /= n;
    out.upe /= n;
    out.lpe /= n;
    out.jitter /= n;
    return out;
  }

  nlohmann::json to_json() const {
    auto cell_json = [](const CellMetrics& c) {
      return nlohmann::json{{"name", c.name},   {"preset", c.preset},   {"scale", c.scale},
                            {"sigma_l", c.sigma_l}, {"sigma_r", c.sigma_r}, {"mpjpe_cm", c.mpjpe},
                            {"scaled_mpjpe_cm", c.scaled_mpjpe},        {"mpjre_deg", c.mpjre},
                            {"upe_cm", c.upe},  {"lpe_cm", c.lpe},      {"jitter_cm_per_frame", c.jitter}};
    };
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : cells) {
      rows.push_back(cell_json(c));
    }
    return {{"version", 1},
            {"lower_body_joints", lower_body_joints()},
            {"upper_body_joints", upper_body_joints()},
            {"cells", rows},
            {"mean", cell_json(mean())}};
  }

  std::string to_csv() const {
    std::ostringstream s;
    s.precision(10);
    s << "name,preset,scale,sigma_l,sigma_r,mpjpe_cm,scaled_mpjpe_cm,mpjre_deg,upe_cm,lpe_cm,"
         "jitter_cm_per_frame\n";
    for (const auto& c : cells) {
      s << c.name << ',' << c.preset << ',' << c.scale << ',' << c.sigma_l << ',' << c.sigma_r
        << ',' << c.mpjpe << ',' << c.scaled_mpjpe << ',' << c.mpjre << ',' << c.upe << ','
        << c.lpe << ',' << c.jitter << '\n';
    }
    return s.str();
  }
};

}  // namespace inpose
