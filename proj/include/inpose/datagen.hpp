// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "inpose/common.hpp"
#include "inpose/measurement.hpp"
#include "inpose/rot6d.hpp"
#include "inpose/skeleton.hpp"

namespace inpose {

inline constexpr double kFrameRate = 60.0;
inline constexpr double kMaxAmplitude = 2.0;

enum class MotionKind { kWalk, kArmSwing, kSquat, kReach, kIdleSway };

inline const char* motion_kind_name(MotionKind kind) {
  switch (kind) {
    case MotionKind::kWalk: return "walk";
    case MotionKind::kArmSwing: return "arm-swing";
    case MotionKind::kSquat: return "squat";
    case MotionKind::kReach: return "reach";
    case MotionKind::kIdleSway: return "idle-sway";
  }
  return "?";
}

inline MotionKind parse_motion_kind(const std::string& name) {
  for (MotionKind k : {MotionKind::kWalk, MotionKind::kArmSwing, MotionKind::kSquat,
                       MotionKind::kReach, MotionKind::kIdleSway}) {
    if (name == motion_kind_name(k)) {
      return k;
    }
  }
  throw ValidationError("unknown motion kind '" + name + "'");
}

struct MotionSpec {
  MotionKind kind = MotionKind::kWalk;
  int frames = 240;
  double frequency = kFrameRate;  // frames per second
  double amplitude = 1.0;         // 0 freezes the motion; at most kMaxAmplitude
  std::uint64_t seed = 0;

  void validate() const {
    require(frames >= 1, "motion needs at least one frame");
    require(frequency > 0.0 && std::isfinite(frequency), "frame rate must be positive");
    if (!(amplitude >= 0.0 && amplitude <= kMaxAmplitude)) {
      throw ValidationError("amplitude " + std::to_string(amplitude) +
                            " out of safe range [0, " + std::to_string(kMaxAmplitude) + "]");
    }
  }
  bool operator==(const MotionSpec&) const = default;
};

namespace detail {

/// Per-sequence random variation drawn once from the seed.
struct MotionStyle {
  double phase = 0.0;
  double rate = 1.0;     // cycles per second
  double yaw = 0.0;      // facing direction of stationary motions
  double side = 1.0;     // reach arm: +1 left, -1 right
  double jitter[8] = {};  // per-feature amplitude multipliers around 1
};

inline MotionStyle draw_style(const MotionSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MotionStyle s;
  s.phase = 2 * std::numbers::pi * u(rng);
  s.rate = 0.8 + 0.4 * u(rng);
  s.yaw = 2 * std::numbers::pi * u(rng);
  s.side = u(rng) < 0.5 ? 1.0 : -1.0;
  for (double& j : s.jitter) {
    j = 0.8 + 0.4 * u(rng);
  }
  return s;
}

/// Local (parent-relative) rotations for one frame; identity is the rest pose with arms
/// straight out to the sides.
inline std::vector<Mat3> local_pose(const MotionSpec& spec, const MotionStyle& s, double time) {
  using namespace joint;
  const double a = spec.amplitude;
  const double phi = 2 * std::numbers::pi * s.rate * time + s.phase;
  const double sn = std::sin(phi), cs = std::cos(phi);
  std::vector<Mat3> local(kJointCount, Mat3::Identity());

  // Arms hang down at rest.
  local[kLeftShoulder] = rot_z(-1.1);
  local[kRightShoulder] = rot_z(1.1);
  local[kLeftElbow] = rot_y(0.15);
  local[kRightElbow] = rot_y(-0.15);

  switch (spec.kind) {
    case MotionKind::kWalk: {
      const double hip = 0.35 * a * s.jitter[0];
      local[kLeftHip] = rot_x(-hip * sn);
      local[kRightHip] = rot_x(hip * sn);
      const double knee = 0.45 * a * s.jitter[1];
      local[kLeftKnee] = rot_x(knee * 0.5 * (1 - std::cos(phi - 1.0)));
      local[kRightKnee] = rot_x(knee * 0.5 * (1 + std::cos(phi - 1.0)));
      local[kLeftAnkle] = rot_x(0.1 * a * sn);
      local[kRightAnkle] = rot_x(-0.1 * a * sn);
      const double arm = 0.3 * a * s.jitter[2];
      local[kLeftShoulder] = rot_x(arm * sn) * local[kLeftShoulder];
      local[kRightShoulder] = rot_x(-arm * sn) * local[kRightShoulder];
      local[kSpine1] = rot_y(0.05 * a * sn);
      local[kSpine3] = rot_y(-0.08 * a * sn);
      local[kPelvis] = rot_y(std::numbers::pi / 2 + 0.04 * a * cs);
      break;
    }
    case MotionKind::kArmSwing: {
      const double arm = 0.7 * a * s.jitter[0];
      local[kLeftShoulder] = rot_x(-arm * sn) * rot_z(0.3 * a * s.jitter[1] * cs) *
                             local[kLeftShoulder];
      local[kRightShoulder] = rot_x(-arm * std::sin(phi + 0.6 * s.jitter[2])) *
                              rot_z(-0.3 * a * s.jitter[3] * cs) * local[kRightShoulder];
      local[kLeftElbow] = rot_y(0.15 + 0.5 * a * (1 + sn) * 0.5);
      local[kRightElbow] = rot_y(-0.15 - 0.5 * a * (1 + cs) * 0.5);
      local[kSpine2] = rot_y(0.1 * a * sn);
      local[kPelvis] = rot_y(s.yaw);
      break;
    }
    case MotionKind::kSquat: {
      const double depth = 0.55 * a * s.jitter[0] * 0.5 * (1 - cs);
      local[kLeftHip] = rot_x(-depth);
      local[kRightHip] = rot_x(-depth);
      local[kLeftKnee] = rot_x(2 * depth);
      local[kRightKnee] = rot_x(2 * depth);
      local[kLeftAnkle] = rot_x(-depth);
      local[kRightAnkle] = rot_x(-depth);
      local[kSpine1] = rot_x(0.4 * depth);
      const double arm = 0.6 * depth * s.jitter[1];
      local[kLeftShoulder] = rot_x(-arm) * local[kLeftShoulder];
      local[kRightShoulder] = rot_x(-arm) * local[kRightShoulder];
      local[kPelvis] = rot_y(s.yaw);
      break;
    }
    case MotionKind::kReach: {
      const double lift = 0.6 * a * s.jitter[0] * 0.5 * (1 - cs);
      const int shoulder = s.side > 0 ? kLeftShoulder : kRightShoulder;
      const int elbow = s.side > 0 ? kLeftElbow : kRightElbow;
      local[shoulder] = rot_x(-lift) * local[shoulder];
      local[elbow] = rot_y(s.side * 0.15 * (1 - 0.5 * lift));
      local[kSpine2] = rot_x(0.15 * lift) * rot_y(0.1 * s.side * lift);
      local[kNeck] = rot_x(0.1 * lift);
      local[kPelvis] = rot_y(s.yaw);
      break;
    }
    case MotionKind::kIdleSway: {
      const double sway = 0.06 * a * s.jitter[0];
      local[kSpine1] = rot_z(sway * sn);
      local[kSpine3] = rot_x(0.5 * sway * cs);
      local[kHead] = rot_y(2 * sway * std::sin(0.5 * phi));
      local[kLeftShoulder] = rot_z(0.5 * sway * cs) * local[kLeftShoulder];
      local[kRightShoulder] = rot_z(0.5 * sway * cs) * local[kRightShoulder];
      local[kPelvis] = rot_y(s.yaw);
      break;
    }
  }
  return local;
}

}  // namespace detail

/// Smooth sinusoid-driven motion. Walks advance along +x with feet on the ground; stationary
/// motions keep the ankle midpoint fixed over the origin with the lowest foot at y = 0.
inline PoseSequence generate_motion(const MotionSpec& spec, const Skeleton& skeleton) {
  spec.validate();
  require(skeleton.joint_count() == kJointCount, "motion synthesis needs the 22-joint body");
  const detail::MotionStyle style = detail::draw_style(spec);
  const auto& parents = skeleton.parents();
  const double speed = 0.6 + 0.4 * spec.amplitude;  // m/s

  PoseSequence out(spec.frames);
  for (int f = 0; f < spec.frames; ++f) {
    const double time = f / spec.frequency;
    const auto local = detail::local_pose(spec, style, time);
    RotationSet global(kJointCount);
    for (int j = 0; j < kJointCount; ++j) {
      global[j] = parents[j] < 0 ? local[j] : Mat3(global[parents[j]] * local[j]);
      out.set_sixdof(f, j, to_sixdof(global[j]));
    }
    const auto rooted = forward_kinematics(skeleton, global, Vec3::Zero());
    double lowest = 0.0;
    for (int j : {joint::kLeftAnkle, joint::kRightAnkle, joint::kLeftFoot, joint::kRightFoot}) {
      lowest = std::min(lowest, rooted[j].y());
    }
    Vec3 root(0.0, -lowest, 0.0);
    if (spec.kind == MotionKind::kWalk) {
      root.x() = speed * time;
    } else {
      const Vec3 mid = 0.5 * (rooted[joint::kLeftAnkle] + rooted[joint::kRightAnkle]);
      root.x() = -mid.x();
      root.z() = -mid.z();
    }
    out.root_translation.row(f) = root.transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Body-variation presets

/// Bone groups for body-variation presets. Bones are indexed by their child joint.
inline const std::vector<int>& arm_bones() {
  static const std::vector<int> bones = {16, 17, 18, 19, 20, 21};
  return bones;
}
inline const std::vector<int>& torso_bones() {
  static const std::vector<int> bones = {3, 6, 9, 12, 13, 14, 15};
  return bones;
}
inline const std::vector<int>& leg_bones() {
  static const std::vector<int> bones = {1, 2, 4, 5, 7, 8, 10, 11};
  return bones;
}

struct BodyPreset {
  std::string name;
  double arms = 1.0;
  double torso = 1.0;
  double legs = 1.0;
  bool preserve_root = false;  // keep l_1; only legal when the legs are untouched

  /// Nominal body scale used to normalize position errors.
  double nominal_scale() const { return preserve_root ? 1.0 : legs; }

  void validate() const {
    require(arms > 0.0 && torso > 0.0 && legs > 0.0, "preset scale factors must be positive");
    if (preserve_root && legs != 1.0) {
      throw ValidationError("preset '" + name +
                            "' alters the lower body while claiming to preserve l_1");
    }
    if (!preserve_root) {
      require(arms == legs && torso == legs, "non-uniform preset must preserve l_1");
    }
  }
};

/// Names: "uniform-<s>", "upper-<s>", "arms-<s>", "arms-<s>-torso-<t>", "default".
inline BodyPreset parse_preset(const std::string& name) {
  auto number = [&](const std::string& text) {
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) {
        throw std::invalid_argument(text);
      }
      return v;
    } catch (const std::exception&) {
      throw ValidationError("malformed preset '" + name + "'");
    }
  };
  BodyPreset p;
  p.name = name;
  if (name == "default") {
  } else if (name.rfind("uniform-", 0) == 0) {
    const double s = number(name.substr(8));
    p.arms = p.torso = p.legs = s;
  } else if (name.rfind("upper-", 0) == 0) {
    const double s = number(name.substr(6));
    p.arms = p.torso = s;
    p.preserve_root = true;
  } else if (name.rfind("arms-", 0) == 0) {
    const std::string rest = name.substr(5);
    const auto torso = rest.find("-torso-");
    p.preserve_root = true;
    if (torso == std::string::npos) {
      p.arms = number(rest);
    } else {
      p.arms = number(rest.substr(0, torso));
      p.torso = number(rest.substr(torso + 7));
    }
  } else {
    throw ValidationError("unknown preset '" + name + "'");
  }
  p.validate();
  return p;
}

/// The five upper-body variations of the body-shape benchmark.
inline std::vector<std::string> table_presets() {
  return {"upper-1.4", "arms-1.4-torso-0.7", "upper-0.7", "arms-1.4", "arms-0.7"};
}

inline Skeleton apply_preset(const Skeleton& skeleton, const BodyPreset& preset) {
  preset.validate();
  require(skeleton.joint_count() == kJointCount, "presets are defined on the 22-joint body");
  std::vector<double> factors(kJointCount, 1.0);
  for (int b : arm_bones()) factors[b] = preset.arms;
  for (int b : torso_bones()) factors[b] = preset.torso;
  for (int b : leg_bones()) factors[b] = preset.legs;
  return scale_skeleton(skeleton, factors);
}

struct ScaledTruth {
  PoseSequence poses;
  Skeleton skeleton;
};

/// New skeleton from the preset; rotations copied untouched. Uniform presets scale the root
/// translation with the body, upper-body presets keep it.
inline ScaledTruth scale_ground_truth(const PoseSequence& poses, const Skeleton& skeleton,
                                      const BodyPreset& preset) {
  ScaledTruth out{poses, apply_preset(skeleton, preset)};
  if (!preset.preserve_root) {
    out.poses.root_translation = poses.root_translation * preset.legs;
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Benchmark manifests

struct BenchmarkCell {
  MotionSpec motion;
  std::string preset = "default";
  double sigma_l = 0.0;
  double sigma_r = 0.0;
  std::uint64_t seed = 0;  // measurement noise
  bool operator==(const BenchmarkCell&) const = default;
};

struct BenchmarkManifest {
  std::vector<BenchmarkCell> cells;
};

inline nlohmann::json to_json(const MotionSpec& m) {
  return {{"kind", motion_kind_name(m.kind)}, {"frames", m.frames}, {"frequency", m.frequency},
          {"amplitude", m.amplitude},        {"seed", m.seed}};
}

inline MotionSpec motion_from_json(const nlohmann::json& j) {
  MotionSpec m;
  m.kind = parse_motion_kind(j.at("kind").get<std::string>());
  m.frames = j.value("frames", m.frames);
  m.frequency = j.value("frequency", m.frequency);
  m.amplitude = j.value("amplitude", m.amplitude);
  m.seed = j.value("seed", m.seed);
  m.validate();
  return m;
}

inline nlohmann::json to_json(const BenchmarkCell& c) {
  return {{"motion", to_json(c.motion)}, {"preset", c.preset}, {"sigma_l", c.sigma_l},
          {"sigma_r", c.sigma_r},        {"seed", c.seed}};
}

inline nlohmann::json to_json(const BenchmarkManifest& m) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : m.cells) {
    cells.push_back(to_json(c));
  }
  return {{"version", 1}, {"cells", cells}};
}

/// Accepts explicit "cells" and/or a "grid" that expands, in nested order, over
/// kinds x presets x sigma_l x sigma_r x seeds. Cell seeds derive from the grid seed and index.
inline BenchmarkManifest expand_manifest(const nlohmann::json& j) {
  BenchmarkManifest out;
  try {
    if (j.contains("cells")) {
      for (const auto& c : j.at("cells")) {
        BenchmarkCell cell;
        cell.motion = motion_from_json(c.at("motion"));
        cell.preset = c.value("preset", cell.preset);
        cell.sigma_l = c.value("sigma_l", 0.0);
        cell.sigma_r = c.value("sigma_r", 0.0);
        cell.seed = c.value("seed", std::uint64_t{0});
        out.cells.push_back(cell);
      }
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      const auto kinds = g.at("kinds").get<std::vector<std::string>>();
      const auto presets = g.value("presets", std::vector<std::string>{"default"});
      const auto sl = g.value("sigma_l", std::vector<double>{0.0});
      const auto sr = g.value("sigma_r", std::vector<double>{0.0});
      const auto seeds = g.value("seeds", std::vector<std::uint64_t>{0});
      const int frames = g.value("frames", 240);
      const double amplitude = g.value("amplitude", 1.0);
      for (const auto& kind : kinds) {
        for (const auto& preset : presets) {
          for (double l : sl) {
            for (double r : sr) {
              for (std::uint64_t seed : seeds) {
                BenchmarkCell cell;
                cell.motion.kind = parse_motion_kind(kind);
                cell.motion.frames = frames;
                cell.motion.amplitude = amplitude;
                cell.motion.seed = seed;
                cell.motion.validate();
                cell.preset = preset;
                cell.sigma_l = l;
                cell.sigma_r = r;
                cell.seed = seed * 1000003ULL + out.cells.size();
                out.cells.push_back(cell);
              }
            }
          }
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad manifest: ") + e.what());
  }
  for (const auto& c : out.cells) {
    parse_preset(c.preset);
    require(c.sigma_l >= 0.0 && c.sigma_r >= 0.0, "bad manifest: negative noise level");
  }
  if (out.cells.empty()) {
    throw ValidationError("bad manifest: no cells");
  }
  return out;
}

/// Everything one benchmark cell produces.
struct CellData {
  PoseSequence truth;
  Skeleton skeleton;
  MeasurementSet measurements;
};

inline CellData generate_cell(const BenchmarkCell& cell, const Skeleton& base = default_skeleton()) {
  const PoseSequence motion = generate_motion(cell.motion, base);
  ScaledTruth scaled = scale_ground_truth(motion, base, parse_preset(cell.preset));
  MeasurementSet m =
      extract_measurements(scaled.poses, scaled.skeleton, cell.sigma_l, cell.sigma_r, cell.seed);
  return {std::move(scaled.poses), std::move(scaled.skeleton), std::move(m)};
}

}  // namespace inpose
