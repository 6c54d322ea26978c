// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "inpose/common.hpp"
#include "inpose/measurement.hpp"
#include "inpose/network.hpp"
#include "inpose/skeleton.hpp"
#include "inpose/training.hpp"

namespace inpose {

inline constexpr std::uint32_t kSequenceFormatVersion = 1;
inline constexpr std::uint32_t kMeasurementFormatVersion = 1;
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

namespace detail {

inline constexpr std::array<char, 8> kSequenceMagic = {'I', 'N', 'P', 'O', 'S', 'E', 'Q', '\0'};
inline constexpr std::array<char, 8> kCheckpointMagic = {'I', 'N', 'P', 'O', 'S', 'E', 'C', 'K'};

inline std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  if (!std::filesystem::exists(path)) {
    throw FormatError(path.string() + " not found");
  }
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  return in;
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw FormatError("truncated file while reading " + what);
  }
  return value;
}

inline void write_doubles(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

inline void read_doubles(std::istream& in, double* data, std::size_t count, const std::string& what) {
  const auto bytes = static_cast<std::streamsize>(count * sizeof(double));
  in.read(reinterpret_cast<char*>(data), bytes);
  if (in.gcount() != bytes) {
    throw FormatError("truncated file while reading " + what);
  }
}

/// magic | u32 version | u64 header length | JSON header
inline void write_preamble(std::ostream& out, const std::array<char, 8>& magic,
                           std::uint32_t version, const nlohmann::json& header) {
  const std::string text = header.dump();
  out.write(magic.data(), magic.size());
  write_pod(out, version);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline nlohmann::json read_preamble(std::istream& in, const std::array<char, 8>& magic,
                                    std::uint32_t version, const std::string& kind) {
  std::array<char, 8> got{};
  in.read(got.data(), got.size());
  if (in.gcount() != static_cast<std::streamsize>(got.size())) {
    throw FormatError("truncated file: missing " + kind + " magic");
  }
  if (got != magic) {
    throw FormatError("not a " + kind + " file (bad magic)");
  }
  const auto file_version = read_pod<std::uint32_t>(in, "version");
  if (file_version != version) {
    throw FormatError(kind + " version mismatch: file has " + std::to_string(file_version) +
                      ", expected " + std::to_string(version));
  }
  const auto length = read_pod<std::uint64_t>(in, "header length");
  if (length > (1u << 26)) {
    throw FormatError("implausible " + kind + " header length");
  }
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (in.gcount() != static_cast<std::streamsize>(length)) {
    throw FormatError("truncated file while reading " + kind + " header");
  }
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt " + kind + " header: " + e.what());
  }
}

inline void expect_end(std::istream& in, const std::string& kind) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after " + kind + " payload");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Pose sequences

/// Throws naming the first non-finite entry.
inline void check_finite(const PoseSequence& poses) {
  for (int f = 0; f < poses.frames(); ++f) {
    for (int k = 0; k < kFrameStateSize; ++k) {
      if (!std::isfinite(poses.rotations(f, k))) {
        throw FormatError("non-finite rotation at frame " + std::to_string(f) + ", joint " +
                          std::to_string(k / kSixDofSize));
      }
    }
    if (!poses.root_translation.row(f).allFinite()) {
      throw FormatError("non-finite root translation at frame " + std::to_string(f) + ", joint 0");
    }
  }
}

inline void save_sequence(const std::filesystem::path& path, const PoseSequence& poses) {
  require(poses.rotations.rows() == poses.root_translation.rows(),
          "rotation and root frame counts differ");
  check_finite(poses);
  auto out = detail::open_out(path, true);
  detail::write_preamble(out, detail::kSequenceMagic, kSequenceFormatVersion,
                         {{"frames", poses.frames()}, {"joints", kJointCount}, {"layout", "6dof+root"}});
  detail::write_doubles(out, poses.rotations.data(), poses.rotations.size());
  detail::write_doubles(out, poses.root_translation.data(), poses.root_translation.size());
  if (!out) {
    throw FormatError("failed writing " + path.string());
  }
}

inline PoseSequence load_sequence(const std::filesystem::path& path) {
  auto in = detail::open_in(path, true);
  const auto header =
      detail::read_preamble(in, detail::kSequenceMagic, kSequenceFormatVersion, "pose sequence");
  const int frames = header.value("frames", -1);
  if (header.value("joints", -1) != kJointCount) {
    throw FormatError("pose sequence must have 22 joints");
  }
  if (frames == 0) {
    throw FormatError("empty sequence");
  }
  if (frames < 0) {
    throw FormatError("pose sequence header lacks a frame count");
  }
  PoseSequence poses(frames);
  detail::read_doubles(in, poses.rotations.data(), poses.rotations.size(), "rotations");
  detail::read_doubles(in, poses.root_translation.data(), poses.root_translation.size(),
                       "root translations");
  detail::expect_end(in, "pose sequence");
  check_finite(poses);
  return poses;
}

// ---------------------------------------------------------------------------------------------
// Measurements (JSON lines: one header line, then one line per frame)

inline void save_measurements(const std::filesystem::path& path, const MeasurementSet& m) {
  if (!m.locations.allFinite() || !m.rotations.allFinite()) {
    throw FormatError("measurement set has non-finite entries");
  }
  auto out = detail::open_out(path, false);
  out << nlohmann::json{{"format", "inpose-measurements"},
                        {"version", kMeasurementFormatVersion},
                        {"frames", m.frames()},
                        {"sigma_l", m.sigma_l},
                        {"sigma_r", m.sigma_r}}
             .dump()
      << '\n';
  for (int f = 0; f < m.frames(); ++f) {
    nlohmann::json loc = nlohmann::json::array(), rot = nlohmann::json::array();
    for (int k = 0; k < kMeasuredCount; ++k) {
      const double* l = m.locations.row(f).data() + 3 * k;
      const double* r = m.rotations.row(f).data() + 6 * k;
      loc.push_back(std::vector<double>(l, l + 3));
      rot.push_back(std::vector<double>(r, r + 6));
    }
    out << nlohmann::json{{"t", f}, {"loc", loc}, {"rot", rot}}.dump() << '\n';
  }
  if (!out) {
    throw FormatError("failed writing " + path.string());
  }
}

inline MeasurementSet load_measurements(const std::filesystem::path& path) {
  auto in = detail::open_in(path, false);
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError("empty sequence");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt measurement header: ") + e.what());
  }
  if (header.value("format", "") != "inpose-measurements") {
    throw FormatError("not a measurement file");
  }
  const auto version = header.value("version", 0u);
  if (version != kMeasurementFormatVersion) {
    throw FormatError("measurement version mismatch: file has " + std::to_string(version) +
                      ", expected " + std::to_string(kMeasurementFormatVersion));
  }
  const int frames = header.value("frames", -1);
  if (frames == 0) {
    throw FormatError("empty sequence");
  }
  if (frames < 0) {
    throw FormatError("measurement header lacks a frame count");
  }
  MeasurementSet m(frames);
  m.sigma_l = header.value("sigma_l", 0.0);
  m.sigma_r = header.value("sigma_r", 0.0);
  for (int f = 0; f < frames; ++f) {
    if (!std::getline(in, line)) {
      throw FormatError("truncated measurement file: " + std::to_string(f) + " of " +
                        std::to_string(frames) + " frames");
    }
    try {
      const auto row = nlohmann::json::parse(line);
      const auto& loc = row.at("loc");
      const auto& rot = row.at("rot");
      const auto wrong = [f] {
        return FormatError("frame " + std::to_string(f) + " has the wrong number of values");
      };
      if (loc.size() != kMeasuredCount || rot.size() != kMeasuredCount) throw wrong();
      for (int j = 0; j < kMeasuredCount; ++j) {
        if (loc[j].size() != 3 || rot[j].size() != 6) throw wrong();
        for (int k = 0; k < 3; ++k) {
          if (!loc[j][k].is_number()) {
            throw FormatError("non-finite location at frame " + std::to_string(f) + ", joint " +
                              std::to_string(kMeasuredJoints[j]));
          }
          m.locations(f, 3 * j + k) = loc[j][k].get<double>();
        }
        for (int k = 0; k < 6; ++k) {
          if (!rot[j][k].is_number()) {
            throw FormatError("non-finite rotation at frame " + std::to_string(f) + ", joint " +
                              std::to_string(kMeasuredJoints[j]));
          }
          m.rotations(f, 6 * j + k) = rot[j][k].get<double>();
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("corrupt measurement frame " + std::to_string(f) + ": " + e.what());
    }
  }
  return m;
}

// ---------------------------------------------------------------------------------------------
// Skeletons

inline nlohmann::json skeleton_to_json(const Skeleton& s) {
  nlohmann::json bones = nlohmann::json::array();
  for (const Vec3& b : s.bones()) {
    bones.push_back({b.x(), b.y(), b.z()});
  }
  return {{"parents", s.parents()}, {"bones", bones}, {"measured", s.measured()}};
}

inline Skeleton skeleton_from_json(const nlohmann::json& j) {
  try {
    std::vector<Vec3> bones;
    for (const auto& b : j.at("bones")) {
      require(b.size() == 3, "bone vectors need three components");
      bones.emplace_back(b[0].get<double>(), b[1].get<double>(), b[2].get<double>());
    }
    return Skeleton::from_tree(j.at("parents").get<std::vector<int>>(), std::move(bones),
                               j.value("measured", std::vector<int>(kMeasuredJoints.begin(),
                                                                    kMeasuredJoints.end())));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt skeleton: ") + e.what());
  }
}

inline void save_skeleton(const std::filesystem::path& path, const Skeleton& s) {
  auto out = detail::open_out(path, false);
  out << skeleton_to_json(s).dump(2) << '\n';
}

inline Skeleton load_skeleton(const std::filesystem::path& path) {
  auto in = detail::open_in(path, false);
  try {
    return skeleton_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("corrupt skeleton: ") + e.what());
  }
}

// ---------------------------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"window_length", c.window_length},
          {"diffusion_steps", c.diffusion_steps},
          {"dropout", c.dropout},
          {"learning_rate", c.learning_rate},
          {"final_learning_rate_fraction", c.final_learning_rate_fraction},
          {"steps", c.steps},
          {"batch_size", c.batch_size},
          {"hidden", c.hidden},
          {"blocks", c.blocks},
          {"gradient_clip", c.gradient_clip},
          {"angular_velocity", c.layout.angular_velocity},
          {"location_features", c.layout.locations},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.window_length = j.value("window_length", c.window_length);
  c.diffusion_steps = j.value("diffusion_steps", c.diffusion_steps);
  c.dropout = j.value("dropout", c.dropout);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.final_learning_rate_fraction =
      j.value("final_learning_rate_fraction", c.final_learning_rate_fraction);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.hidden = j.value("hidden", c.hidden);
  c.blocks = j.value("blocks", c.blocks);
  c.gradient_clip = j.value("gradient_clip", c.gradient_clip);
  c.layout.angular_velocity = j.value("angular_velocity", c.layout.angular_velocity);
  c.layout.locations = j.value("location_features", c.layout.locations);
  c.seed = j.value("seed", c.seed);
  return c;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const TrainConfig& c) {
  std::ostringstream s;
  s << std::hex << fnv1a(to_json(c).dump());
  return s.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  const ResidualMlp& net = state.model.network();
  nlohmann::json header = {
      {"window_length", state.model.window_length()},
      {"conditioning", {{"rotations", true},
                        {"angular_velocity", state.model.layout().angular_velocity},
                        {"locations", state.model.layout().locations}}},
      {"architecture", {{"input", net.input_size()}, {"hidden", net.hidden_size()},
                        {"blocks", net.blocks()}, {"output", net.output_size()}}},
      {"unconditional", state.model.supports_unconditional()},
      {"step", state.step},
      {"losses", state.losses.size()},
      {"train_config", to_json(state.config)},
      {"train_config_hash", config_hash(state.config)}};
  auto out = detail::open_out(path, true);
  detail::write_preamble(out, detail::kCheckpointMagic, kCheckpointFormatVersion, header);
  for (const auto* group : {&net.params(), &state.adam_m, &state.adam_v}) {
    for (const auto& p : *group) {
      detail::write_doubles(out, p.data(), static_cast<std::size_t>(p.size()));
    }
  }
  detail::write_doubles(out, state.losses.data(), state.losses.size());
  if (!out) {
    throw FormatError("failed writing " + path.string());
  }
}

inline TrainState load_checkpoint(const std::filesystem::path& path) {
  auto in = detail::open_in(path, true);
  const auto header =
      detail::read_preamble(in, detail::kCheckpointMagic, kCheckpointFormatVersion, "checkpoint");
  TrainState state;
  try {
    state.config = train_config_from_json(header.at("train_config"));
    if (header.at("train_config_hash").get<std::string>() != config_hash(state.config)) {
      throw FormatError("checkpoint training-config hash mismatch");
    }
    const auto& arch = header.at("architecture");
    ConditioningLayout layout;
    layout.angular_velocity = header.at("conditioning").at("angular_velocity").get<bool>();
    layout.locations = header.at("conditioning").at("locations").get<bool>();
    ResidualMlp net(arch.at("input").get<int>(), arch.at("hidden").get<int>(),
                    arch.at("blocks").get<int>(), arch.at("output").get<int>(), 0);
    state.step = header.at("step").get<long>();
    state.adam_m = net.zero_like();
    state.adam_v = net.zero_like();
    for (auto* group : {&net.params(), &state.adam_m, &state.adam_v}) {
      for (auto& p : *group) {
        detail::read_doubles(in, p.data(), static_cast<std::size_t>(p.size()), "parameters");
      }
    }
    state.losses.resize(header.at("losses").get<std::size_t>());
    detail::read_doubles(in, state.losses.data(), state.losses.size(), "loss history");
    detail::expect_end(in, "checkpoint");
    state.model = MlpDenoiser(std::move(net), layout, header.at("window_length").get<int>(),
                              header.at("unconditional").get<bool>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }
  return state;
}

}  // namespace inpose
