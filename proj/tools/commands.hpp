// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace inpose::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // verification failed or the run itself failed
inline constexpr int kExitUsage = 2;    // bad flags, missing or malformed inputs

/// Default data directory: $INPOSE_DATA_DIR, else "inpose-data".
std::string default_data_dir();

struct GenDataOptions {
  std::string manifest;
  std::string out;
};

struct TrainOptions {
  std::string data;
  std::string out;
  std::optional<std::string> resume;
  long steps = 20000;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double dropout = 0.1;
  int window_length = 41;
  int hidden = 256;
  int blocks = 2;
  bool angular_velocity = false;
  bool location_features = false;
  std::uint64_t seed = 0;
};

struct InferOptions {
  std::optional<std::string> measurements;  // single-sequence mode
  std::optional<std::string> skeleton;
  std::optional<std::string> data;          // gen-data directory: every cell
  std::optional<std::string> checkpoint;
  std::optional<std::string> oracle;        // ground-truth sequence for the oracle denoiser
  std::string out;
  int steps = 50;
  double eta = 0.0;
  std::optional<double> guidance_scale;  // unset: library default
  std::optional<double> sigma_l;
  std::optional<double> sigma_l_floor;
  std::string covariance = "identity";
  double cfg_weight = 1.0;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  std::string pred;
  std::string truth;
  std::optional<std::string> skeleton;
  std::optional<std::string> manifest;
  double scale = 1.0;
  std::string out;
};

struct VerifyOptions {
  int points = 20;
  long samples = 200000;
  std::uint64_t seed = 1;
  std::optional<double> sigma_threshold;  // unset: Bonferroni-adjusted bound
  bool inject_sign_error = false;
  std::optional<std::string> out;
};

int gen_data(const GenDataOptions& options, std::ostream& log);
int train(const TrainOptions& options, std::ostream& log);
int infer(const InferOptions& options, std::ostream& log);
int eval(const EvalOptions& options, std::ostream& log);
int verify(const VerifyOptions& options, std::ostream& log);

/// Parses argv and dispatches; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace inpose::cli
