// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "inpose/inpose.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace inpose::cli {
namespace {

constexpr const char* kLockName = "manifest.lock.json";

std::string cell_name(std::size_t index) {
  std::ostringstream s;
  s << "cell_" << std::setw(3) << std::setfill('0') << index;
  return s.str();
}

void write_json(const fs::path& path, const json& value) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out << value.dump(2) << '\n';
}

json read_json(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw FormatError(what + " not found: " + path.string());
  }
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("malformed " + what + " " + path.string() + ": " + e.what());
  }
}

/// Sits next to every output so a run can be repeated exactly.
void echo_config(const fs::path& path, const std::string& command, json options) {
  options["command"] = command;
  options["version"] = "0.1.0";
  write_json(path, options);
}

std::string optional_text(const std::optional<std::string>& v) { return v.value_or(""); }

GuidanceConfig guidance_from(const InferOptions& o) {
  GuidanceConfig g;
  g.eta = o.eta;
  if (o.guidance_scale) {
    g.guidance_scale = *o.guidance_scale;
  }
  g.sigma_l = o.sigma_l;
  if (o.sigma_l_floor) g.sigma_l_floor = *o.sigma_l_floor;
  if (o.covariance == "identity") {
    g.covariance_mode = CovarianceMode::kIdentity;
  } else if (o.covariance == "closed-form") {
    g.covariance_mode = CovarianceMode::kClosedForm;
  } else {
    throw ValidationError("covariance must be 'identity' or 'closed-form'");
  }
  g.cfg_weight = o.cfg_weight;
  g.validate();
  return g;
}

json guidance_json(const GuidanceConfig& g) {
  return {{"eta", g.eta},
          {"guidance_scale", g.guidance_scale},
          {"sigma_l", g.sigma_l ? json(*g.sigma_l) : json(nullptr)},
          {"sigma_l_floor", g.sigma_l_floor},
          {"covariance", g.covariance_mode == CovarianceMode::kIdentity ? "identity" : "closed-form"},
          {"cfg_weight", g.cfg_weight}};
}

struct CellFiles {
  std::string name;
  BenchmarkCell cell;
  fs::path dir;
};

std::vector<CellFiles> list_cells(const fs::path& data_dir, const std::optional<std::string>& lock) {
  const fs::path lock_path = lock ? fs::path(*lock) : data_dir / kLockName;
  const BenchmarkManifest manifest = expand_manifest(read_json(lock_path, "manifest lock"));
  std::vector<CellFiles> out;
  for (std::size_t i = 0; i < manifest.cells.size(); ++i) {
    out.push_back({cell_name(i), manifest.cells[i], data_dir / cell_name(i)});
  }
  return out;
}

}  // namespace

std::string default_data_dir() {
  const char* env = std::getenv("INPOSE_DATA_DIR");
  return env != nullptr && *env != '\0' ? env : "inpose-data";
}

// ---------------------------------------------------------------------------------------------

int gen_data(const GenDataOptions& o, std::ostream& log) {
  if (!fs::exists(o.manifest)) {
    throw FormatError("manifest not found: " + o.manifest);
  }
  const BenchmarkManifest manifest = expand_manifest(read_json(o.manifest, "manifest"));
  const fs::path out(o.out);
  fs::create_directories(out);
  const Skeleton base = default_skeleton();
  for (std::size_t i = 0; i < manifest.cells.size(); ++i) {
    const BenchmarkCell& cell = manifest.cells[i];
    const CellData data = generate_cell(cell, base);
    const fs::path dir = out / cell_name(i);
    fs::create_directories(dir);
    save_sequence(dir / "truth.seq", data.truth);
    save_skeleton(dir / "skeleton.json", data.skeleton);
    save_measurements(dir / "measurements.jsonl", data.measurements);
    write_json(dir / "cell.json", to_json(cell));
    log << cell_name(i) << ": " << motion_kind_name(cell.motion.kind) << ", " << cell.preset
        << ", " << cell.motion.frames << " frames\n";
  }
  write_json(out / kLockName, to_json(manifest));
  echo_config(out / "gen-data.config.json", "gen-data",
              {{"manifest", o.manifest}, {"out", o.out}, {"cells", manifest.cells.size()}});
  log << "wrote " << manifest.cells.size() << " cells to " << out.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

int train(const TrainOptions& o, std::ostream& log) {
  TrainingSet set;
  for (const CellFiles& c : list_cells(o.data, std::nullopt)) {
    set.poses.push_back(load_sequence(c.dir / "truth.seq"));
    set.measurements.push_back(load_measurements(c.dir / "measurements.jsonl"));
  }

  TrainState state;
  if (o.resume) {
    if (!fs::exists(*o.resume)) {
      throw FormatError("checkpoint not found: " + *o.resume);
    }
    state = load_checkpoint(*o.resume);
    state.config.steps = o.steps;
    log << "resuming from step " << state.step << '\n';
  } else {
    TrainConfig c;
    c.steps = o.steps;
    c.batch_size = o.batch_size;
    c.learning_rate = o.learning_rate;
    c.dropout = o.dropout;
    c.window_length = o.window_length;
    c.hidden = o.hidden;
    c.blocks = o.blocks;
    c.layout.angular_velocity = o.angular_velocity;
    c.layout.locations = o.location_features;
    c.seed = o.seed;
    state = initial_train_state(c);
  }
  // Reject bad data before spending any time on training.
  set.validate(state.config.window_length);

  const long report_every = std::max<long>(1, state.config.steps / 20);
  train_denoiser(state, set, [&](long step, double loss) {
    if ((step + 1) % report_every == 0) {
      log << "step " << step + 1 << "/" << state.config.steps << " loss " << loss << '\n';
    }
  });

  const fs::path out(o.out);
  if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  save_checkpoint(out, state);
  std::ofstream curve(out.string() + ".loss.csv");
  curve << "step,loss\n";
  curve.precision(10);
  for (std::size_t i = 0; i < state.losses.size(); ++i) {
    curve << i + 1 << ',' << state.losses[i] << '\n';
  }
  json echo = to_json(state.config);
  echo["data"] = o.data;
  echo["out"] = o.out;
  echo["resume"] = optional_text(o.resume);
  echo_config(out.string() + ".config.json", "train", echo);
  const auto [first, last] = loss_endpoints(state.losses, 100);
  log << "saved " << out.string() << " (step " << state.step << ", loss " << first << " -> " << last
      << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

int infer(const InferOptions& o, std::ostream& log) {
  const GuidanceConfig guidance = guidance_from(o);
  const Schedule schedule = default_schedule(o.steps);
  if (o.checkpoint.has_value() == o.oracle.has_value()) {
    throw ValidationError("give exactly one of --checkpoint or --oracle");
  }
  std::optional<TrainState> trained;
  if (o.checkpoint) {
    if (!fs::exists(*o.checkpoint)) {
      throw FormatError("checkpoint not found: " + *o.checkpoint);
    }
    trained = load_checkpoint(*o.checkpoint);
  }

  auto run_one = [&](const MeasurementSet& m, const Skeleton& skeleton,
                     const std::optional<fs::path>& truth_path) {
    if (trained) {
      return run_inpose(m, skeleton, trained->model, schedule, guidance, o.seed);
    }
    const PoseSequence truth = load_sequence(truth_path.value_or(fs::path(*o.oracle)));
    require(truth.frames() == m.frames(), "oracle sequence and measurements differ in length");
    const OracleDenoiser oracle(truth);
    return run_inpose(m, skeleton, oracle, schedule, guidance, o.seed);
  };

  const fs::path out(o.out);
  json echo = {{"checkpoint", optional_text(o.checkpoint)},
               {"oracle", optional_text(o.oracle)},
               {"steps", o.steps},
               {"seed", o.seed},
               {"guidance", guidance_json(guidance)},
               {"out", o.out}};
  if (o.data) {
    if (o.measurements || o.skeleton) {
      throw ValidationError("--data excludes --measurements and --skeleton");
    }
    fs::create_directories(out);
    for (const CellFiles& c : list_cells(*o.data, std::nullopt)) {
      const MeasurementSet m = load_measurements(c.dir / "measurements.jsonl");
      const Skeleton skeleton = load_skeleton(c.dir / "skeleton.json");
      // In oracle mode each cell is its own ground truth.
      const std::optional<fs::path> truth =
          o.oracle ? std::optional<fs::path>(c.dir / "truth.seq") : std::nullopt;
      save_sequence(out / (c.name + ".seq"), run_one(m, skeleton, truth));
      log << c.name << " done\n";
    }
    echo["data"] = *o.data;
    echo_config(out / "infer.config.json", "infer", echo);
    return kExitOk;
  }
  if (!o.measurements || !o.skeleton) {
    throw ValidationError("need --measurements and --skeleton, or --data");
  }
  const MeasurementSet m = load_measurements(*o.measurements);
  const Skeleton skeleton = load_skeleton(*o.skeleton);
  const PoseSequence pred = run_one(m, skeleton, std::nullopt);
  if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  save_sequence(out, pred);
  echo["measurements"] = *o.measurements;
  echo["skeleton"] = *o.skeleton;
  echo_config(out.string() + ".config.json", "infer", echo);
  log << "wrote " << pred.frames() << " frames to " << out.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

int eval(const EvalOptions& o, std::ostream& log) {
  EvalReport report;
  if (fs::is_directory(o.truth)) {
    for (const CellFiles& c : list_cells(o.truth, o.manifest)) {
      const fs::path pred_path = fs::path(o.pred) / (c.name + ".seq");
      const PoseSequence pred = load_sequence(pred_path);
      const PoseSequence truth = load_sequence(c.dir / "truth.seq");
      const Skeleton skeleton = load_skeleton(c.dir / "skeleton.json");
      const BodyPreset preset = parse_preset(c.cell.preset);
      CellMetrics m = evaluate_cell({pred, skeleton}, {truth, skeleton}, preset.nominal_scale());
      m.name = c.name;
      m.preset = c.cell.preset;
      m.sigma_l = c.cell.sigma_l;
      m.sigma_r = c.cell.sigma_r;
      report.cells.push_back(m);
    }
  } else {
    if (!o.skeleton) {
      throw ValidationError("single-sequence eval needs --skeleton");
    }
    const PoseSequence pred = load_sequence(o.pred);
    const PoseSequence truth = load_sequence(o.truth);
    const Skeleton skeleton = load_skeleton(*o.skeleton);
    CellMetrics m = evaluate_cell({pred, skeleton}, {truth, skeleton}, o.scale);
    m.name = fs::path(o.pred).stem().string();
    report.cells.push_back(m);
  }

  const fs::path out(o.out);
  write_json(out, report.to_json());
  fs::path csv = out;
  csv.replace_extension(".csv");
  std::ofstream(csv) << report.to_csv();
  echo_config(out.string() + ".config.json", "eval",
              {{"pred", o.pred},
               {"truth", o.truth},
               {"skeleton", optional_text(o.skeleton)},
               {"manifest", optional_text(o.manifest)},
               {"scale", o.scale},
               {"out", o.out}});
  const CellMetrics mean = report.mean();
  log << std::fixed << std::setprecision(3) << "cells " << report.cells.size() << "  MPJPE "
      << mean.mpjpe << " cm  MPJRE " << mean.mpjre << " deg  UPE " << mean.upe << "  LPE "
      << mean.lpe << "  jitter " << mean.jitter << " cm/frame\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

namespace {

struct SuiteResult {
  std::string name;
  bool passed = false;
  json detail;
};

SuiteResult rotation_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double round_trip = 0.0, orthonormality = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Mat3 r = random_rotation(rng);
    const Mat3 back = from_sixdof(to_sixdof(r));
    round_trip = std::max(round_trip, (back - r).cwiseAbs().maxCoeff());
    orthonormality = std::max({orthonormality,
                               (back.transpose() * back - Mat3::Identity()).cwiseAbs().maxCoeff(),
                               std::abs(back.determinant() - 1.0)});
  }
  return {"rotation round trip",
          round_trip <= 1e-9 && orthonormality <= 1e-9,
          {{"max_round_trip_error", round_trip}, {"max_orthonormality_error", orthonormality}}};
}

SuiteResult linearization_suite(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  double worst = 0.0;
  const Skeleton base = default_skeleton();
  for (int s = 0; s < 10; ++s) {
    std::vector<double> factors(kJointCount);
    for (double& f : factors) {
      f = u(rng);
    }
    const Skeleton skeleton = scale_skeleton(base, factors);
    const LinearOperatorA a = build_A(skeleton);
    for (int p = 0; p < 100; ++p) {
      RotationSet rotations(kJointCount);
      for (auto& r : rotations) {
        r = random_rotation(rng);
      }
      const Eigen::VectorXd linear = a.apply(rotations);
      const auto fk = forward_kinematics(skeleton, rotations, Vec3::Zero());
      for (int k = 0; k < kMeasuredCount; ++k) {
        worst = std::max(worst, (linear.segment<3>(3 * k) - fk[skeleton.measured()[k]])
                                    .cwiseAbs()
                                    .maxCoeff());
      }
    }
  }
  return {"kinematic linearization", worst <= 1e-12, {{"max_abs_error_m", worst}}};
}

}  // namespace

int verify(const VerifyOptions& o, std::ostream& log) {
  PushforwardCheckOptions options;
  options.points = o.points;
  options.samples = o.samples;
  options.seed = o.seed;
  options.inject_sign_error = o.inject_sign_error;
  const int entries = o.points * static_cast<int>(options.widths.size()) * 45;
  // Per-entry 3-sigma tails over thousands of entries flag a few exact entries by chance;
  // the default keeps the family-wise false-alarm rate at the single-entry 3-sigma level.
  options.sigma_threshold =
      o.sigma_threshold.value_or(normal_critical_value(std::erfc(3.0 / std::sqrt(2.0)) / entries));

  const PushforwardCheckReport report = check_pushforward(options);
  const SuiteResult rot = rotation_suite(o.seed);
  const SuiteResult lin = linearization_suite(o.seed);

  json points = json::array();
  log << std::setprecision(6);
  for (const PointCheck& p : report.points) {
    json mismatches = json::array();
    for (const EntryMismatch& m : p.mismatches) {
      mismatches.push_back({{"entry", std::string("Cov[") + pushforward_entry_name(m.row) + ", " +
                                          pushforward_entry_name(m.col) + "]"},
                            {"closed_form", m.closed_form},
                            {"monte_carlo", m.monte_carlo},
                            {"z", m.z}});
    }
    points.push_back({{"r_hat", std::vector<double>(p.r_hat.data(), p.r_hat.data() + 6)},
                      {"w", p.w},
                      {"max_abs_deviation", p.max_abs_deviation},
                      {"max_z", p.max_z},
                      {"minors", p.minors},
                      {"expected_minors", p.expected_minors},
                      {"max_minor_rel_error", p.max_minor_rel_error},
                      {"mismatches", mismatches}});
    log << "w=" << p.w << " max|dev|=" << p.max_abs_deviation << " max z=" << p.max_z
        << " minors:";
    for (double m : p.minors) {
      log << ' ' << m;
    }
    log << '\n';
    for (const EntryMismatch& m : p.mismatches) {
      log << "  MISMATCH Cov[" << pushforward_entry_name(m.row) << ", "
          << pushforward_entry_name(m.col) << "] closed " << m.closed_form << " MC "
          << m.monte_carlo << " (" << m.z << " SE)\n";
    }
  }
  const bool passed = report.passed() && rot.passed && lin.passed;
  log << "covariance moments: " << (report.moments_ok ? "pass" : "FAIL") << " ("
      << report.entries_failed << "/" << report.entries_tested << " entries beyond "
      << options.sigma_threshold << " SE, max " << report.max_z << ")\n";
  log << "sylvester minors:   " << (report.minors_ok ? "pass" : "FAIL") << '\n';
  log << rot.name << ": " << (rot.passed ? "pass" : "FAIL") << ' ' << rot.detail.dump() << '\n';
  log << lin.name << ": " << (lin.passed ? "pass" : "FAIL") << ' ' << lin.detail.dump() << '\n';
  log << (passed ? "VERIFY PASS" : "VERIFY FAIL") << '\n';

  if (o.out) {
    write_json(*o.out, {{"passed", passed},
                        {"sigma_threshold", options.sigma_threshold},
                        {"samples", o.samples},
                        {"entries_tested", report.entries_tested},
                        {"entries_failed", report.entries_failed},
                        {"max_z", report.max_z},
                        {"minors_ok", report.minors_ok},
                        {"points", points},
                        {"suites", {{rot.name, rot.detail}, {lin.name, lin.detail}}}});
    echo_config(*o.out + ".config.json", "verify",
                {{"points", o.points},
                 {"samples", o.samples},
                 {"seed", o.seed},
                 {"sigma_threshold", options.sigma_threshold},
                 {"inject_sign_error", o.inject_sign_error}});
  }
  return passed ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------------------------------------

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"InPose: scale-free full-body pose estimation from three tracked points"};
  app.set_config("--config", "", "INI/TOML file with default flag values");
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  GenDataOptions gen;
  gen.out = default_data_dir();
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate synthetic benchmark cells");
  gen_cmd->add_option("--manifest", gen.manifest, "Manifest JSON (cells and/or grid)")->required();
  gen_cmd->add_option("--out", gen.out, "Output directory")->capture_default_str();

  TrainOptions tr;
  tr.data = default_data_dir();
  auto* train_cmd = app.add_subcommand("train", "Train the toy denoiser");
  train_cmd->add_option("--data", tr.data, "gen-data directory")->capture_default_str();
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--resume", tr.resume, "Checkpoint to continue from");
  train_cmd->add_option("--steps", tr.steps, "Total optimizer steps")->capture_default_str();
  train_cmd->add_option("--batch-size", tr.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", tr.learning_rate, "Peak learning rate")->capture_default_str();
  train_cmd->add_option("--dropout", tr.dropout, "Conditioning dropout probability")
      ->capture_default_str();
  train_cmd->add_option("--window", tr.window_length, "Window length in frames")
      ->capture_default_str();
  train_cmd->add_option("--hidden", tr.hidden)->capture_default_str();
  train_cmd->add_option("--blocks", tr.blocks)->capture_default_str();
  train_cmd->add_flag("--angular-velocity", tr.angular_velocity,
                      "Add finite-difference rotation velocity features");
  train_cmd->add_flag("--location-features", tr.location_features,
                      "Condition on sensed locations too (baseline variant)");
  train_cmd->add_option("--seed", tr.seed)->capture_default_str();

  InferOptions in;
  auto* infer_cmd = app.add_subcommand("infer", "Estimate poses from measurements");
  infer_cmd->add_option("--measurements", in.measurements, "Measurement JSON-lines file");
  infer_cmd->add_option("--skeleton", in.skeleton, "Skeleton JSON");
  infer_cmd->add_option("--data", in.data, "gen-data directory (infer every cell)");
  infer_cmd->add_option("--checkpoint", in.checkpoint, "Trained denoiser");
  infer_cmd->add_option("--oracle", in.oracle,
                        "Ground-truth sequence for the oracle denoiser (any value with --data)");
  infer_cmd->add_option("--out", in.out, "Output sequence (or directory with --data)")->required();
  infer_cmd->add_option("--steps", in.steps, "Sampler steps N")->capture_default_str();
  infer_cmd->add_option("--eta", in.eta, "DDIM stochasticity")->capture_default_str();
  infer_cmd->add_option("--guidance-scale", in.guidance_scale, "Likelihood-score scale");
  infer_cmd->add_option("--sigma-l", in.sigma_l, "Location noise used in the score (m)");
  infer_cmd->add_option("--sigma-l-floor", in.sigma_l_floor, "Lower bound on the score's sigma_l (m)");
  infer_cmd->add_option("--covariance", in.covariance, "identity | closed-form")
      ->capture_default_str();
  infer_cmd->add_option("--cfg-weight", in.cfg_weight)->capture_default_str();
  infer_cmd->add_option("--seed", in.seed)->capture_default_str();

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  eval_cmd->add_option("--pred", ev.pred, "Predicted sequence or directory")->required();
  eval_cmd->add_option("--truth", ev.truth, "Ground-truth sequence or gen-data directory")
      ->required();
  eval_cmd->add_option("--skeleton", ev.skeleton, "Skeleton JSON (single-sequence mode)");
  eval_cmd->add_option("--manifest", ev.manifest, "Manifest lock (directory mode)");
  eval_cmd->add_option("--scale", ev.scale, "Body scale for scaled MPJPE")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Report JSON; a CSV is written beside it")->required();

  VerifyOptions ve;
  auto* verify_cmd = app.add_subcommand("verify", "Check the closed-form pushforward covariance");
  verify_cmd->add_option("--points", ve.points)->capture_default_str();
  verify_cmd->add_option("--samples", ve.samples, "Monte Carlo samples per point")
      ->capture_default_str();
  verify_cmd->add_option("--seed", ve.seed)->capture_default_str();
  verify_cmd->add_option("--sigma-threshold", ve.sigma_threshold,
                         "Per-entry bound in standard errors (default: Bonferroni-adjusted)");
  verify_cmd->add_flag("--inject-sign-error", ve.inject_sign_error,
                       "Test hook: flip the sign of one covariance term");
  verify_cmd->add_option("--out", ve.out, "Report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::ostringstream sink;
  std::ostream& log = quiet ? static_cast<std::ostream&>(sink) : out;
  try {
    if (*gen_cmd) return gen_data(gen, log);
    if (*train_cmd) return train(tr, log);
    if (*infer_cmd) return infer(in, log);
    if (*eval_cmd) return eval(ev, log);
    if (*verify_cmd) return verify(ve, log);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace inpose::cli
