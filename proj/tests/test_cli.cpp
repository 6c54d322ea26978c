// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "commands.hpp"
#include "inpose/inpose.hpp"

namespace inpose {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "inpose");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           ("inpose_cli_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_manifest(int frames, int sequences) {
    nlohmann::json seeds = nlohmann::json::array();
    for (int s = 0; s < sequences; ++s) seeds.push_back(s + 1);
    const nlohmann::json m = {{"grid",
                               {{"kinds", {"walk"}},
                                {"sigma_l", {0.01}},
                                {"sigma_r", {0.005}},
                                {"seeds", seeds},
                                {"frames", frames}}}};
    std::ofstream(path("manifest.json")) << m.dump();
    return path("manifest.json");
  }

  // Wide enough (hidden > 132 state columns) and trained long enough that DDIM stays bounded;
  // narrower or briefer models drift out of range mid-trajectory.
  std::vector<std::string> train_args(const std::string& data, const std::string& out,
                                      int window) const {
    return {"-q", "train", "--data", path(data), "--out", path(out), "--steps", "4000",
            "--batch-size", "32", "--hidden", "192", "--blocks", "1", "--window",
            std::to_string(window), "--seed", "3"};
  }

  fs::path dir_;
};

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"fly"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"verify", "--no-such-flag"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);

  const CliResult missing = run_cli({"gen-data", "--manifest", path("nope.json"), "--out", path("d")});
  EXPECT_EQ(missing.code, cli::kExitUsage);
  EXPECT_NE(missing.err.find("manifest not found"), std::string::npos);

  std::ofstream(path("bad.json")) << R"({"grid": {"presets": ["default"]}})";
  EXPECT_EQ(run_cli({"gen-data", "--manifest", path("bad.json"), "--out", path("d")}).code,
            cli::kExitUsage);
  std::ofstream(path("garbage.json")) << "{not json";
  EXPECT_EQ(run_cli({"gen-data", "--manifest", path("garbage.json"), "--out", path("d")}).code,
            cli::kExitUsage);
}

TEST_F(CliTest, GenDataRerunIsByteIdentical) {
  const std::string manifest = write_manifest(50, 2);
  ASSERT_EQ(run_cli({"-q", "gen-data", "--manifest", manifest, "--out", path("a")}).code, 0);
  ASSERT_EQ(run_cli({"gen-data", "-q", "--manifest", path("a/manifest.lock.json"), "--out",
                     path("b")}).code,
            0);
  for (const char* cell : {"cell_000", "cell_001"}) {
    for (const char* file : {"truth.seq", "measurements.jsonl", "skeleton.json", "cell.json"}) {
      const fs::path rel = fs::path(cell) / file;
      ASSERT_TRUE(fs::exists(dir_ / "a" / rel)) << rel;
      EXPECT_EQ(slurp(dir_ / "a" / rel), slurp(dir_ / "b" / rel)) << rel;
    }
  }
  EXPECT_EQ(slurp(dir_ / "a/manifest.lock.json"), slurp(dir_ / "b/manifest.lock.json"));
}

TEST_F(CliTest, TrainRejectsWindowLongerThanData) {
  ASSERT_EQ(run_cli({"-q", "gen-data", "--manifest", write_manifest(30, 2), "--out", path("d")}).code,
            0);
  const CliResult r = run_cli({"-q", "train", "--data", path("d"), "--out", path("m.ck"),
                               "--steps", "2", "--window", "41"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("fewer than the window length"), std::string::npos) << r.err;
  EXPECT_EQ(run_cli({"-q", "train", "--data", path("d"), "--out", path("m.ck"), "--window", "0"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"-q", "train", "--data", path("empty"), "--out", path("m.ck")}).code,
            cli::kExitUsage);
}

TEST_F(CliTest, TrainInferEvalPipeline) {
  ASSERT_EQ(run_cli({"-q", "gen-data", "--manifest", write_manifest(90, 5), "--out", path("d")}).code,
            0);
  const CliResult t = run_cli(train_args("d", "m.ck", 30));
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(path("m.ck.loss.csv")));
  EXPECT_TRUE(fs::exists(path("m.ck.config.json")));

  const std::vector<std::string> infer = {"-q", "infer", "--data", path("d"), "--checkpoint",
                                          path("m.ck"), "--out", path("p1")};
  const CliResult i1 = run_cli(infer);
  ASSERT_EQ(i1.code, 0) << i1.err;
  std::vector<std::string> again = infer;
  again[7] = path("p2");
  ASSERT_EQ(run_cli(again).code, 0);
  EXPECT_EQ(slurp(dir_ / "p1/cell_000.seq"), slurp(dir_ / "p2/cell_000.seq"));

  const CliResult e = run_cli({"eval", "--pred", path("p1"), "--truth", path("d"), "--out",
                               path("report.json")});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto report = nlohmann::json::parse(slurp(dir_ / "report.json"));
  EXPECT_EQ(report.at("cells").size(), 5u);
  EXPECT_TRUE(fs::exists(path("report.csv")));
  EXPECT_NE(e.out.find("MPJPE"), std::string::npos);

  // Single-sequence eval needs the skeleton.
  EXPECT_EQ(run_cli({"eval", "--pred", path("p1/cell_000.seq"), "--truth",
                     path("d/cell_000/truth.seq"), "--out", path("r.json")}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"-q", "eval", "--pred", path("p1/cell_000.seq"), "--truth",
                     path("d/cell_000/truth.seq"), "--skeleton", path("d/cell_000/skeleton.json"),
                     "--out", path("r.json")}).code,
            0);

  // Resuming to a larger step count continues the loss history.
  std::vector<std::string> resume = train_args("d", "m2.ck", 30);
  resume[7] = "4010";
  resume.insert(resume.end(), {"--resume", path("m.ck")});
  ASSERT_EQ(run_cli(resume).code, 0);
  EXPECT_EQ(load_checkpoint(path("m2.ck")).step, 4010);
  EXPECT_EQ(load_checkpoint(path("m2.ck")).losses.size(), 4010u);
}

TEST_F(CliTest, InferInputErrors) {
  ASSERT_EQ(run_cli({"-q", "gen-data", "--manifest", write_manifest(30, 1), "--out", path("d")}).code,
            0);
  const CliResult r = run_cli({"infer", "--measurements", path("d/cell_000/measurements.jsonl"),
                               "--skeleton", path("d/cell_000/skeleton.json"), "--checkpoint",
                               path("missing.ck"), "--out", path("p.seq")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("checkpoint not found"), std::string::npos);
  EXPECT_EQ(run_cli({"infer", "--measurements", path("d/cell_000/measurements.jsonl"),
                     "--skeleton", path("d/cell_000/skeleton.json"), "--out", path("p.seq")}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"infer", "--data", path("d"), "--oracle", "x", "--covariance", "full",
                     "--out", path("p")}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"infer", "--data", path("d"), "--oracle", "x", "--eta", "3", "--out",
                     path("p")}).code,
            cli::kExitUsage);
}

TEST_F(CliTest, OracleInferenceReproducesTruth) {
  ASSERT_EQ(run_cli({"-q", "gen-data", "--manifest", write_manifest(60, 1), "--out", path("d")}).code,
            0);
  ASSERT_EQ(run_cli({"-q", "infer", "--data", path("d"), "--oracle", "cell", "--out", path("p"),
                     "--steps", "5"}).code,
            0);
  const PoseSequence pred = load_sequence(path("p/cell_000.seq"));
  const PoseSequence truth = load_sequence(path("d/cell_000/truth.seq"));
  EXPECT_LT((pred.rotations - truth.rotations).cwiseAbs().maxCoeff(), 1e-9);
}

/// Unguided deterministic DDIM over one window, written out independently of the sampler.
PoseSequence unguided_reference(const MeasurementSet& m, const Skeleton& skeleton,
                                const Denoiser& model, int steps, std::uint64_t seed) {
  const Schedule s = default_schedule(steps);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Conditioning cond = Conditioning::from_measurements(m);
  PoseState r(m.frames(), kFrameStateSize);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = normal(rng);
  for (int i = steps; i >= 1; --i) {
    const double a = s.alpha_bars[i], as = s.alpha_bars[i - 1];
    const PoseState eps = model.predict(r, {s.times[i], a}, &cond);
    const PoseState x0 = (r - std::sqrt(1 - a) * eps) / std::sqrt(a);
    for (Eigen::Index k = 0; k < r.size(); ++k) normal(rng);  // eta = 0: drawn, weight zero
    r = std::sqrt(as) * x0 + std::sqrt(1 - as) * eps;
  }
  PoseSequence out(m.frames());
  for (int f = 0; f < m.frames(); ++f) {
    RotationSet rot(kJointCount);
    for (int j = 0; j < kJointCount; ++j) {
      rot[j] = from_sixdof(r.row(f).segment<6>(6 * j).transpose());
      out.set_sixdof(f, j, to_sixdof(rot[j]));
    }
    out.root_translation.row(f) =
        recover_root_translation(skeleton, rot, m.location(f, 0)).transpose();
  }
  return out;
}

TEST_F(CliTest, ZeroGuidanceMatchesUnguidedSampling) {
  ASSERT_EQ(run_cli({"-q", "gen-data", "--manifest", write_manifest(60, 5), "--out", path("d")}).code,
            0);
  const CliResult t = run_cli(train_args("d", "m.ck", 25));
  ASSERT_EQ(t.code, 0) << t.err;
  // A 25-frame clip fits in one window.
  const MeasurementSet full = load_measurements(path("d/cell_000/measurements.jsonl"));
  save_measurements(path("clip.jsonl"), full.slice(0, 25));
  const std::vector<std::string> base = {"-q", "infer", "--measurements", path("clip.jsonl"),
                                         "--skeleton", path("d/cell_000/skeleton.json"),
                                         "--checkpoint", path("m.ck"), "--steps", "50", "--seed",
                                         "11", "--out"};
  std::vector<std::string> off = base, on = base;
  off.insert(off.end(), {path("off.seq"), "--guidance-scale", "0"});
  on.insert(on.end(), {path("on.seq")});
  ASSERT_EQ(run_cli(off).code, 0);
  ASSERT_EQ(run_cli(on).code, 0);

  const TrainState model = load_checkpoint(path("m.ck"));
  const PoseSequence ref = unguided_reference(full.slice(0, 25),
                                              load_skeleton(path("d/cell_000/skeleton.json")),
                                              model.model, 50, 11);
  const PoseSequence got = load_sequence(path("off.seq"));
  EXPECT_LT((got.rotations - ref.rotations).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((got.root_translation - ref.root_translation).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((load_sequence(path("on.seq")).rotations - ref.rotations).cwiseAbs().maxCoeff(), 1e-6);
}

TEST_F(CliTest, VerifyPassesAndCatchesInjectedSignError) {
  const CliResult ok = run_cli({"verify", "--points", "2", "--samples", "20000", "--out",
                                path("v.json")});
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("VERIFY PASS"), std::string::npos);
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir_ / "v.json")).at("passed").get<bool>());

  const CliResult bad = run_cli({"verify", "--points", "2", "--samples", "20000",
                                 "--inject-sign-error"});
  EXPECT_EQ(bad.code, cli::kExitFailure);
  EXPECT_NE(bad.out.find("MISMATCH Cov[r1, R(3,2)]"), std::string::npos) << bad.out;
  EXPECT_NE(bad.out.find("VERIFY FAIL"), std::string::npos);
}

TEST_F(CliTest, BinaryExitCodes) {
  const std::string bin = INPOSE_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int s = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("gen-data --manifest " + path("none.json") + " --out " + path("x")), 2);
  EXPECT_EQ(status("verify --points 1 --samples 5000 --inject-sign-error"), 1);
  EXPECT_EQ(status("verify --points 1 --samples 5000"), 0);
}

}  // namespace
}  // namespace inpose
