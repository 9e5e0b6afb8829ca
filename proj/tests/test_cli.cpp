#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "avwm/config.hpp"
#include "avwm/errors.hpp"

using namespace avwm;
using config::RunConfig;

namespace fs = std::filesystem;

namespace {

// Path of the avwm binary, provided by CMake through an environment variable.
std::string avwm_bin() {
  const char* env = std::getenv("AVWM_BIN");
  REQUIRE(env != nullptr);
  return env;
}

struct RunResult {
  int exit_code;
  std::string output;
};

RunResult run(const std::string& args) {
  const auto out_path = fs::temp_directory_path() / "avwm_cli_out.txt";
  const std::string cmd = avwm_bin() + " " + args + " > " + out_path.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out_path);
  std::stringstream buf;
  buf << in.rdbuf();
  fs::remove(out_path);
  return {WEXITSTATUS(status), buf.str()};
}

}  // namespace

TEST_CASE("config dump/parse round-trips byte-identically") {
  RunConfig cfg;
  cfg.set("width", "48");
  cfg.set("beta_max", "0.07");
  cfg.set("loss_norm", "sum");
  const std::string once = cfg.dump();
  RunConfig parsed = RunConfig::parse_text(once);
  CHECK(parsed.dump() == once);
  CHECK(parsed.width == 48);
  CHECK(parsed.beta_max == 0.07);
  CHECK(parsed.loss_norm == "sum");
}

TEST_CASE("unknown keys and malformed values are rejected") {
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.set("no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(cfg.set("width", "abc"), ConfigError);
  CHECK_THROWS_AS(cfg.set("modality_experts", "yes"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("width 64\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse_text("bogus = 3\n"), ConfigError);
}

TEST_CASE("comments and blank lines are tolerated") {
  RunConfig cfg = RunConfig::parse_text("# a comment\n\n  width = 32\nheads = 2\n");
  CHECK(cfg.width == 32);
  CHECK(cfg.heads == 2);
}

TEST_CASE("derived module configs reflect the keys") {
  RunConfig cfg;
  cfg.set("width", "32");
  cfg.set("image_size", "16");
  cfg.set("sample_rate", "8000");
  cfg.set("stage2_lr", "0.001");
  const auto model = cfg.model_config();
  CHECK(model.width == 32);
  CHECK(model.visual.image_size == 16);
  CHECK(model.audio.frame_samples == 1200);  // 0.15 s at 8 kHz
  const auto trainer_cfg = cfg.trainer_config();
  CHECK(trainer_cfg.stage_lrs[1] == 0.001);
}

TEST_CASE("help documents every config key with its default") {
  const RunResult help = run("--help");
  CHECK(help.exit_code == 0);
  for (const auto& key : RunConfig().keys()) {
    CAPTURE(key.name);
    CHECK(help.output.find(key.name + " = " + key.value) != std::string::npos);
  }
}

TEST_CASE("unknown subcommands and flags exit with status 2") {
  CHECK(run("frobnicate").exit_code == 2);
  CHECK(run("eval --no-such-flag").exit_code == 2);
}

TEST_CASE("train --stage 2 without a stage-1 checkpoint fails cleanly") {
  const auto dir = fs::temp_directory_path() / "avwm_cli_train_missing";
  fs::remove_all(dir);
  fs::create_directories(dir);
  // A miniature dataset so the command reaches the checkpoint check.
  const RunResult gen = run("--data-dir " + (dir / "data").string() +
                            " --set scene_cells=48 --set image_size=16 --set max_frames=300"
                            " gen-data --scenes 9 --per-scene 1 --seed 3");
  REQUIRE(gen.exit_code == 0);
  const RunResult r = run("--data-dir " + (dir / "data").string() +
                          " --set image_size=16 --set width=16 --set blocks=1 --set heads=2"
                          " --set context_frames=2 --set dct_frame=600"
                          " train --stage 2 --ckpt-dir " + (dir / "ckpt").string());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("prerequisite checkpoint") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("gen-data is deterministic: two runs produce identical trees") {
  const auto dir = fs::temp_directory_path() / "avwm_cli_det";
  fs::remove_all(dir);
  const std::string common =
      " --set scene_cells=48 --set image_size=16 gen-data --scenes 9 --per-scene 1 --seed 7";
  REQUIRE(run("--data-dir " + (dir / "a").string() + common).exit_code == 0);
  REQUIRE(run("--data-dir " + (dir / "b").string() + common).exit_code == 0);
  const int diff = std::system(("diff -r " + (dir / "a").string() + " " + (dir / "b").string() +
                                " > /dev/null 2>&1")
                                   .c_str());
  CHECK(WEXITSTATUS(diff) == 0);
  fs::remove_all(dir);
}

TEST_CASE("inspect understands every file format") {
  const auto dir = fs::temp_directory_path() / "avwm_cli_inspect";
  fs::remove_all(dir);
  fs::create_directories(dir);
  REQUIRE(run("--data-dir " + (dir / "data").string() +
              " --set scene_cells=48 --set image_size=16 gen-data --scenes 9 --per-scene 1"
              " --seed 11")
              .exit_code == 0);
  const RunResult manifest = run("inspect " + (dir / "data" / "manifest.txt").string());
  CHECK(manifest.exit_code == 0);
  CHECK(manifest.output.find("train") != std::string::npos);
  const RunResult scene =
      run("inspect " + (dir / "data" / "scenes" / "scene_000.scene").string());
  CHECK(scene.exit_code == 0);
  CHECK(scene.output.find("scene_000") != std::string::npos);
  // A trajectory from the manifest.
  trajgen::DatasetManifest m =
      trajgen::DatasetManifest::load((dir / "data" / "manifest.txt").string());
  const std::string traj = (dir / "data" / m.split_trajectories["train"][0].path).string();
  const RunResult t = run("inspect " + traj);
  CHECK(t.exit_code == 0);
  CHECK(t.output.find("frames") != std::string::npos);
  fs::remove_all(dir);
}
