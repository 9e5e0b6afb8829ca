#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "avwm/config.hpp"
#include "avwm/errors.hpp"
#include "avwm/metrics.hpp"
#include "avwm/planner.hpp"
#include "avwm/trainer.hpp"

namespace fs = std::filesystem;
using avwm::config::RunConfig;

namespace {

std::string default_data_dir() {
  const char* env = std::getenv("AVWM_DATA_DIR");
  return env ? env : "data";
}

std::string config_key_help() {
  std::string out = "Config keys (set via --config FILE or --set key=value):\n";
  for (const auto& k : RunConfig().keys()) {
    out += "  " + k.name + " = " + k.value;
    out.append(k.name.size() + k.value.size() < 30 ? 30 - k.name.size() - k.value.size() : 1,
               ' ');
    out += k.description + "\n";
  }
  return out;
}

RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides, uint64_t* seed_flag) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = RunConfig::load(config_path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw avwm::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed_flag) cfg.seed = *seed_flag;
  return cfg;
}

int cmd_gen_data(const RunConfig& cfg, const std::string& data_dir) {
  avwm::trajgen::DatasetManifest manifest =
      avwm::trajgen::build_dataset(data_dir, cfg.dataset_config());
  int total = 0;
  for (const auto& [split, records] : manifest.split_trajectories) {
    std::printf("%s: %zu scenes, %zu trajectories\n", split.c_str(),
                manifest.split_scenes.at(split).size(), records.size());
    total += static_cast<int>(records.size());
  }
  std::printf("wrote %d trajectories under %s\n", total, data_dir.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& ckpt_dir,
              const std::string& stage, const std::string& ablation) {
  const avwm::trainer::AblationMode mode = avwm::trainer::ablation_from_string(ablation);
  avwm::trainer::TrainerConfig tcfg = cfg.trainer_config();
  avwm::avcdit::ModelConfig data_model = tcfg.model;
  avwm::trainer::Dataset data = avwm::trainer::Dataset::load(
      data_dir, data_model, {"train"}, cfg.threads <= 0 ? 0 : cfg.threads);

  fs::create_directories(ckpt_dir);
  std::ofstream log(fs::path(ckpt_dir) / "train_log.txt", std::ios::app);

  if (mode == avwm::trainer::AblationMode::no_stagewise || stage == "all") {
    const std::string ckpt = avwm::trainer::run_training(tcfg, data, mode, ckpt_dir, &log);
    std::printf("final checkpoint: %s\n", ckpt.c_str());
    return 0;
  }
  const int stage_num = std::stoi(stage);
  const avwm::trainer::StageResult result =
      avwm::trainer::run_stage(tcfg, data, stage_num, mode, ckpt_dir, &log);
  std::printf("stage %d done: loss %.6f -> %.6f, checkpoint %s\n", stage_num, result.first_loss,
              result.final_loss, result.checkpoint.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& data_dir, const std::string& mode,
             const std::string& ckpt, bool oracle, const std::string& split,
             const std::string& out_path, const std::string& dump_dir) {
  const avwm::avcdit::ModelConfig model_cfg = cfg.model_config();
  avwm::trainer::Dataset data = avwm::trainer::Dataset::load(
      data_dir, model_cfg, {split}, cfg.threads <= 0 ? 0 : cfg.threads);
  avwm::diffusion::NoiseSchedule schedule(cfg.schedule_config());

  avwm::metrics::EvalConfig eval = cfg.eval_config();
  eval.mode = avwm::metrics::gen_mode_from_string(mode);
  eval.oracle = oracle;
  eval.dump_dir = dump_dir;

  std::unique_ptr<avwm::ndgrad::ParamStore> params;
  if (!oracle) {
    if (ckpt.empty()) throw avwm::UsageError("eval: --ckpt is required unless --oracle is set");
    params = std::make_unique<avwm::ndgrad::ParamStore>(avwm::ndgrad::ParamStore::load(ckpt));
  }
  const avwm::metrics::EvalReport report =
      avwm::metrics::eval_harness(model_cfg, params.get(), schedule, data, split, eval);
  std::fputs(report.render_text().c_str(), stdout);
  if (!out_path.empty()) {
    report.save(out_path);
    std::printf("report written to %s\n", out_path.c_str());
  }
  return 0;
}

int cmd_plan(const RunConfig& cfg, const std::string& wm, const std::string& ckpt,
             const std::string& out_path) {
  const avwm::planner::WmMode mode = avwm::planner::wm_mode_from_string(wm);
  avwm::planner::SuiteConfig suite = cfg.suite_config();

  avwm::avcdit::ModelConfig model_cfg = cfg.model_config();
  std::unique_ptr<avwm::ndgrad::ParamStore> params;
  std::unique_ptr<avwm::diffusion::NoiseSchedule> schedule;
  if (mode == avwm::planner::WmMode::learned) {
    if (ckpt.empty()) throw avwm::UsageError("plan: --ckpt is required for --wm learned");
    params = std::make_unique<avwm::ndgrad::ParamStore>(avwm::ndgrad::ParamStore::load(ckpt));
    schedule = std::make_unique<avwm::diffusion::NoiseSchedule>(cfg.schedule_config());
  }

  std::vector<std::pair<std::string, avwm::planner::NavMetrics>> rows;
  if (mode != avwm::planner::WmMode::none) {
    const avwm::planner::SuiteResult baseline =
        avwm::planner::run_suite(suite, avwm::planner::WmMode::none, nullptr, nullptr, nullptr);
    rows.emplace_back("policy", baseline.metrics);
  }
  const avwm::planner::SuiteResult result = avwm::planner::run_suite(
      suite, mode, mode == avwm::planner::WmMode::learned ? &model_cfg : nullptr, params.get(),
      schedule.get());
  char label[64];
  std::snprintf(label, sizeof label, "%s n=%d B=%d k=%d", wm.c_str(), suite.planner.candidates,
                suite.planner.beam_width, suite.planner.depth);
  rows.emplace_back(mode == avwm::planner::WmMode::none ? "policy" : label, result.metrics);

  std::fputs(avwm::planner::render_nav_table(rows).c_str(), stdout);
  if (!out_path.empty()) {
    avwm::planner::save_nav_results(rows, suite, out_path);
    std::printf("results written to %s\n", out_path.c_str());
  }
  return 0;
}

int cmd_inspect(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw avwm::UsageError("inspect: cannot open " + path);
  std::string magic;
  std::getline(in, magic);
  in.close();

  if (magic == "AVWM-CKPT v1") {
    const avwm::ndgrad::ParamStore store = avwm::ndgrad::ParamStore::load(path);
    std::map<std::string, int64_t> group_counts;
    for (const auto& [name, e] : store.entries())
      group_counts[avwm::ndgrad::to_string(e.group)] += e.tensor.size();
    std::printf("checkpoint: %zu tensors, %lld values\n", store.size(),
                static_cast<long long>(store.num_values()));
    for (const auto& [group, count] : group_counts)
      std::printf("  %-16s %10lld\n", group.c_str(), static_cast<long long>(count));
  } else if (magic == "AVWM-TRAJ v1") {
    const avwm::trajgen::Trajectory t = avwm::trajgen::Trajectory::load(path);
    std::printf("trajectory: scene %s, pattern %s, %d frames, %dx%d px, %d samples @ %d Hz\n",
                t.scene_id.c_str(), avwm::trajgen::to_string(t.pattern), t.length(), t.height,
                t.width, t.samples, t.sample_rate);
    std::printf("  start (%.2f, %.2f, %.2f), total reward %.3f\n", t.start_pose.x,
                t.start_pose.y, t.start_pose.theta, t.cumulative_reward(0, t.length()));
  } else if (magic == "AVWM-SCENE v1") {
    const avwm::soundworld::Scene s = avwm::soundworld::Scene::load(path);
    std::printf("scene %s: %dx%d cells at %.2f m, source (%.2f, %.2f)\n", s.scene_id().c_str(),
                s.width(), s.height(), s.cell_size(), s.source_x(), s.source_y());
    std::printf("  %zu source-connected free cells\n", s.connected_free_cells().size());
  } else if (magic == "AVWM-MANIFEST v1") {
    const avwm::trajgen::DatasetManifest m = avwm::trajgen::DatasetManifest::load(path);
    std::printf("dataset: seed %llu, %d scenes, image %dx%d, %d Hz\n",
                static_cast<unsigned long long>(m.seed), m.num_scenes, m.image_size,
                m.image_size, m.sample_rate);
    for (const auto& [split, records] : m.split_trajectories)
      std::printf("  %-6s %3zu scenes %5zu trajectories\n", split.c_str(),
                  m.split_scenes.at(split).size(), records.size());
  } else if (magic == "AVWM-EVAL v1") {
    std::fputs(avwm::metrics::EvalReport::load(path).render_text().c_str(), stdout);
  } else if (magic.find('=') != std::string::npos) {
    std::fputs(RunConfig::load(path).dump().c_str(), stdout);
  } else {
    throw avwm::UsageError("inspect: unrecognized file format: " + path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual world model: synthetic environment, conditional diffusion "
               "transformer, three-stage training, and beam-search planning"};
  app.require_subcommand(1);
  app.footer(config_key_help());

  std::string config_path;
  std::vector<std::string> overrides;
  std::string data_dir = default_data_dir();
  uint64_t seed_flag = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--set", overrides, "override one config key (key=value), repeatable");
  app.add_option("--data-dir", data_dir, "dataset root (env AVWM_DATA_DIR)");
  app.add_option("--seed", seed_flag, "override the config seed")->each([&](const std::string&) {
    seed_set = true;
  });

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  int gen_scenes = -1, gen_per_scene = -1;
  gen->add_option("--scenes", gen_scenes, "number of scenes");
  gen->add_option("--per-scene", gen_per_scene, "trajectories per scene");

  auto* train = app.add_subcommand("train", "run one training stage (or all)");
  std::string stage = "all", ablation = "none", ckpt_dir = "checkpoints";
  train->add_option("--stage", stage, "1 | 2 | 3 | all")
      ->check(CLI::IsMember({"1", "2", "3", "all"}));
  train->add_option("--ablation", ablation, "none | no_experts | no_stagewise")
      ->check(CLI::IsMember({"none", "no_experts", "no_stagewise"}));
  train->add_option("--ckpt-dir", ckpt_dir, "checkpoint directory");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  std::string eval_mode = "fixed-step", eval_ckpt, eval_split = "test", eval_out, eval_dump;
  bool eval_oracle = false;
  eval->add_option("--mode", eval_mode, "fixed-step | rollout")
      ->check(CLI::IsMember({"fixed-step", "fixed_step", "rollout"}));
  eval->add_option("--ckpt", eval_ckpt, "checkpoint to evaluate");
  eval->add_flag("--oracle", eval_oracle, "feed ground-truth futures (harness self-test)");
  eval->add_option("--split", eval_split, "dataset split");
  eval->add_option("--out", eval_out, "write the structured report here");
  eval->add_option("--dump", eval_dump, "dump predicted/reference PPM + WAV here");

  auto* plan = app.add_subcommand("plan", "run the navigation episode suite");
  std::string wm = "none", plan_ckpt, plan_out;
  int plan_n = -1, plan_b = -1, plan_k = -1, plan_episodes = -1;
  plan->add_option("--wm", wm, "learned | oracle | none")
      ->check(CLI::IsMember({"learned", "oracle", "none"}));
  plan->add_option("--ckpt", plan_ckpt, "checkpoint for --wm learned");
  plan->add_option("--n", plan_n, "candidate actions per expansion");
  plan->add_option("--B", plan_b, "beam width");
  plan->add_option("--k", plan_k, "rollout depth");
  plan->add_option("--episodes", plan_episodes, "episode count");
  plan->add_option("--out", plan_out, "write machine-readable results here");

  auto* inspect = app.add_subcommand("inspect", "describe a checkpoint/trajectory/scene/...");
  std::string inspect_path;
  inspect->add_option("path", inspect_path, "file to inspect")->required();

  // Global options (--seed, --set, ...) remain valid after the subcommand.
  for (auto* sub : {gen, train, eval, plan, inspect}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunConfig cfg = resolve_config(config_path, overrides, seed_set ? &seed_flag : nullptr);
    if (gen->parsed()) {
      if (gen_scenes > 0) cfg.scenes = gen_scenes;
      if (gen_per_scene > 0) cfg.per_scene = gen_per_scene;
      return cmd_gen_data(cfg, data_dir);
    }
    if (train->parsed()) return cmd_train(cfg, data_dir, ckpt_dir, stage, ablation);
    if (eval->parsed())
      return cmd_eval(cfg, data_dir, eval_mode, eval_ckpt, eval_oracle, eval_split, eval_out,
                      eval_dump);
    if (plan->parsed()) {
      if (plan_n > 0) cfg.plan_n = plan_n;
      if (plan_b > 0) cfg.plan_b = plan_b;
      if (plan_k > 0) cfg.plan_k = plan_k;
      if (plan_episodes > 0) cfg.plan_episodes = plan_episodes;
      return cmd_plan(cfg, wm, plan_ckpt, plan_out);
    }
    if (inspect->parsed()) return cmd_inspect(inspect_path);
  } catch (const avwm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
