#pragma once

#include <string>
#include <variant>
#include <vector>

#include "avwm/avcdit.hpp"
#include "avwm/diffusion.hpp"
#include "avwm/metrics.hpp"
#include "avwm/planner.hpp"
#include "avwm/trainer.hpp"
#include "avwm/trajgen.hpp"

namespace avwm::config {

// Every tunable in one place, each with a documented default. Parsed config
// files echo back byte-identically (canonical key order, %.17g reals);
// unknown keys are rejected.
struct RunConfig {
  // environment / rendering
  int image_size = 32;
  int sample_rate = 16000;
  double cell_size = 0.1;
  int scene_cells = 100;
  bool reflection = false;

  // dataset
  int scenes = 12;
  int per_scene = 20;
  double min_separation = 1.0;
  double max_source_distance = 20.0;
  int max_frames = 500;

  // tokenizers / model
  int patch = 8;
  int dct_frame = 300;
  int width = 64;
  int blocks = 4;
  int heads = 4;
  int ffn_mult = 4;
  int context_frames = 4;
  int offset_min = 1;
  int offset_max = 16;
  bool modality_experts = true;
  bool learned_variance = true;

  // diffusion
  int diffusion_steps = 100;
  double beta_min = 1e-4;
  double beta_max = 0.065;
  double lambda_vlb = 0.001;
  std::string loss_norm = "mean";  // mean | sum
  bool clip_denoised = true;

  // training
  int stage1_steps = 2000;
  int stage2_steps = 2000;
  int stage3_steps = 1000;
  double stage1_lr = 1.6e-4;
  double stage2_lr = 8e-4;
  double stage3_lr = 1.6e-4;
  int stage1_batch = 32;
  int stage2_batch = 32;
  int stage3_batch = 16;
  double weight_decay = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int targets_per_window = 4;
  int checkpoint_every = 500;

  // evaluation
  int eval_windows = 6;
  int eval_runs = 3;
  int eval_horizon = 16;

  // planning
  int plan_n = 2;
  int plan_b = 3;
  int plan_k = 5;
  double plan_gamma = 0.99;
  int plan_episodes = 100;
  int plan_scenes = 10;
  double plan_min_start = 2.0;
  double plan_max_start = 10.0;
  int episode_cap = 500;

  // misc
  uint64_t seed = 0;
  int threads = 0;

  // --- registry-backed operations ---
  void set(const std::string& key, const std::string& value);  // throws ConfigError
  std::string dump() const;                                    // canonical text
  static RunConfig parse_text(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  struct KeyInfo {
    std::string name;
    std::string value;  // current value, canonical form
    std::string description;
  };
  std::vector<KeyInfo> keys() const;

  // --- derived module configs ---
  avcdit::ModelConfig model_config() const;
  diffusion::ScheduleConfig schedule_config() const;
  trainer::TrainerConfig trainer_config() const;
  trajgen::DatasetConfig dataset_config() const;
  soundworld::RenderConfig render_config() const;
  metrics::EvalConfig eval_config() const;
  planner::SuiteConfig suite_config() const;
};

}  // namespace avwm::config
