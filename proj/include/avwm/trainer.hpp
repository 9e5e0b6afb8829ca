#pragma once

#include <array>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "avwm/diffusion.hpp"

namespace avwm::trainer {

enum class AblationMode { none, no_experts, no_stagewise };
const char* to_string(AblationMode m);
AblationMode ablation_from_string(const std::string& s);

// Loaded dataset splits with encoded trajectories and their scenes, shared
// read-only by training, evaluation and planning.
class Dataset {
 public:
  static Dataset load(const std::string& root, const avcdit::ModelConfig& cfg,
                      const std::set<std::string>& splits, unsigned threads = 0);

  const trajgen::DatasetManifest& manifest() const { return manifest_; }
  const std::vector<diffusion::EncodedTrajectory>& split(const std::string& name) const;
  const soundworld::Scene& scene(const std::string& scene_id) const;
  bool has_split(const std::string& name) const { return trajectories_.count(name) > 0; }

 private:
  trajgen::DatasetManifest manifest_;
  std::map<std::string, std::vector<diffusion::EncodedTrajectory>> trajectories_;
  std::map<std::string, std::shared_ptr<soundworld::Scene>> scenes_;
};

struct TrainerConfig {
  avcdit::ModelConfig model;
  diffusion::ScheduleConfig schedule;
  diffusion::LossNorm norm = diffusion::LossNorm::per_modality_mean;
  double lambda_vlb = 0.001;
  double weight_decay = 0.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  std::array<int, 3> stage_steps = {2000, 2000, 1000};
  std::array<double, 3> stage_lrs = {1.6e-4, 8e-4, 1.6e-4};
  std::array<int, 3> stage_batches = {32, 32, 16};
  int targets_per_window = 4;  // temporal-offset draws per sampled window
  int checkpoint_every = 500;
  uint64_t seed = 0;
};

// Per-stage recipe: data mode, trainable groups, hyperparameters.
struct StagePlan {
  int stage = 1;
  diffusion::LossMask mode = diffusion::LossMask::joint;
  std::set<ndgrad::ParamGroup> trainable;
  double lr = 1.6e-4;
  int batch_size = 16;
  int steps = 1000;
};

StagePlan stage_plan(const TrainerConfig& cfg, int stage, AblationMode mode);

struct TrainLogEntry {
  int step = 0;
  int stage = 0;
  double loss_v = 0.0;
  double loss_ar = 0.0;
  double loss_total = 0.0;
  double lr = 0.0;
};

// Owns the parameters and optimizer for one stage run. Batches are derived
// from (seed, stage, step), so resuming from a checkpoint reproduces the
// next step's loss bit-exactly.
class Trainer {
 public:
  Trainer(TrainerConfig cfg, const Dataset* data, int stage, AblationMode mode);

  void init_fresh();                        // stage-1 style initialization
  void load_params(const std::string& checkpoint);  // params (+ .opt when present)
  void save(const std::string& checkpoint) const;   // params + .opt

  // One optimizer step over a freshly assembled batch.
  TrainLogEntry train_step(int step_index);

  // Batch loss without an update (monitoring; mask selectable).
  double eval_loss(int step_index, diffusion::LossMask mask) const;

  const ndgrad::ParamStore& params() const { return *params_; }
  ndgrad::ParamStore& params() { return *params_; }
  const StagePlan& plan() const { return plan_; }

 private:
  struct BatchExample {
    diffusion::TrainingExample example;
    int k;
    diffusion::NoisedTarget noised;
  };
  std::vector<BatchExample> build_batch(int step_index) const;

  TrainerConfig cfg_;
  const Dataset* data_;
  AblationMode mode_;
  StagePlan plan_;
  diffusion::NoiseSchedule schedule_;
  std::unique_ptr<ndgrad::ParamStore> params_;
  std::unique_ptr<ndgrad::AdamW> opt_;
};

struct StageResult {
  std::string checkpoint;
  double first_loss = 0.0;
  double final_loss = 0.0;
};

// Runs one stage end to end: loads the prerequisite checkpoint (stage > 1),
// trains, checkpoints periodically and at the end, appends log lines
// "step, stage, loss_v, loss_ar, loss_total, lr" to *log when given.
StageResult run_stage(const TrainerConfig& cfg, const Dataset& data, int stage,
                      AblationMode mode, const std::string& ckpt_dir, std::ostream* log);

// Runs the full recipe for a variant: three stages for none/no_experts, the
// single joint stage (stage-3 recipe, stage-1 budget) for no_stagewise.
// Returns the final checkpoint path.
std::string run_training(const TrainerConfig& cfg, const Dataset& data, AblationMode mode,
                         const std::string& ckpt_dir, std::ostream* log);

}  // namespace avwm::trainer
