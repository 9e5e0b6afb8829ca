#include "avwm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "avwm/errors.hpp"
#include "avwm/parallel.hpp"

namespace avwm::trainer {

using diffusion::EncodedTrajectory;
using diffusion::LossMask;
using ndgrad::ParamGroup;

const char* to_string(AblationMode m) {
  switch (m) {
    case AblationMode::none: return "none";
    case AblationMode::no_experts: return "no_experts";
    case AblationMode::no_stagewise: return "no_stagewise";
  }
  return "?";
}

AblationMode ablation_from_string(const std::string& s) {
  if (s == "none") return AblationMode::none;
  if (s == "no_experts") return AblationMode::no_experts;
  if (s == "no_stagewise") return AblationMode::no_stagewise;
  throw ConfigError("unknown ablation mode: " + s);
}

Dataset Dataset::load(const std::string& root, const avcdit::ModelConfig& cfg,
                      const std::set<std::string>& splits, unsigned threads) {
  namespace fs = std::filesystem;
  Dataset ds;
  ds.manifest_ = trajgen::DatasetManifest::load((fs::path(root) / "manifest.txt").string());

  for (const auto& [split, scene_ids] : ds.manifest_.split_scenes) {
    if (!splits.count(split)) continue;
    for (const auto& id : scene_ids)
      ds.scenes_[id] = std::make_shared<soundworld::Scene>(
          soundworld::Scene::load((fs::path(root) / "scenes" / (id + ".scene")).string()));
  }
  for (const auto& [split, records] : ds.manifest_.split_trajectories) {
    if (!splits.count(split)) continue;
    auto& out = ds.trajectories_[split];
    out.resize(records.size());
    parallel_for(
        records.size(),
        [&](size_t i) {
          trajgen::Trajectory t =
              trajgen::Trajectory::load((fs::path(root) / records[i].path).string());
          out[i] = diffusion::encode_trajectory(std::move(t), *ds.scenes_.at(records[i].scene_id),
                                                cfg);
        },
        threads);
  }
  return ds;
}

const std::vector<EncodedTrajectory>& Dataset::split(const std::string& name) const {
  auto it = trajectories_.find(name);
  if (it == trajectories_.end()) throw UsageError("dataset: split not loaded: " + name);
  return it->second;
}

const soundworld::Scene& Dataset::scene(const std::string& scene_id) const {
  auto it = scenes_.find(scene_id);
  if (it == scenes_.end()) throw UsageError("dataset: scene not loaded: " + scene_id);
  return *it->second;
}

StagePlan stage_plan(const TrainerConfig& cfg, int stage, AblationMode mode) {
  if (stage < 1 || stage > 3) throw UsageError("stage must be 1, 2 or 3");
  StagePlan plan;
  plan.stage = stage;
  if (mode == AblationMode::no_stagewise) {
    // Single joint stage: stage-3 recipe with stage-1's step budget.
    plan.mode = LossMask::joint;
    plan.trainable = {ParamGroup::self_attn,      ParamGroup::cross_attn,
                      ParamGroup::visual_expert,  ParamGroup::audio_expert,
                      ParamGroup::visual_adaptor, ParamGroup::audio_adaptor,
                      ParamGroup::visual_head,    ParamGroup::audio_head,
                      ParamGroup::conditioning};
    plan.lr = cfg.stage_lrs[2];
    plan.batch_size = cfg.stage_batches[2];
    plan.steps = cfg.stage_steps[0];
    return plan;
  }
  switch (stage) {
    case 1:
      plan.mode = LossMask::visual_only;
      plan.trainable = {ParamGroup::self_attn,      ParamGroup::cross_attn,
                        ParamGroup::visual_expert,  ParamGroup::visual_adaptor,
                        ParamGroup::visual_head,    ParamGroup::conditioning};
      break;
    case 2:
      plan.mode = LossMask::audio_reward_only;
      plan.trainable = {ParamGroup::audio_expert, ParamGroup::audio_adaptor,
                        ParamGroup::audio_head};
      break;
    case 3:
      plan.mode = LossMask::joint;
      plan.trainable = {ParamGroup::self_attn,      ParamGroup::cross_attn,
                        ParamGroup::visual_expert,  ParamGroup::audio_expert,
                        ParamGroup::visual_adaptor, ParamGroup::audio_adaptor,
                        ParamGroup::visual_head,    ParamGroup::audio_head,
                        ParamGroup::conditioning};
      break;
  }
  plan.lr = cfg.stage_lrs[stage - 1];
  plan.batch_size = cfg.stage_batches[stage - 1];
  plan.steps = cfg.stage_steps[stage - 1];
  return plan;
}

Trainer::Trainer(TrainerConfig cfg, const Dataset* data, int stage, AblationMode mode)
    : cfg_(std::move(cfg)),
      data_(data),
      mode_(mode),
      plan_(stage_plan(cfg_, stage, mode)),
      schedule_(cfg_.schedule) {
  if (mode == AblationMode::no_experts) cfg_.model.modality_experts = false;
  cfg_.model.validate();
  opt_ = std::make_unique<ndgrad::AdamW>(ndgrad::AdamW::Options{
      plan_.lr, cfg_.adam_beta1, cfg_.adam_beta2, 1e-8, cfg_.weight_decay});
}

void Trainer::init_fresh() {
  params_ = std::make_unique<ndgrad::ParamStore>(avcdit::init_params(cfg_.model, cfg_.seed));
}

void Trainer::load_params(const std::string& checkpoint) {
  params_ = std::make_unique<ndgrad::ParamStore>(ndgrad::ParamStore::load(checkpoint));
  const std::string opt_path = checkpoint + ".opt";
  if (std::filesystem::exists(opt_path)) opt_->load(opt_path);
}

void Trainer::save(const std::string& checkpoint) const {
  params_->save(checkpoint);
  opt_->save(checkpoint + ".opt");
}

std::vector<Trainer::BatchExample> Trainer::build_batch(int step_index) const {
  const auto& split = data_->split("train");
  std::vector<size_t> usable;
  for (size_t i = 0; i < split.size(); ++i)
    if (split[i].length() >= cfg_.targets_per_window + 2) usable.push_back(i);
  if (usable.empty()) throw UsageError("trainer: no trajectory is long enough to train on");

  Rng rng = Rng::derive(cfg_.seed, 0x5741 + plan_.stage, static_cast<uint64_t>(step_index));
  const int windows = std::max(1, plan_.batch_size / cfg_.targets_per_window);
  std::vector<BatchExample> batch;
  batch.reserve(static_cast<size_t>(windows) * cfg_.targets_per_window);

  for (int w = 0; w < windows; ++w) {
    const EncodedTrajectory& et = split[usable[rng.below(usable.size())]];
    // Keep at least targets_per_window distinct offsets available.
    const int t_hi = et.length() - 1 - cfg_.targets_per_window;
    const int t = static_cast<int>(rng.range(0, t_hi));
    const int dt_hi = std::min(cfg_.model.offset_max, et.length() - 1 - t);
    // Sample distinct temporal offsets without replacement.
    std::vector<int> offsets;
    for (int dt = cfg_.model.offset_min; dt <= dt_hi; ++dt) offsets.push_back(dt);
    for (int i = static_cast<int>(offsets.size()) - 1; i > 0; --i)
      std::swap(offsets[i], offsets[rng.below(static_cast<uint64_t>(i + 1))]);
    const int draws = std::min<int>(cfg_.targets_per_window, static_cast<int>(offsets.size()));
    for (int i = 0; i < draws; ++i) {
      BatchExample ex;
      ex.example = diffusion::make_training_example(et, t, offsets[i], cfg_.model);
      ex.k = static_cast<int>(rng.range(1, schedule_.steps()));
      ex.noised = diffusion::forward_noise(ex.example.clean, ex.k, schedule_, rng);
      batch.push_back(std::move(ex));
    }
  }
  return batch;
}

TrainLogEntry Trainer::train_step(int step_index) {
  if (!params_) throw UsageError("trainer: parameters not initialized");
  const std::vector<BatchExample> batch = build_batch(step_index);
  params_->zero_grad();

  TrainLogEntry entry{step_index, plan_.stage, 0.0, 0.0, 0.0, plan_.lr};
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    avcdit::ConditioningInputs cond = ex.example.cond;
    cond.diffusion_step = ex.k;
    const avcdit::ModelOutput out =
        avcdit::model_forward(cfg_.model, *params_, ex.noised.noised, ex.example.context, cond);
    diffusion::LossBreakdown loss =
        diffusion::training_loss(cfg_.model, out, ex.example.clean, ex.noised, ex.k, schedule_,
                                 plan_.mode, cfg_.norm, cfg_.lambda_vlb);
    entry.loss_v += inv_b * loss.simple_visual;
    entry.loss_ar += inv_b * loss.simple_audio_reward;
    entry.loss_total += inv_b * loss.total.item();
    ndgrad::Tensor scaled = ndgrad::scalar_mul(loss.total, inv_b);
    ndgrad::backward(scaled);
  }
  opt_->step(*params_, plan_.trainable);
  return entry;
}

double Trainer::eval_loss(int step_index, LossMask mask) const {
  const std::vector<BatchExample> batch = build_batch(step_index);
  double total = 0.0;
  for (const auto& ex : batch) {
    avcdit::ConditioningInputs cond = ex.example.cond;
    cond.diffusion_step = ex.k;
    const avcdit::ModelOutput out =
        avcdit::model_forward(cfg_.model, *params_, ex.noised.noised, ex.example.context, cond);
    diffusion::LossBreakdown loss = diffusion::training_loss(
        cfg_.model, out, ex.example.clean, ex.noised, ex.k, schedule_, mask, cfg_.norm,
        cfg_.lambda_vlb);
    total += loss.total.item() / batch.size();
  }
  return total;
}

namespace {

std::string stage_checkpoint(const std::string& dir, int stage, AblationMode mode) {
  namespace fs = std::filesystem;
  const std::string name =
      mode == AblationMode::no_stagewise ? "joint.ckpt" : "stage" + std::to_string(stage) + ".ckpt";
  return (fs::path(dir) / name).string();
}

void write_log(std::ostream* log, const TrainLogEntry& e) {
  if (!log) return;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d, %d, %.6f, %.6f, %.6f, %.6g\n", e.step, e.stage, e.loss_v,
                e.loss_ar, e.loss_total, e.lr);
  (*log) << buf;
  log->flush();
}

}  // namespace

StageResult run_stage(const TrainerConfig& cfg, const Dataset& data, int stage,
                      AblationMode mode, const std::string& ckpt_dir, std::ostream* log) {
  namespace fs = std::filesystem;
  fs::create_directories(ckpt_dir);
  Trainer trainer(cfg, &data, stage, mode);
  if (stage == 1 || mode == AblationMode::no_stagewise) {
    trainer.init_fresh();
  } else {
    const std::string prev = stage_checkpoint(ckpt_dir, stage - 1, mode);
    if (!fs::exists(prev))
      throw UsageError("train: stage " + std::to_string(stage) +
                       " requires the prerequisite checkpoint " + prev);
    trainer.load_params(prev);
  }

  const std::string out_path = stage_checkpoint(ckpt_dir, stage, mode);
  StageResult result;
  result.checkpoint = out_path;
  for (int step = 0; step < trainer.plan().steps; ++step) {
    const TrainLogEntry entry = trainer.train_step(step);
    if (step == 0) result.first_loss = entry.loss_total;
    result.final_loss = entry.loss_total;
    write_log(log, entry);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      trainer.save(out_path);
  }
  trainer.save(out_path);

  // Catastrophic-forgetting monitor after the joint stage: compare the
  // visual loss on a fixed batch against the stage-1 checkpoint's. Logged,
  // not asserted.
  if (stage == 3 && mode != AblationMode::no_stagewise && log) {
    const std::string stage1 = stage_checkpoint(ckpt_dir, 1, mode);
    if (fs::exists(stage1)) {
      Trainer probe(cfg, &data, 3, mode);
      probe.load_params(stage1);
      const double before = probe.eval_loss(0, LossMask::visual_only);
      const double after = trainer.eval_loss(0, LossMask::visual_only);
      (*log) << "# forgetting_check stage1_visual=" << before << " stage3_visual=" << after
             << " ratio=" << (before > 0 ? after / before : 0.0) << "\n";
    }
  }
  return result;
}

std::string run_training(const TrainerConfig& cfg, const Dataset& data, AblationMode mode,
                         const std::string& ckpt_dir, std::ostream* log) {
  if (mode == AblationMode::no_stagewise) {
    return run_stage(cfg, data, 3, mode, ckpt_dir, log).checkpoint;
  }
  StageResult last;
  for (int stage = 1; stage <= 3; ++stage) last = run_stage(cfg, data, stage, mode, ckpt_dir, log);
  return last.checkpoint;
}

}  // namespace avwm::trainer
