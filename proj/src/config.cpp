#include "avwm/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "avwm/errors.hpp"

namespace avwm::config {

namespace {

struct Key {
  const char* name;
  const char* description;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  // Shortest decimal form that round-trips exactly.
  char buf[48];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

int parse_int(const std::string& name, const std::string& v) {
  try {
    size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: key " + name + " expects an integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& name, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: key " + name + " expects an unsigned integer, got '" + v + "'");
  }
}

double parse_double(const std::string& name, const std::string& v) {
  try {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: key " + name + " expects a real number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& name, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("config: key " + name + " expects true or false, got '" + v + "'");
}

#define INT_KEY(field, desc)                                              \
  Key {                                                                   \
    #field, desc, [](const RunConfig& c) { return std::to_string(c.field); }, \
        [](RunConfig& c, const std::string& v) { c.field = parse_int(#field, v); } \
  }
#define DBL_KEY(field, desc)                                            \
  Key {                                                                 \
    #field, desc, [](const RunConfig& c) { return fmt_double(c.field); }, \
        [](RunConfig& c, const std::string& v) { c.field = parse_double(#field, v); } \
  }
#define BOOL_KEY(field, desc)                                                          \
  Key {                                                                                \
    #field, desc, [](const RunConfig& c) { return c.field ? "true" : "false"; },       \
        [](RunConfig& c, const std::string& v) { c.field = parse_bool(#field, v); }    \
  }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      INT_KEY(image_size, "observation height and width in pixels"),
      INT_KEY(sample_rate, "audio sample rate in Hz (frame length = 0.15 s)"),
      DBL_KEY(cell_size, "occupancy-grid cell size in meters"),
      INT_KEY(scene_cells, "scene grid side length in cells"),
      BOOL_KEY(reflection, "add one first-order specular audio reflection"),
      INT_KEY(scenes, "number of procedural scenes in the dataset"),
      INT_KEY(per_scene, "nominal trajectories per scene"),
      DBL_KEY(min_separation, "minimum start-goal geodesic separation in meters"),
      DBL_KEY(max_source_distance, "maximum distance from the source along a trajectory"),
      INT_KEY(max_frames, "trajectory and episode frame cap"),
      INT_KEY(patch, "visual tokenizer patch size"),
      INT_KEY(dct_frame, "audio tokenizer DCT frame length in samples"),
      INT_KEY(width, "model width D"),
      INT_KEY(blocks, "number of transformer blocks"),
      INT_KEY(heads, "attention heads"),
      INT_KEY(ffn_mult, "feed-forward hidden multiplier"),
      INT_KEY(context_frames, "context length m in frames"),
      INT_KEY(offset_min, "minimum temporal offset T_min"),
      INT_KEY(offset_max, "maximum temporal offset T_max"),
      BOOL_KEY(modality_experts, "use per-modality expert feed-forward networks"),
      BOOL_KEY(learned_variance, "predict per-dimension reverse variances"),
      INT_KEY(diffusion_steps, "DDPM steps K"),
      DBL_KEY(beta_min, "first beta of the linear noise schedule"),
      DBL_KEY(beta_max, "last beta of the linear noise schedule"),
      DBL_KEY(lambda_vlb, "weight of the variational-bound loss term"),
      Key{"loss_norm", "per-modality loss normalization: mean | sum",
          [](const RunConfig& c) { return c.loss_norm; },
          [](RunConfig& c, const std::string& v) {
            if (v != "mean" && v != "sum")
              throw ConfigError("config: loss_norm must be 'mean' or 'sum', got '" + v + "'");
            c.loss_norm = v;
          }},
      BOOL_KEY(clip_denoised, "clamp predicted clean latents during sampling"),
      INT_KEY(stage1_steps, "optimizer steps for training stage 1"),
      INT_KEY(stage2_steps, "optimizer steps for training stage 2"),
      INT_KEY(stage3_steps, "optimizer steps for training stage 3"),
      DBL_KEY(stage1_lr, "learning rate for stage 1"),
      DBL_KEY(stage2_lr, "learning rate for stage 2"),
      DBL_KEY(stage3_lr, "learning rate for stage 3"),
      INT_KEY(stage1_batch, "batch size for stage 1"),
      INT_KEY(stage2_batch, "batch size for stage 2"),
      INT_KEY(stage3_batch, "batch size for stage 3"),
      DBL_KEY(weight_decay, "AdamW decoupled weight decay"),
      DBL_KEY(adam_beta1, "AdamW beta1"),
      DBL_KEY(adam_beta2, "AdamW beta2"),
      INT_KEY(targets_per_window, "temporal-offset draws per sampled window"),
      INT_KEY(checkpoint_every, "checkpoint period in steps (0 = end of stage only)"),
      INT_KEY(eval_windows, "evaluation windows per run"),
      INT_KEY(eval_runs, "seeded evaluation runs aggregated as mean/std"),
      INT_KEY(eval_horizon, "temporal offsets / rollout steps evaluated"),
      INT_KEY(plan_n, "planner candidate actions per expansion"),
      INT_KEY(plan_b, "planner beam width B"),
      INT_KEY(plan_k, "planner rollout depth k"),
      DBL_KEY(plan_gamma, "planner reward discount"),
      INT_KEY(plan_episodes, "episodes in the planning suite"),
      INT_KEY(plan_scenes, "distinct scenes in the planning suite"),
      DBL_KEY(plan_min_start, "minimum start geodesic distance in meters"),
      DBL_KEY(plan_max_start, "maximum start geodesic distance in meters"),
      INT_KEY(episode_cap, "maximum actions per episode"),
      Key{"seed", "global random seed threaded through all stages",
          [](const RunConfig& c) { return std::to_string(c.seed); },
          [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
      INT_KEY(threads, "worker threads for parallel sections (0 = hardware)"),
  };
  return keys;
}

#undef INT_KEY
#undef DBL_KEY
#undef BOOL_KEY

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Key& k : registry()) {
    if (key == k.name) {
      k.set(*this, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

std::string RunConfig::dump() const {
  std::string out;
  for (const Key& k : registry()) {
    out += k.name;
    out += " = ";
    out += k.get(*this);
    out += "\n";
  }
  return out;
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) + " is not 'key = value'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("config: cannot open " + path + " for writing");
  out << dump();
}

std::vector<RunConfig::KeyInfo> RunConfig::keys() const {
  std::vector<KeyInfo> out;
  for (const Key& k : registry()) out.push_back({k.name, k.get(*this), k.description});
  return out;
}

avcdit::ModelConfig RunConfig::model_config() const {
  avcdit::ModelConfig m;
  m.width = width;
  m.num_blocks = blocks;
  m.num_heads = heads;
  m.context_frames = context_frames;
  m.offset_min = offset_min;
  m.offset_max = offset_max;
  m.modality_experts = modality_experts;
  m.learned_variance = learned_variance;
  m.ffn_mult = ffn_mult;
  m.visual = {image_size, patch};
  m.audio = {soundworld::frame_samples(sample_rate), dct_frame};
  return m;
}

diffusion::ScheduleConfig RunConfig::schedule_config() const {
  return {diffusion_steps, beta_min, beta_max};
}

trainer::TrainerConfig RunConfig::trainer_config() const {
  trainer::TrainerConfig t;
  t.model = model_config();
  t.schedule = schedule_config();
  t.norm = loss_norm == "mean" ? diffusion::LossNorm::per_modality_mean
                               : diffusion::LossNorm::raw_sum;
  t.lambda_vlb = lambda_vlb;
  t.weight_decay = weight_decay;
  t.adam_beta1 = adam_beta1;
  t.adam_beta2 = adam_beta2;
  t.stage_steps = {stage1_steps, stage2_steps, stage3_steps};
  t.stage_lrs = {stage1_lr, stage2_lr, stage3_lr};
  t.stage_batches = {stage1_batch, stage2_batch, stage3_batch};
  t.targets_per_window = targets_per_window;
  t.checkpoint_every = checkpoint_every;
  t.seed = seed;
  return t;
}

trajgen::DatasetConfig RunConfig::dataset_config() const {
  trajgen::DatasetConfig d;
  d.num_scenes = scenes;
  d.trajectories_per_scene = per_scene;
  d.seed = seed;
  d.scene_cells = scene_cells;
  d.cell_size = cell_size;
  d.sample.render = render_config();
  d.sample.max_frames = max_frames;
  d.sample.min_separation = min_separation;
  d.sample.max_source_distance = max_source_distance;
  d.threads = threads <= 0 ? 0 : static_cast<unsigned>(threads);
  return d;
}

soundworld::RenderConfig RunConfig::render_config() const {
  return {image_size, sample_rate, reflection};
}

metrics::EvalConfig RunConfig::eval_config() const {
  metrics::EvalConfig e;
  e.horizon = eval_horizon;
  e.windows = eval_windows;
  e.runs = eval_runs;
  e.seed = seed;
  e.threads = threads <= 0 ? 0 : static_cast<unsigned>(threads);
  return e;
}

planner::SuiteConfig RunConfig::suite_config() const {
  planner::SuiteConfig s;
  s.episodes = plan_episodes;
  s.scenes = plan_scenes;
  s.scene_cells = scene_cells;
  s.cell_size = cell_size;
  s.seed = seed;
  s.min_start_distance = plan_min_start;
  s.max_start_distance = plan_max_start;
  s.render = render_config();
  s.planner.candidates = plan_n;
  s.planner.beam_width = plan_b;
  s.planner.depth = plan_k;
  s.planner.gamma = plan_gamma;
  s.cap = episode_cap;
  s.threads = threads <= 0 ? 0 : static_cast<unsigned>(threads);
  return s;
}

}  // namespace avwm::config
