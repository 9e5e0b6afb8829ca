#include "avwm/trajgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "avwm/errors.hpp"
#include "avwm/parallel.hpp"
#include "avwm/rng.hpp"

namespace avwm::trajgen {

using soundworld::Action;
using soundworld::AgentPose;
using soundworld::DistanceField;
using soundworld::GeodesicSteps;
using soundworld::GridIndex;
using soundworld::Scene;

const char* to_string(MotionPattern p) {
  switch (p) {
    case MotionPattern::SourceToGoal: return "SourceToGoal";
    case MotionPattern::StartToSource: return "StartToSource";
    case MotionPattern::RandomToRandom: return "RandomToRandom";
  }
  return "?";
}

MotionPattern pattern_from_string(const std::string& s) {
  if (s == "SourceToGoal") return MotionPattern::SourceToGoal;
  if (s == "StartToSource") return MotionPattern::StartToSource;
  if (s == "RandomToRandom") return MotionPattern::RandomToRandom;
  throw ConfigError("unknown motion pattern: " + s);
}

uint8_t quantize_pixel(double v) {
  return static_cast<uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

int16_t quantize_sample(double v) {
  return static_cast<int16_t>(std::lround(32767.0 * std::clamp(v, -1.0, 1.0)));
}

soundworld::Image Trajectory::decode_image(int frame) const {
  const size_t n = static_cast<size_t>(height) * width * 3;
  soundworld::Image img{height, width, std::vector<double>(n)};
  const uint8_t* src = images.data() + static_cast<size_t>(frame) * n;
  for (size_t i = 0; i < n; ++i) img.rgb[i] = src[i] / 255.0;
  return img;
}

soundworld::Audio Trajectory::decode_audio(int frame) const {
  const size_t n = 2 * static_cast<size_t>(samples);
  soundworld::Audio a{samples, std::vector<double>(n)};
  const int16_t* src = audio.data() + static_cast<size_t>(frame) * n;
  for (size_t i = 0; i < n; ++i) a.lr[i] = src[i] / 32767.0;
  return a;
}

std::vector<AgentPose> Trajectory::replay_poses(const Scene& scene) const {
  std::vector<AgentPose> poses;
  poses.reserve(actions.size() + 1);
  poses.push_back(start_pose);
  for (const Action a : actions) poses.push_back(soundworld::step(scene, poses.back(), a));
  return poses;
}

double Trajectory::cumulative_reward(int from, int to) const {
  double s = 0.0;
  for (int i = from; i < to; ++i) s += rewards[i];
  return s;
}

// --- trajectory file -----------------------------------------------------

void Trajectory::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("trajectory: cannot open " + path + " for writing");
  char buf[96];
  out << "AVWM-TRAJ v1\n";
  out << "scene_id: " << scene_id << "\n";
  out << "pattern: " << to_string(pattern) << "\n";
  out << "length: " << length() << "\n";
  out << "height: " << height << "\n";
  out << "width: " << width << "\n";
  out << "samples: " << samples << "\n";
  out << "sample_rate: " << sample_rate << "\n";
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", start_pose.x, start_pose.y,
                start_pose.theta);
  out << "start_pose: " << buf << "\n";
  out << "data:\n";
  const size_t img_n = static_cast<size_t>(height) * width * 3;
  const size_t aud_n = 2 * static_cast<size_t>(samples);
  for (int f = 0; f < length(); ++f) {
    out.write(reinterpret_cast<const char*>(images.data() + f * img_n),
              static_cast<std::streamsize>(img_n));
    out.write(reinterpret_cast<const char*>(audio.data() + f * aud_n),
              static_cast<std::streamsize>(aud_n * sizeof(int16_t)));
    const uint8_t action = static_cast<uint8_t>(actions[f]);
    out.write(reinterpret_cast<const char*>(&action), 1);
    out.write(reinterpret_cast<const char*>(&rewards[f]), sizeof(double));
  }
  if (!out) throw UsageError("trajectory: write failed for " + path);
}

Trajectory Trajectory::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("trajectory: cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "AVWM-TRAJ v1") throw UsageError("trajectory: bad magic in " + path);
  Trajectory t;
  int length = 0;
  auto key = [&](const std::string& k) {
    std::getline(in, line);
    if (line.rfind(k + ": ", 0) != 0)
      throw UsageError("trajectory: expected key " + k + " in " + path);
    return line.substr(k.size() + 2);
  };
  t.scene_id = key("scene_id");
  t.pattern = pattern_from_string(key("pattern"));
  length = std::stoi(key("length"));
  t.height = std::stoi(key("height"));
  t.width = std::stoi(key("width"));
  t.samples = std::stoi(key("samples"));
  t.sample_rate = std::stoi(key("sample_rate"));
  {
    std::istringstream ps(key("start_pose"));
    ps >> t.start_pose.x >> t.start_pose.y >> t.start_pose.theta;
  }
  std::getline(in, line);
  if (line != "data:") throw UsageError("trajectory: missing data section in " + path);

  const size_t img_n = static_cast<size_t>(t.height) * t.width * 3;
  const size_t aud_n = 2 * static_cast<size_t>(t.samples);
  t.images.resize(img_n * length);
  t.audio.resize(aud_n * length);
  t.actions.resize(length);
  t.rewards.resize(length);
  for (int f = 0; f < length; ++f) {
    in.read(reinterpret_cast<char*>(t.images.data() + f * img_n),
            static_cast<std::streamsize>(img_n));
    in.read(reinterpret_cast<char*>(t.audio.data() + f * aud_n),
            static_cast<std::streamsize>(aud_n * sizeof(int16_t)));
    uint8_t action = 0;
    in.read(reinterpret_cast<char*>(&action), 1);
    t.actions[f] = static_cast<Action>(action);
    in.read(reinterpret_cast<char*>(&t.rewards[f]), sizeof(double));
  }
  if (!in) throw UsageError("trajectory: truncated file " + path);
  return t;
}

// --- sampling ------------------------------------------------------------

namespace {

AgentPose cell_center_pose(const Scene& scene, GridIndex c, double theta) {
  return {(c.ix + 0.5) * scene.cell_size(), (c.iy + 0.5) * scene.cell_size(),
          soundworld::wrap_angle(theta)};
}

// Steering target: the cell a couple of parent steps ahead on the shortest
// path, which smooths the follower near waypoints.
GridIndex steering_target(const Scene& scene, const DistanceField& goal_field, GridIndex cur) {
  GridIndex target = cur;
  for (int ahead = 0; ahead < 3; ++ahead) {
    const int32_t p = goal_field.parent_of(target);
    if (p < 0) break;
    target = {p % scene.width(), p / scene.width()};
  }
  return target;
}

struct Rollout {
  std::vector<AgentPose> poses;
  std::vector<Action> actions;
  std::vector<double> rewards;
  bool reached = false;
};

Rollout follow_path(const Scene& scene, const DistanceField& goal_field, AgentPose start,
                    int max_frames, double max_source_distance) {
  Rollout r;
  AgentPose pose = start;
  r.poses.push_back(pose);
  for (int frame = 0; frame < max_frames; ++frame) {
    const GridIndex cur = scene.cell_of(pose.x, pose.y);
    if (!goal_field.at(cur).reachable()) return r;  // fell off the field; reject
    if (scene.geodesic_distance(pose.x, pose.y) > max_source_distance) return r;

    if (goal_field.at(cur).meters(scene.cell_size()) <= soundworld::kForwardStep) {
      r.actions.push_back(Action::Stop);
      r.rewards.push_back(0.0);
      r.poses.push_back(pose);
      r.reached = true;
      return r;
    }

    const GridIndex target = steering_target(scene, goal_field, cur);
    const double tx = (target.ix + 0.5) * scene.cell_size();
    const double ty = (target.iy + 0.5) * scene.cell_size();
    const double bearing = std::atan2(ty - pose.y, tx - pose.x);
    const double err = soundworld::wrap_angle(bearing - pose.theta);

    Action action;
    if (std::abs(err) > soundworld::kTurnStep / 2.0) {
      action = err > 0 ? Action::TurnLeft : Action::TurnRight;
    } else {
      action = Action::Forward;
    }
    AgentPose next = soundworld::step(scene, pose, action);
    if (action == Action::Forward && next.x == pose.x && next.y == pose.y) {
      // Blocked; rotate toward the error sign and try again next frame.
      action = err >= 0 ? Action::TurnLeft : Action::TurnRight;
      next = soundworld::step(scene, pose, action);
    }
    r.actions.push_back(action);
    r.rewards.push_back(soundworld::reward(scene, pose, next));
    pose = next;
    r.poses.push_back(pose);
  }
  return r;  // frame budget exhausted without reaching the goal
}

}  // namespace

Trajectory sample_trajectory(const Scene& scene, MotionPattern pattern, uint64_t rng_seed,
                             const SampleConfig& cfg) {
  Rng rng(rng_seed);
  const auto& cells = scene.connected_free_cells();
  if (cells.size() < 2)
    throw SceneRejectedError("trajectory: scene " + scene.scene_id() + " has too few free cells");

  const GridIndex source = scene.source_cell();
  auto draw_cell = [&]() { return cells[rng.below(cells.size())]; };
  auto source_dist = [&](GridIndex c) {
    return scene.geodesic_steps((c.ix + 0.5) * scene.cell_size(), (c.iy + 0.5) * scene.cell_size())
        .meters(scene.cell_size());
  };

  for (int attempt = 0; attempt < cfg.max_endpoint_draws; ++attempt) {
    GridIndex start_cell, goal_cell;
    switch (pattern) {
      case MotionPattern::SourceToGoal:
        start_cell = source;
        goal_cell = draw_cell();
        break;
      case MotionPattern::StartToSource:
        start_cell = draw_cell();
        goal_cell = source;
        break;
      case MotionPattern::RandomToRandom:
        start_cell = draw_cell();
        goal_cell = draw_cell();
        break;
    }
    const double heading = static_cast<double>(rng.range(0, 35)) * soundworld::kTurnStep;

    if (source_dist(start_cell) > cfg.max_source_distance ||
        source_dist(goal_cell) > cfg.max_source_distance)
      continue;

    const DistanceField goal_field = dijkstra_field(scene, goal_cell);
    const GeodesicSteps sep = goal_field.at(start_cell);
    if (!sep.reachable() || sep.meters(scene.cell_size()) < cfg.min_separation) continue;

    const AgentPose start = cell_center_pose(scene, start_cell, heading);
    Rollout rollout =
        follow_path(scene, goal_field, start, cfg.max_frames, cfg.max_source_distance);
    if (!rollout.reached) continue;

    Trajectory t;
    t.scene_id = scene.scene_id();
    t.pattern = pattern;
    t.height = t.width = cfg.render.image_size;
    t.samples = soundworld::frame_samples(cfg.render.sample_rate);
    t.sample_rate = cfg.render.sample_rate;
    t.start_pose = start;
    t.actions = rollout.actions;
    t.rewards = rollout.rewards;
    const int len = t.length();
    const size_t img_n = static_cast<size_t>(t.height) * t.width * 3;
    const size_t aud_n = 2 * static_cast<size_t>(t.samples);
    t.images.resize(img_n * len);
    t.audio.resize(aud_n * len);
    for (int f = 0; f < len; ++f) {
      const soundworld::Observation obs =
          soundworld::observe(scene, rollout.poses[f], f, cfg.render);
      for (size_t i = 0; i < img_n; ++i)
        t.images[f * img_n + i] = quantize_pixel(obs.image.rgb[i]);
      for (size_t i = 0; i < aud_n; ++i)
        t.audio[f * aud_n + i] = quantize_sample(obs.audio.lr[i]);
    }
    return t;
  }
  throw SceneRejectedError("trajectory: no valid endpoint pair for scene " + scene.scene_id() +
                           " pattern " + to_string(pattern) + " after " +
                           std::to_string(cfg.max_endpoint_draws) + " draws");
}

// --- dataset -------------------------------------------------------------

std::vector<int> apportion(int total, const std::vector<int>& weights) {
  int wsum = 0;
  for (int w : weights) wsum += w;
  std::vector<int> out(weights.size());
  std::vector<std::pair<double, size_t>> remainders;
  int assigned = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / wsum;
    out[i] = static_cast<int>(std::floor(exact));
    assigned += out[i];
    remainders.emplace_back(exact - out[i], i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; i < total - assigned; ++i) out[remainders[i].second] += 1;
  return out;
}

namespace {

const char* kSplitNames[3] = {"train", "val", "test"};

std::string scene_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%03d", index);
  return buf;
}

}  // namespace

DatasetManifest build_dataset(const std::string& root, const DatasetConfig& cfg) {
  if (cfg.num_scenes < 9)
    throw ConfigError("dataset: need at least 9 scenes so each split gets one at 6:1:2");
  namespace fs = std::filesystem;
  fs::create_directories(root);
  fs::create_directories(fs::path(root) / "scenes");

  const std::vector<int> scene_counts = apportion(cfg.num_scenes, {6, 1, 2});
  const int total_traj = cfg.num_scenes * cfg.trajectories_per_scene;
  const std::vector<int> traj_counts = apportion(total_traj, {6, 1, 2});

  DatasetManifest manifest;
  manifest.seed = cfg.seed;
  manifest.num_scenes = cfg.num_scenes;
  manifest.trajectories_per_scene = cfg.trajectories_per_scene;
  manifest.image_size = cfg.sample.render.image_size;
  manifest.sample_rate = cfg.sample.render.sample_rate;
  manifest.frame_samples = soundworld::frame_samples(cfg.sample.render.sample_rate);
  manifest.scene_cells = cfg.scene_cells;
  manifest.cell_size = cfg.cell_size;

  struct Job {
    int split;
    int scene_index;
    int traj_index;   // within the scene
    uint64_t seed;
    MotionPattern pattern;
    std::string rel_path;
  };

  int scene_index = 0;
  std::vector<std::vector<int>> split_scene_indices(3);
  std::vector<Job> jobs;
  for (int split = 0; split < 3; ++split) {
    // Distribute the split's trajectory budget over its scenes as evenly as
    // possible.
    const int scenes_here = scene_counts[split];
    std::vector<int> per_scene(scenes_here, 0);
    for (int k = 0; k < traj_counts[split]; ++k) per_scene[k % scenes_here] += 1;
    for (int s = 0; s < scenes_here; ++s) {
      const int idx = scene_index++;
      split_scene_indices[split].push_back(idx);
      manifest.split_scenes[kSplitNames[split]].push_back(scene_name(idx));
      fs::create_directories(fs::path(root) / kSplitNames[split] / scene_name(idx));
      for (int k = 0; k < per_scene[s]; ++k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "traj_%04d.avt", k);
        jobs.push_back({split, idx, k, Rng::derive(cfg.seed, idx, k).next_u64(),
                        static_cast<MotionPattern>(k % 3),
                        std::string(kSplitNames[split]) + "/" + scene_name(idx) + "/" + buf});
      }
    }
  }

  // Generate scenes, resampling any that reject trajectory sampling.
  std::vector<Scene> scenes;
  scenes.reserve(cfg.num_scenes);
  for (int i = 0; i < cfg.num_scenes; ++i) {
    for (uint64_t resample = 0;; ++resample) {
      Scene scene = Scene::generate(Rng::derive(cfg.seed, i, resample).next_u64(), scene_name(i),
                                    cfg.scene_cells, cfg.cell_size);
      // Probe each pattern once before accepting the scene.
      try {
        for (int p = 0; p < 3; ++p)
          sample_trajectory(scene, static_cast<MotionPattern>(p),
                            Rng::derive(cfg.seed, i, 1000 + p).next_u64(), cfg.sample);
      } catch (const SceneRejectedError& e) {
        std::fprintf(stderr, "[gen-data] %s rejected (%s), resampling\n", scene_name(i).c_str(),
                     e.what());
        continue;
      }
      scenes.push_back(std::move(scene));
      break;
    }
    scenes.back().save((fs::path(root) / "scenes" / (scene_name(i) + ".scene")).string());
  }

  // Trajectories are independent given (scene, seed); render in parallel.
  std::vector<TrajectoryRecord> records(jobs.size());
  parallel_for(
      jobs.size(),
      [&](size_t j) {
        const Job& job = jobs[j];
        Trajectory t =
            sample_trajectory(scenes[job.scene_index], job.pattern, job.seed, cfg.sample);
        t.save((fs::path(root) / job.rel_path).string());
        records[j] = {job.rel_path, t.length(), job.pattern,
                      scenes[job.scene_index].scene_id()};
      },
      cfg.threads);

  for (size_t j = 0; j < jobs.size(); ++j)
    manifest.split_trajectories[kSplitNames[jobs[j].split]].push_back(records[j]);

  manifest.save((fs::path(root) / "manifest.txt").string());
  return manifest;
}

// --- manifest ------------------------------------------------------------

void DatasetManifest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("manifest: cannot open " + path + " for writing");
  char buf[64];
  out << "AVWM-MANIFEST v1\n";
  out << "seed: " << seed << "\n";
  out << "num_scenes: " << num_scenes << "\n";
  out << "trajectories_per_scene: " << trajectories_per_scene << "\n";
  out << "image_size: " << image_size << "\n";
  out << "sample_rate: " << sample_rate << "\n";
  out << "frame_samples: " << frame_samples << "\n";
  out << "scene_cells: " << scene_cells << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", cell_size);
  out << "cell_size: " << buf << "\n";
  for (const char* split : kSplitNames) {
    out << "split: " << split << "\n";
    out << "scenes:";
    auto sit = split_scenes.find(split);
    if (sit != split_scenes.end())
      for (const auto& s : sit->second) out << " " << s;
    out << "\n";
    auto tit = split_trajectories.find(split);
    const size_t count = tit == split_trajectories.end() ? 0 : tit->second.size();
    out << "trajectories: " << count << "\n";
    if (tit != split_trajectories.end())
      for (const auto& r : tit->second)
        out << r.path << " " << r.length << " " << to_string(r.pattern) << " " << r.scene_id
            << "\n";
  }
  out << "end\n";
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("manifest: cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != "AVWM-MANIFEST v1") throw UsageError("manifest: bad magic in " + path);
  DatasetManifest m;
  auto key = [&](const std::string& k) {
    std::getline(in, line);
    if (line.rfind(k + ": ", 0) != 0) throw UsageError("manifest: expected key " + k);
    return line.substr(k.size() + 2);
  };
  m.seed = std::stoull(key("seed"));
  m.num_scenes = std::stoi(key("num_scenes"));
  m.trajectories_per_scene = std::stoi(key("trajectories_per_scene"));
  m.image_size = std::stoi(key("image_size"));
  m.sample_rate = std::stoi(key("sample_rate"));
  m.frame_samples = std::stoi(key("frame_samples"));
  m.scene_cells = std::stoi(key("scene_cells"));
  m.cell_size = std::stod(key("cell_size"));
  for (int s = 0; s < 3; ++s) {
    const std::string split = key("split");
    std::istringstream scenes_line(key("scenes"));
    std::string token;
    while (scenes_line >> token) m.split_scenes[split].push_back(token);
    if (m.split_scenes.find(split) == m.split_scenes.end()) m.split_scenes[split] = {};
    const int count = std::stoi(key("trajectories"));
    auto& records = m.split_trajectories[split];
    for (int i = 0; i < count; ++i) {
      std::getline(in, line);
      std::istringstream row(line);
      TrajectoryRecord r;
      std::string pattern;
      row >> r.path >> r.length >> pattern >> r.scene_id;
      if (!row) throw UsageError("manifest: malformed trajectory row: " + line);
      r.pattern = pattern_from_string(pattern);
      records.push_back(r);
    }
  }
  std::getline(in, line);
  if (line != "end") throw UsageError("manifest: missing end marker in " + path);
  return m;
}

bool DatasetManifest::operator==(const DatasetManifest& o) const {
  auto records_equal = [](const std::map<std::string, std::vector<TrajectoryRecord>>& a,
                          const std::map<std::string, std::vector<TrajectoryRecord>>& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [k, v] : a) {
      auto it = b.find(k);
      if (it == b.end() || it->second.size() != v.size()) return false;
      for (size_t i = 0; i < v.size(); ++i)
        if (v[i].path != it->second[i].path || v[i].length != it->second[i].length ||
            v[i].pattern != it->second[i].pattern || v[i].scene_id != it->second[i].scene_id)
          return false;
    }
    return true;
  };
  return seed == o.seed && num_scenes == o.num_scenes &&
         trajectories_per_scene == o.trajectories_per_scene && image_size == o.image_size &&
         sample_rate == o.sample_rate && frame_samples == o.frame_samples &&
         scene_cells == o.scene_cells && cell_size == o.cell_size &&
         split_scenes == o.split_scenes && records_equal(split_trajectories, o.split_trajectories);
}

}  // namespace avwm::trajgen
