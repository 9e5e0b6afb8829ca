#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avwm/render.hpp"
#include "avwm/soundworld.hpp"

namespace avwm::trajgen {

enum class MotionPattern : uint8_t { SourceToGoal = 0, StartToSource = 1, RandomToRandom = 2 };

const char* to_string(MotionPattern p);
MotionPattern pattern_from_string(const std::string& s);

// A recorded episode. Observations are stored in their quantized on-disk
// representation (uint8 pixels, int16 PCM) so the in-memory trajectory and
// the file are byte-equivalent, and training consumes exactly what a reader
// of the file would. Poses are reconstructed by replaying the deterministic
// transition from start_pose.
struct Trajectory {
  std::string scene_id;
  MotionPattern pattern = MotionPattern::SourceToGoal;
  int height = 0, width = 0, samples = 0, sample_rate = 0;
  soundworld::AgentPose start_pose;
  std::vector<soundworld::Action> actions;  // one per frame, Stop last
  std::vector<double> rewards;              // reward after frame i's action
  std::vector<uint8_t> images;              // length * H*W*3
  std::vector<int16_t> audio;               // length * L*2 interleaved

  int length() const { return static_cast<int>(actions.size()); }
  soundworld::Image decode_image(int frame) const;
  soundworld::Audio decode_audio(int frame) const;
  std::vector<soundworld::AgentPose> replay_poses(const soundworld::Scene& scene) const;
  // Sum of rewards over the half-open action interval [from, to).
  double cumulative_reward(int from, int to) const;

  void save(const std::string& path) const;
  static Trajectory load(const std::string& path);
};

uint8_t quantize_pixel(double v);
int16_t quantize_sample(double v);

struct SampleConfig {
  soundworld::RenderConfig render;
  int max_frames = 500;
  double min_separation = 1.0;       // geodesic start-goal separation, meters
  double max_source_distance = 20.0; // no frame farther than this from the source
  int max_endpoint_draws = 100;
};

// Draws endpoints for the motion pattern, then follows the shortest path
// greedily (turn toward the next waypoint within the 10-degree granularity,
// then move forward), terminating with Stop. Deterministic in
// (scene, pattern, seed). Throws SceneRejectedError when no valid endpoint
// pair is found within max_endpoint_draws.
Trajectory sample_trajectory(const soundworld::Scene& scene, MotionPattern pattern,
                             uint64_t rng_seed, const SampleConfig& cfg);

struct TrajectoryRecord {
  std::string path;  // relative to the dataset root
  int length = 0;
  MotionPattern pattern = MotionPattern::SourceToGoal;
  std::string scene_id;
};

struct DatasetManifest {
  uint64_t seed = 0;
  int num_scenes = 0;
  int trajectories_per_scene = 0;
  int image_size = 0;
  int sample_rate = 0;
  int frame_samples = 0;
  int scene_cells = 0;
  double cell_size = 0.1;
  // split name ("train", "val", "test") -> contents
  std::map<std::string, std::vector<std::string>> split_scenes;
  std::map<std::string, std::vector<TrajectoryRecord>> split_trajectories;

  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);
  bool operator==(const DatasetManifest&) const;
};

struct DatasetConfig {
  int num_scenes = 12;
  int trajectories_per_scene = 20;
  uint64_t seed = 0;
  int scene_cells = 100;
  double cell_size = 0.1;
  SampleConfig sample;
  unsigned threads = 0;  // 0 = hardware concurrency
};

// Splits scenes 6:1:2 (train:val:test, disjoint), apportions trajectory
// counts to the same ratio within +-1, writes scenes, trajectories and the
// manifest under root. Scenes that reject sampling are regenerated (logged
// to stderr).
DatasetManifest build_dataset(const std::string& root, const DatasetConfig& cfg);

// Largest-remainder apportionment of total into parts proportional to
// weights; exposed for tests.
std::vector<int> apportion(int total, const std::vector<int>& weights);

}  // namespace avwm::trajgen
