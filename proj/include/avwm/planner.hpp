#pragma once

#include <array>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "avwm/diffusion.hpp"
#include "avwm/render.hpp"

namespace avwm::planner {

using soundworld::Action;
using soundworld::AgentPose;
using soundworld::Observation;
using soundworld::Scene;

// Action probabilities indexed by the Action enum order
// (Forward, TurnLeft, TurnRight, Stop).
struct PolicyDistribution {
  std::array<double, 4> probs{};
};

// Audio-only steering policy: interaural level difference drives turning,
// near-centered sources get a forward bonus, loudness past a calibrated
// near-source threshold drives stopping. Silence falls back to a uniform
// distribution over the three movement actions.
PolicyDistribution heuristic_policy(const Observation& obs);

// Samples an action index; with `without_replacement` callers pass a mask of
// already-taken actions.
Action sample_action(const PolicyDistribution& dist, Rng& rng,
                     const std::array<bool, 4>& excluded = {});

// One imagined branch of the environment. Oracle branches carry the true
// pose; learned branches carry a latent context window.
class WorldModel {
 public:
  struct StepResult {
    Observation obs;
    double reward = 0.0;
  };

  class Branch {
   public:
    virtual ~Branch() = default;
    virtual std::unique_ptr<Branch> clone() const = 0;
  };

  virtual ~WorldModel() = default;
  virtual std::unique_ptr<Branch> root(const std::deque<Observation>& history,
                                       const AgentPose& pose, int64_t frame_index) = 0;
  virtual StepResult advance(Branch& branch, Action action, Rng& rng) = 0;
};

// Ground-truth feedback in place of imagination; the upper bound.
class OracleWorldModel : public WorldModel {
 public:
  OracleWorldModel(const Scene& scene, soundworld::RenderConfig render)
      : scene_(&scene), render_(render) {}
  std::unique_ptr<Branch> root(const std::deque<Observation>& history, const AgentPose& pose,
                               int64_t frame_index) override;
  StepResult advance(Branch& branch, Action action, Rng& rng) override;

 private:
  const Scene* scene_;
  soundworld::RenderConfig render_;
};

// Trained AV-CDiT queried at dt=1 per rollout step.
class LearnedWorldModel : public WorldModel {
 public:
  LearnedWorldModel(avcdit::ModelConfig cfg, const avcdit::ParamStore* params,
                    const diffusion::NoiseSchedule* schedule)
      : cfg_(std::move(cfg)), params_(params), schedule_(schedule) {}
  std::unique_ptr<Branch> root(const std::deque<Observation>& history, const AgentPose& pose,
                               int64_t frame_index) override;
  StepResult advance(Branch& branch, Action action, Rng& rng) override;

 private:
  avcdit::ModelConfig cfg_;
  const avcdit::ParamStore* params_;
  const diffusion::NoiseSchedule* schedule_;
};

struct PlannerConfig {
  int candidates = 2;   // n actions sampled per beam per depth
  int beam_width = 3;   // B
  int depth = 5;        // k rollout steps
  double gamma = 0.99;  // reward discount
  // Optional value function added to leaf scores; the heuristic policy has
  // no value head, so this stays unset by default.
  double (*value_fn)(const Observation&) = nullptr;

  void validate() const;
};

// Beam search over imagined branches. Samples n distinct candidate actions
// per beam per depth from the policy on the imagined observation, keeps the
// top-B cumulative discounted scores, and returns the first action of the
// best final sequence; ties break in Action enum order.
Action beam_lookahead(WorldModel& wm, const std::deque<Observation>& history,
                      const AgentPose& pose, int64_t frame_index, const PlannerConfig& cfg,
                      uint64_t seed, int timestep, double* best_score = nullptr);

struct EpisodeResult {
  bool success = false;
  double path_length = 0.0;
  double geodesic_shortest = 0.0;
  double geodesic_initial = 0.0;
  double geodesic_final = 0.0;
  double initial_bearing = 0.0;  // radians, toward the first shortest-path waypoint
  int num_actions = 0;
  std::vector<Action> actions;
};

enum class WmMode { none, oracle, learned };
const char* to_string(WmMode m);
WmMode wm_mode_from_string(const std::string& s);

// Observe -> (plan or sample the policy) -> step, until Stop or the cap.
// Success requires Stop within 1 m geodesic of the source. wm == nullptr
// runs the bare policy.
EpisodeResult run_episode(const Scene& scene, const AgentPose& start, WorldModel* wm,
                          const PlannerConfig& planner, const soundworld::RenderConfig& render,
                          uint64_t seed, int cap = 500);

struct NavMetrics {
  double sr = 0.0;
  double spl = 0.0;
  double soft_spl = 0.0;
  double na = 0.0;
  double sna = 0.0;
};

NavMetrics nav_metrics(const std::vector<EpisodeResult>& results);

struct SuiteConfig {
  int episodes = 100;
  int scenes = 10;
  int scene_cells = 100;
  double cell_size = 0.1;
  uint64_t seed = 0;
  double min_start_distance = 2.0;
  double max_start_distance = 10.0;
  soundworld::RenderConfig render;
  PlannerConfig planner;
  int cap = 500;
  unsigned threads = 0;
};

struct SuiteResult {
  NavMetrics metrics;
  std::vector<EpisodeResult> episodes;
};

// Seeded episode suite over procedurally generated planning scenes. Episodes
// (scene, start pose) are identical across world-model modes for a fixed
// seed, so results are directly comparable.
SuiteResult run_suite(const SuiteConfig& cfg, WmMode mode, const avcdit::ModelConfig* model_cfg,
                      const avcdit::ParamStore* params, const diffusion::NoiseSchedule* schedule);

// Comparison table over modes, plus a structured-text file writer.
std::string render_nav_table(const std::vector<std::pair<std::string, NavMetrics>>& rows);
void save_nav_results(const std::vector<std::pair<std::string, NavMetrics>>& rows,
                      const SuiteConfig& cfg, const std::string& path);

}  // namespace avwm::planner
