#include "avwm/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "avwm/errors.hpp"
#include "avwm/parallel.hpp"
#include "avwm/tokenizers.hpp"

namespace avwm::planner {

namespace {

// Policy calibration. Turning tracks the interaural log-level ratio; the
// stop logit crosses zero at roughly 1 m from the source during a burst.
constexpr double kTurnGain = 5.0;
constexpr double kCenteredWindow = 0.1;
constexpr double kForwardBonus = 2.5;
constexpr double kStopGain = 30.0;
constexpr double kStopThreshold = 0.18;
constexpr double kLogRatioClamp = 3.0;

double channel_rms(const soundworld::Audio& audio, int ch) {
  double s = 0.0;
  for (int i = 0; i < audio.samples; ++i) {
    const double v = audio.lr[2 * static_cast<size_t>(i) + ch];
    s += v * v;
  }
  return std::sqrt(s / audio.samples);
}

}  // namespace

PolicyDistribution heuristic_policy(const Observation& obs) {
  const double rms_l = channel_rms(obs.audio, 0);
  const double rms_r = channel_rms(obs.audio, 1);
  PolicyDistribution dist;
  if (rms_l == 0.0 && rms_r == 0.0) {
    // Silent frame: the policy is blind; move uniformly, never stop.
    dist.probs = {1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0};
    return dist;
  }
  const double ratio =
      std::clamp(std::log(std::max(rms_l, 1e-12) / std::max(rms_r, 1e-12)), -kLogRatioClamp,
                 kLogRatioClamp);
  const double rms_total = std::sqrt((rms_l * rms_l + rms_r * rms_r) / 2.0);

  std::array<double, 4> logits{};
  logits[static_cast<int>(Action::Forward)] =
      std::abs(ratio) < kCenteredWindow ? kForwardBonus : 0.0;
  logits[static_cast<int>(Action::TurnLeft)] = kTurnGain * ratio;
  logits[static_cast<int>(Action::TurnRight)] = -kTurnGain * ratio;
  logits[static_cast<int>(Action::Stop)] = kStopGain * (rms_total - kStopThreshold);

  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    dist.probs[i] = std::exp(logits[i] - mx);
    sum += dist.probs[i];
  }
  for (auto& p : dist.probs) p /= sum;
  return dist;
}

Action sample_action(const PolicyDistribution& dist, Rng& rng,
                     const std::array<bool, 4>& excluded) {
  double total = 0.0;
  for (int i = 0; i < 4; ++i)
    if (!excluded[i]) total += dist.probs[i];
  if (total <= 0.0) {
    // Everything remaining has zero probability; take the first allowed
    // action in enum order.
    for (int i = 0; i < 4; ++i)
      if (!excluded[i]) return static_cast<Action>(i);
    throw ContractError("sample_action: all actions excluded");
  }
  double u = rng.uniform() * total;
  for (int i = 0; i < 4; ++i) {
    if (excluded[i]) continue;
    u -= dist.probs[i];
    if (u <= 0.0) return static_cast<Action>(i);
  }
  for (int i = 3; i >= 0; --i)
    if (!excluded[i]) return static_cast<Action>(i);
  return Action::Stop;
}

// --- world models ----------------------------------------------------------

namespace {

struct OracleBranch : WorldModel::Branch {
  AgentPose pose;
  int64_t frame_index = 0;
  std::unique_ptr<Branch> clone() const override {
    return std::make_unique<OracleBranch>(*this);
  }
};

struct LearnedBranch : WorldModel::Branch {
  avcdit::ContextLatents window;
  std::unique_ptr<Branch> clone() const override {
    return std::make_unique<LearnedBranch>(*this);
  }
};

}  // namespace

std::unique_ptr<WorldModel::Branch> OracleWorldModel::root(const std::deque<Observation>&,
                                                           const AgentPose& pose,
                                                           int64_t frame_index) {
  auto branch = std::make_unique<OracleBranch>();
  branch->pose = pose;
  branch->frame_index = frame_index;
  return branch;
}

WorldModel::StepResult OracleWorldModel::advance(Branch& branch, Action action, Rng&) {
  auto& b = static_cast<OracleBranch&>(branch);
  const AgentPose next = soundworld::step(*scene_, b.pose, action);
  StepResult result;
  result.reward = soundworld::reward(*scene_, b.pose, next);
  b.pose = next;
  b.frame_index += 1;
  result.obs = soundworld::observe(*scene_, next, b.frame_index, render_);
  return result;
}

std::unique_ptr<WorldModel::Branch> LearnedWorldModel::root(
    const std::deque<Observation>& history, const AgentPose&, int64_t) {
  if (history.empty()) throw ContractError("learned world model: empty observation history");
  auto branch = std::make_unique<LearnedBranch>();
  // Take the last m observations, repeating the oldest when short.
  for (int i = 0; i < cfg_.context_frames; ++i) {
    const int idx = std::max(
        0, static_cast<int>(history.size()) - cfg_.context_frames + i);
    const Observation& obs = history[idx];
    tokenizers::TokenMatrix v = tokenizers::encode_visual(obs.image, cfg_.visual);
    for (auto& x : v.data) x = diffusion::LatentScaling::scale_visual(x);
    tokenizers::TokenMatrix a = tokenizers::encode_audio(obs.audio, cfg_.audio);
    for (auto& x : a.data) x = diffusion::LatentScaling::scale_audio(x);
    branch->window.visual.push_back(std::move(v));
    branch->window.audio.push_back(std::move(a));
  }
  return branch;
}

WorldModel::StepResult LearnedWorldModel::advance(Branch& branch, Action action, Rng& rng) {
  auto& b = static_cast<LearnedBranch&>(branch);
  const diffusion::BodyDelta delta = diffusion::action_delta(action);
  avcdit::ConditioningInputs cond{delta.dx, delta.dy, delta.dtheta, 1, 1};
  diffusion::Prediction pred =
      diffusion::sample_fixed_step(cfg_, *params_, *schedule_, b.window, cond, rng);
  b.window.visual.erase(b.window.visual.begin());
  b.window.audio.erase(b.window.audio.begin());
  b.window.visual.push_back(pred.visual_latents);
  b.window.audio.push_back(pred.audio_latents);
  StepResult result;
  result.obs.image = std::move(pred.image);
  result.obs.audio = std::move(pred.audio);
  result.reward = pred.reward;
  return result;
}

// --- beam search -------------------------------------------------------------

void PlannerConfig::validate() const {
  if (candidates < 1 || beam_width < 1 || depth < 1)
    throw ConfigError("planner: n, B and k must all be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("planner: gamma must be in (0, 1]");
}

namespace {

uint64_t prefix_hash(const std::vector<Action>& actions) {
  uint64_t h = 1469598103934665603ULL;
  for (Action a : actions) {
    h ^= static_cast<uint64_t>(a) + 1;
    h *= 1099511628211ULL;
  }
  return h;
}

struct Beam {
  std::vector<Action> actions;
  std::unique_ptr<WorldModel::Branch> branch;
  Observation last_obs;  // imagined observation the policy sees next
  double score = 0.0;
};

}  // namespace

Action beam_lookahead(WorldModel& wm, const std::deque<Observation>& history,
                      const AgentPose& pose, int64_t frame_index, const PlannerConfig& cfg,
                      uint64_t seed, int timestep, double* best_score) {
  cfg.validate();
  if (history.empty()) throw ContractError("beam_lookahead: empty observation history");

  std::vector<Beam> beams;
  {
    Beam root;
    root.branch = wm.root(history, pose, frame_index);
    root.last_obs = history.back();
    beams.push_back(std::move(root));
  }

  double discount = 1.0;
  for (int depth = 1; depth <= cfg.depth; ++depth) {
    std::vector<Beam> expanded;
    for (const Beam& beam : beams) {
      const PolicyDistribution dist = heuristic_policy(beam.last_obs);
      // The expansion of a beam depends only on (seed, timestep, prefix), so
      // a larger beam width explores a superset of the same search tree.
      Rng rng = Rng::derive(seed, 0xbea3 + static_cast<uint64_t>(timestep),
                            static_cast<uint64_t>(depth), prefix_hash(beam.actions));
      std::array<bool, 4> taken{};
      const int n = std::min(cfg.candidates, 4);
      for (int c = 0; c < n; ++c) {
        const Action action = sample_action(dist, rng, taken);
        taken[static_cast<int>(action)] = true;
        Beam next;
        next.actions = beam.actions;
        next.actions.push_back(action);
        next.branch = beam.branch->clone();
        Rng chain_rng = Rng::derive(seed, 0xc4a1 + static_cast<uint64_t>(timestep),
                                    static_cast<uint64_t>(depth), prefix_hash(next.actions));
        WorldModel::StepResult step = wm.advance(*next.branch, action, chain_rng);
        next.score = beam.score + discount * step.reward;
        next.last_obs = std::move(step.obs);
        expanded.push_back(std::move(next));
      }
    }
    std::sort(expanded.begin(), expanded.end(), [](const Beam& a, const Beam& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.actions < b.actions;  // enum order tie-break
    });
    if (static_cast<int>(expanded.size()) > cfg.beam_width)
      expanded.resize(cfg.beam_width);
    beams = std::move(expanded);
    if (static_cast<int>(beams.size()) > cfg.beam_width)
      throw ContractError("beam_lookahead: beam exceeded width B");
    discount *= cfg.gamma;
  }
  if (best_score) *best_score = beams.front().score;
  return beams.front().actions.front();
}

// --- episodes ----------------------------------------------------------------

const char* to_string(WmMode m) {
  switch (m) {
    case WmMode::none: return "none";
    case WmMode::oracle: return "oracle";
    case WmMode::learned: return "learned";
  }
  return "?";
}

WmMode wm_mode_from_string(const std::string& s) {
  if (s == "none") return WmMode::none;
  if (s == "oracle") return WmMode::oracle;
  if (s == "learned") return WmMode::learned;
  throw ConfigError("unknown world-model mode: " + s);
}

namespace {

// Bearing from the start heading to the direction of the initial geodesic
// path segment; feeds the optimal-action-count estimate in SNA.
double initial_path_bearing(const Scene& scene, const AgentPose& start) {
  const auto path = scene.path_to_source(start.x, start.y);
  if (path.size() < 2) return 0.0;
  const size_t ahead = std::min<size_t>(3, path.size() - 1);
  const double tx = (path[ahead].ix + 0.5) * scene.cell_size();
  const double ty = (path[ahead].iy + 0.5) * scene.cell_size();
  return soundworld::wrap_angle(std::atan2(ty - start.y, tx - start.x) - start.theta);
}

}  // namespace

EpisodeResult run_episode(const Scene& scene, const AgentPose& start, WorldModel* wm,
                          const PlannerConfig& planner, const soundworld::RenderConfig& render,
                          uint64_t seed, int cap) {
  EpisodeResult result;
  result.geodesic_initial = scene.geodesic_distance(start.x, start.y);
  result.geodesic_shortest = result.geodesic_initial;
  result.initial_bearing = initial_path_bearing(scene, start);

  AgentPose pose = start;
  std::deque<Observation> history;
  for (int t = 0; t < cap; ++t) {
    history.push_back(soundworld::observe(scene, pose, t, render));
    while (history.size() > 8) history.pop_front();

    Action action;
    if (wm != nullptr) {
      action = beam_lookahead(*wm, history, pose, t, planner, seed, t);
    } else {
      Rng rng = Rng::derive(seed, 0xac70, static_cast<uint64_t>(t));
      action = sample_action(heuristic_policy(history.back()), rng);
    }
    result.actions.push_back(action);
    result.num_actions += 1;
    if (action == Action::Stop) break;
    const AgentPose next = soundworld::step(scene, pose, action);
    result.path_length += std::hypot(next.x - pose.x, next.y - pose.y);
    pose = next;
  }
  result.geodesic_final = scene.geodesic_distance(pose.x, pose.y);
  result.success = !result.actions.empty() && result.actions.back() == Action::Stop &&
                   result.geodesic_final <= 1.0;
  return result;
}

NavMetrics nav_metrics(const std::vector<EpisodeResult>& results) {
  if (results.empty()) throw ContractError("nav_metrics: empty result list");
  NavMetrics m;
  for (const EpisodeResult& r : results) {
    const double s = r.success ? 1.0 : 0.0;
    const double l = r.geodesic_shortest;
    const double p = r.path_length;
    m.sr += s;
    m.spl += s * (l > 0 ? l / std::max(p, l) : 1.0);
    const double progress =
        r.geodesic_initial > 0
            ? std::clamp(1.0 - r.geodesic_final / r.geodesic_initial, 0.0, 1.0)
            : 1.0;
    m.soft_spl += progress * (l > 0 ? l / std::max(p, l) : 1.0);
    m.na += r.num_actions;
    const double optimal_actions =
        std::ceil(l / soundworld::kForwardStep) +
        std::ceil(std::abs(r.initial_bearing) / soundworld::kTurnStep) + 1.0;
    m.sna += s * optimal_actions / std::max<double>(r.num_actions, optimal_actions);
  }
  const double n = static_cast<double>(results.size());
  m.sr /= n;
  m.spl /= n;
  m.soft_spl /= n;
  m.na /= n;
  m.sna /= n;
  return m;
}

SuiteResult run_suite(const SuiteConfig& cfg, WmMode mode, const avcdit::ModelConfig* model_cfg,
                      const avcdit::ParamStore* params,
                      const diffusion::NoiseSchedule* schedule) {
  if (mode == WmMode::learned && (model_cfg == nullptr || params == nullptr || schedule == nullptr))
    throw UsageError("plan: learned mode requires a model config, checkpoint and schedule");

  // Planning scenes. Generated once; episodes cycle through them.
  std::vector<Scene> scenes;
  char name[32];
  for (int i = 0; i < cfg.scenes; ++i) {
    std::snprintf(name, sizeof name, "plan_%02d", i);
    scenes.push_back(Scene::generate(Rng::derive(cfg.seed, 0x9c3, i).next_u64(), name,
                                     cfg.scene_cells, cfg.cell_size));
  }

  // Start poses: seeded, identical across modes.
  struct Episode {
    int scene;
    AgentPose start;
    uint64_t seed;
  };
  std::vector<Episode> episodes;
  for (int e = 0; e < cfg.episodes; ++e) {
    Rng rng = Rng::derive(cfg.seed, 0xe9, e);
    const Scene& scene = scenes[e % scenes.size()];
    const auto& cells = scene.connected_free_cells();
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const auto c = cells[rng.below(cells.size())];
      const AgentPose pose{(c.ix + 0.5) * cfg.cell_size, (c.iy + 0.5) * cfg.cell_size,
                           soundworld::wrap_angle(static_cast<double>(rng.range(0, 35)) *
                                                  soundworld::kTurnStep)};
      const double d = scene.geodesic_distance(pose.x, pose.y);
      if (d >= cfg.min_start_distance && d <= cfg.max_start_distance) {
        episodes.push_back({e % static_cast<int>(scenes.size()), pose, rng.next_u64()});
        break;
      }
    }
  }

  SuiteResult result;
  result.episodes.resize(episodes.size());
  parallel_for(
      episodes.size(),
      [&](size_t i) {
        const Episode& ep = episodes[i];
        const Scene& scene = scenes[ep.scene];
        std::unique_ptr<WorldModel> wm;
        if (mode == WmMode::oracle)
          wm = std::make_unique<OracleWorldModel>(scene, cfg.render);
        else if (mode == WmMode::learned)
          wm = std::make_unique<LearnedWorldModel>(*model_cfg, params, schedule);
        result.episodes[i] =
            run_episode(scene, ep.start, wm.get(), cfg.planner, cfg.render, ep.seed, cfg.cap);
      },
      cfg.threads);
  result.metrics = nav_metrics(result.episodes);
  return result;
}

std::string render_nav_table(const std::vector<std::pair<std::string, NavMetrics>>& rows) {
  std::string out =
      "agent                    SR%     SPL%  SoftSPL%        NA     SNA%\n";
  char buf[160];
  for (const auto& [name, m] : rows) {
    std::snprintf(buf, sizeof buf, "%-20s %7.2f %8.2f %9.2f %9.2f %8.2f\n", name.c_str(),
                  100.0 * m.sr, 100.0 * m.spl, 100.0 * m.soft_spl, m.na, 100.0 * m.sna);
    out += buf;
  }
  return out;
}

void save_nav_results(const std::vector<std::pair<std::string, NavMetrics>>& rows,
                      const SuiteConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("plan: cannot open " + path + " for writing");
  out << "AVWM-NAV v1\n";
  out << "episodes: " << cfg.episodes << "\n";
  out << "seed: " << cfg.seed << "\n";
  out << "n: " << cfg.planner.candidates << "\n";
  out << "B: " << cfg.planner.beam_width << "\n";
  out << "k: " << cfg.planner.depth << "\n";
  char buf[200];
  for (const auto& [name, m] : rows) {
    std::snprintf(buf, sizeof buf, "%s: sr=%.17g spl=%.17g soft_spl=%.17g na=%.17g sna=%.17g\n",
                  name.c_str(), m.sr, m.spl, m.soft_spl, m.na, m.sna);
    out << buf;
  }
  out << "end\n";
}

}  // namespace avwm::planner
