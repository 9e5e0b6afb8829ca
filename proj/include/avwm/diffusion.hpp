#pragma once

#include <cstdint>
#include <vector>

#include "avwm/avcdit.hpp"
#include "avwm/rng.hpp"
#include "avwm/soundworld.hpp"
#include "avwm/trajgen.hpp"

namespace avwm::diffusion {

struct ScheduleConfig {
  int steps = 100;        // K
  double beta_min = 1e-4;
  double beta_max = 0.065;
};

// DDPM coefficients. Betas are linear in k; the defaults keep the terminal
// signal level below 5% (alpha_bar_K < 0.05) at K=100. The k=1 posterior
// variance, which is zero in closed form, is floored to beta_1 so the
// variational term stays finite.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(ScheduleConfig cfg);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int k) const { return beta_[check(k) - 1]; }
  double alpha_bar(int k) const { return alpha_bar_[k]; }  // k in [0, K], alpha_bar(0) = 1
  double posterior_variance(int k) const { return posterior_var_[check(k) - 1]; }

 private:
  int check(int k) const;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
  std::vector<double> posterior_var_;
};

// Fixed per-modality affine maps applied before noising so every latent
// lives near unit scale: pixels [0,1] -> [-1,1], DCT coefficients halved,
// rewards untouched. Inverted on decode.
struct LatentScaling {
  static double scale_visual(double v) { return 2.0 * v - 1.0; }
  static double unscale_visual(double v) { return (v + 1.0) / 2.0; }
  static double scale_audio(double v) { return 0.5 * v; }
  static double unscale_audio(double v) { return 2.0 * v; }
};

struct NoisedTarget {
  avcdit::TargetLatents noised;
  avcdit::TargetLatents noise;  // the injected standard-normal draws
};

// Eq. X^(k) = sqrt(alpha_bar_k) X + sqrt(1 - alpha_bar_k) eps with
// independent noise per modality (visual vs audio:reward). k = 0 is the
// identity test hook. Draw order: visual, audio, reward.
NoisedTarget forward_noise(const avcdit::TargetLatents& clean, int k,
                           const NoiseSchedule& schedule, Rng& rng);

enum class LossMask { visual_only, audio_reward_only, joint };
enum class LossNorm { per_modality_mean, raw_sum };

struct LossBreakdown {
  ndgrad::Tensor total;          // scalar graph node
  double simple_visual = 0.0;    // logged values (mean-normalized)
  double simple_audio_reward = 0.0;
  double vlb = 0.0;
};

// Epsilon-prediction loss, one term per modality, each normalized by its
// element count (or raw sums under LossNorm::raw_sum).
ndgrad::Tensor loss_simple(const ndgrad::Tensor& eps_hat, const avcdit::TargetLatents& noise,
                           bool visual_part);  // helper; see training_loss

// Full training objective: masked L_simple plus lambda_vlb * L_vb when the
// model carries learned variances. detach_mean applies the stop-gradient to
// the predicted posterior mean inside the KL (disable only for gradient
// checking, where stop-gradients would break finite differences).
LossBreakdown training_loss(const avcdit::ModelConfig& cfg, const avcdit::ModelOutput& out,
                            const avcdit::TargetLatents& clean, const NoisedTarget& noised,
                            int k, const NoiseSchedule& schedule, LossMask mask, LossNorm norm,
                            double lambda_vlb, bool detach_mean = true);

// Body-frame displacement between two recorded poses: the spatial vector sum
// of the action sequence between them.
struct BodyDelta {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;
};
BodyDelta aggregate_action(const soundworld::AgentPose& from, const soundworld::AgentPose& to);
BodyDelta action_delta(soundworld::Action a);  // single-action body-frame delta

// A trajectory with precomputed scaled latents and replayed poses; the
// shared read-only input to batch assembly and evaluation.
struct EncodedTrajectory {
  trajgen::Trajectory traj;
  std::vector<soundworld::AgentPose> poses;       // length + 1 entries
  std::vector<std::vector<float>> audio_latents;  // per frame, scaled, N_a * D_a

  int length() const { return traj.length(); }
};

EncodedTrajectory encode_trajectory(trajgen::Trajectory traj, const soundworld::Scene& scene,
                                    const avcdit::ModelConfig& cfg);

struct TrainingExample {
  avcdit::ContextLatents context;
  avcdit::TargetLatents clean;  // scaled latents; reward token = cumulative reward
  avcdit::ConditioningInputs cond;  // diffusion_step filled at noising time
  double cumulative_reward = 0.0;
};

// Window (t, t + dt) of an encoded trajectory: context frames t-m+1..t (the
// earliest frame repeated when t < m-1), target at t + dt.
TrainingExample make_training_example(const EncodedTrajectory& et, int t, int dt,
                                      const avcdit::ModelConfig& cfg);

// Scaled clean latents of one frame (no reward token filled).
void fill_frame_latents(const EncodedTrajectory& et, int frame, const avcdit::ModelConfig& cfg,
                        tokenizers::TokenMatrix& visual, tokenizers::TokenMatrix& audio);

struct Prediction {
  soundworld::Image image;
  soundworld::Audio audio;
  double reward = 0.0;
  // Scaled clean-space latents of the sample (for feeding back as context).
  tokenizers::TokenMatrix visual_latents;
  tokenizers::TokenMatrix audio_latents;
};

struct SamplerOptions {
  bool clip_denoised = true;
};

// Full-length ancestral DDPM reverse chain from pure noise, decoded through
// the tokenizers; the reward token is average-pooled into the scalar reward.
Prediction sample_fixed_step(const avcdit::ModelConfig& cfg, const avcdit::ParamStore& params,
                             const NoiseSchedule& schedule, const avcdit::ContextLatents& context,
                             avcdit::ConditioningInputs cond, Rng& rng,
                             const SamplerOptions& opt = {});

// Recursive next-frame prediction: repeated dt=1 fixed-step sampling with the
// context window sliding over generated frames. Returns one prediction per
// horizon step; rewards are per-step.
std::vector<Prediction> rollout_generate(const avcdit::ModelConfig& cfg,
                                         const avcdit::ParamStore& params,
                                         const NoiseSchedule& schedule,
                                         avcdit::ContextLatents context,
                                         const std::vector<soundworld::Action>& actions,
                                         int horizon, Rng& rng, const SamplerOptions& opt = {});

}  // namespace avwm::diffusion
