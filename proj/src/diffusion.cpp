#include "avwm/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "avwm/errors.hpp"

namespace avwm::diffusion {

using avcdit::ConditioningInputs;
using avcdit::ContextLatents;
using avcdit::ModelConfig;
using avcdit::ModelOutput;
using avcdit::TargetLatents;
using ndgrad::Tensor;
using tokenizers::TokenMatrix;

NoiseSchedule::NoiseSchedule(ScheduleConfig cfg) {
  if (cfg.steps < 1) throw ConfigError("schedule: K must be >= 1");
  if (!(0.0 < cfg.beta_min && cfg.beta_min < cfg.beta_max && cfg.beta_max < 1.0))
    throw ConfigError("schedule: need 0 < beta_min < beta_max < 1");
  beta_.resize(cfg.steps);
  alpha_bar_.resize(cfg.steps + 1);
  posterior_var_.resize(cfg.steps);
  alpha_bar_[0] = 1.0;
  for (int k = 1; k <= cfg.steps; ++k) {
    beta_[k - 1] = cfg.steps == 1 ? cfg.beta_min
                                  : cfg.beta_min + (cfg.beta_max - cfg.beta_min) * (k - 1) /
                                                       (cfg.steps - 1);
    alpha_bar_[k] = alpha_bar_[k - 1] * (1.0 - beta_[k - 1]);
  }
  for (int k = 1; k <= cfg.steps; ++k) {
    if (k == 1) {
      posterior_var_[0] = beta_[0];  // closed form is zero; floored, see header
    } else {
      posterior_var_[k - 1] = (1.0 - alpha_bar_[k - 1]) / (1.0 - alpha_bar_[k]) * beta_[k - 1];
    }
  }
}

int NoiseSchedule::check(int k) const {
  if (k < 1 || k > steps())
    throw ContractError("schedule: step " + std::to_string(k) + " outside [1, " +
                        std::to_string(steps()) + "]");
  return k;
}

namespace {

void noise_array(const std::vector<double>& clean, std::vector<double>& noised,
                 std::vector<double>& noise, double sqrt_ab, double sqrt_1ab, Rng& rng) {
  noised.resize(clean.size());
  noise.resize(clean.size());
  for (size_t i = 0; i < clean.size(); ++i) {
    noise[i] = rng.normal();
    noised[i] = sqrt_ab * clean[i] + sqrt_1ab * noise[i];
  }
}

}  // namespace

NoisedTarget forward_noise(const TargetLatents& clean, int k, const NoiseSchedule& schedule,
                           Rng& rng) {
  if (k < 0 || k > schedule.steps())
    throw ContractError("forward_noise: step " + std::to_string(k) + " outside [0, " +
                        std::to_string(schedule.steps()) + "]");
  const double ab = schedule.alpha_bar(k);
  const double sqrt_ab = std::sqrt(ab);
  const double sqrt_1ab = std::sqrt(1.0 - ab);

  NoisedTarget out;
  out.noised.visual = clean.visual;
  out.noise.visual = clean.visual;
  noise_array(clean.visual.data, out.noised.visual.data, out.noise.visual.data, sqrt_ab,
              sqrt_1ab, rng);
  out.noised.audio = clean.audio;
  out.noise.audio = clean.audio;
  noise_array(clean.audio.data, out.noised.audio.data, out.noise.audio.data, sqrt_ab, sqrt_1ab,
              rng);
  noise_array(clean.reward, out.noised.reward, out.noise.reward, sqrt_ab, sqrt_1ab, rng);
  return out;
}

namespace {

Tensor mse_sum(const Tensor& pred, const std::vector<double>& target, int rows, int cols) {
  Tensor t = Tensor::from(rows, cols, target);
  return ndgrad::sum_all(ndgrad::square(ndgrad::sub(pred, t)));
}

// KL between the true reverse posterior and the model's, per element, with
// the learned log-variance interpolated between log beta and log beta~.
Tensor vlb_kl(const Tensor& v, const std::vector<double>& clean,
              const std::vector<double>& noised, const Tensor& eps_hat, int rows, int cols,
              int k, const NoiseSchedule& s, bool detach_mean) {
  const double ab_k = s.alpha_bar(k);
  const double ab_prev = s.alpha_bar(k - 1);
  const double beta = s.beta(k);
  const double alpha = 1.0 - beta;
  const double beta_tilde = s.posterior_variance(k);
  const double log_beta = std::log(beta);
  const double log_beta_tilde = std::log(beta_tilde);

  // Posterior mean coefficients: mu = c0 * x0 + ck * x_k.
  const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab_k);
  const double ck = std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab_k);

  Tensor x0 = Tensor::from(rows, cols, clean);
  Tensor xk = Tensor::from(rows, cols, noised);
  Tensor eps = detach_mean ? ndgrad::detach(eps_hat) : eps_hat;
  // x0_hat = (x_k - sqrt(1-ab) eps_hat) / sqrt(ab)
  Tensor x0_hat = ndgrad::scalar_mul(
      ndgrad::sub(xk, ndgrad::scalar_mul(eps, std::sqrt(1.0 - ab_k))), 1.0 / std::sqrt(ab_k));
  Tensor mu_true = ndgrad::add(ndgrad::scalar_mul(x0, c0), ndgrad::scalar_mul(xk, ck));
  Tensor mu_pred = ndgrad::add(ndgrad::scalar_mul(x0_hat, c0), ndgrad::scalar_mul(xk, ck));

  // log sigma^2 = v log beta + (1-v) log beta~
  Tensor log_var = ndgrad::add_scalar(ndgrad::scalar_mul(v, log_beta - log_beta_tilde),
                                      log_beta_tilde);
  Tensor inv_var = ndgrad::exp(ndgrad::scalar_mul(log_var, -1.0));
  Tensor diff2 = ndgrad::square(ndgrad::sub(mu_true, mu_pred));
  Tensor kl = ndgrad::scalar_mul(
      ndgrad::add(ndgrad::add_scalar(ndgrad::sub(log_var, Tensor::full(rows, cols, log_beta_tilde)),
                                     -1.0),
                  ndgrad::mul(ndgrad::add_scalar(diff2, beta_tilde), inv_var)),
      0.5);
  return ndgrad::mean_all(kl);
}

}  // namespace

LossBreakdown training_loss(const ModelConfig& cfg, const ModelOutput& out,
                            const TargetLatents& clean, const NoisedTarget& noised, int k,
                            const NoiseSchedule& schedule, LossMask mask, LossNorm norm,
                            double lambda_vlb, bool detach_mean) {
  const int nv = cfg.visual_tokens(), dv = cfg.visual.token_dim();
  const int na = cfg.audio_tokens(), da = cfg.audio.token_dim();
  const int d = cfg.width;

  LossBreakdown result;
  std::vector<Tensor> terms;

  const bool use_visual = mask != LossMask::audio_reward_only;
  const bool use_audio = mask != LossMask::visual_only;

  if (use_visual) {
    Tensor sum_v = mse_sum(out.eps_visual, noised.noise.visual.data, nv, dv);
    const double denom = norm == LossNorm::per_modality_mean ? nv * dv : 1.0;
    Tensor term = ndgrad::scalar_mul(sum_v, 1.0 / denom);
    result.simple_visual = sum_v.item() / (nv * dv);
    terms.push_back(term);
  }
  if (use_audio) {
    Tensor sum_a = mse_sum(out.eps_audio, noised.noise.audio.data, na, da);
    Tensor sum_r = mse_sum(out.eps_reward, noised.noise.reward, 1, d);
    Tensor sum_ar = ndgrad::add(sum_a, sum_r);
    const double count = na * da + d;
    const double denom = norm == LossNorm::per_modality_mean ? count : 1.0;
    Tensor term = ndgrad::scalar_mul(sum_ar, 1.0 / denom);
    result.simple_audio_reward = sum_ar.item() / count;
    terms.push_back(term);
  }

  if (cfg.learned_variance && lambda_vlb != 0.0 && k >= 1) {
    std::vector<Tensor> vlb_terms;
    if (use_visual)
      vlb_terms.push_back(vlb_kl(out.var_visual, clean.visual.data, noised.noised.visual.data,
                                 out.eps_visual, nv, dv, k, schedule, detach_mean));
    if (use_audio) {
      vlb_terms.push_back(vlb_kl(out.var_audio, clean.audio.data, noised.noised.audio.data,
                                 out.eps_audio, na, da, k, schedule, detach_mean));
      vlb_terms.push_back(vlb_kl(out.var_reward, clean.reward, noised.noised.reward,
                                 out.eps_reward, 1, d, k, schedule, detach_mean));
    }
    Tensor vlb = vlb_terms[0];
    for (size_t i = 1; i < vlb_terms.size(); ++i) vlb = ndgrad::add(vlb, vlb_terms[i]);
    result.vlb = vlb.item();
    terms.push_back(ndgrad::scalar_mul(vlb, lambda_vlb));
  }

  Tensor total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = ndgrad::add(total, terms[i]);
  result.total = total;
  return result;
}

BodyDelta aggregate_action(const soundworld::AgentPose& from, const soundworld::AgentPose& to) {
  const double wx = to.x - from.x, wy = to.y - from.y;
  const double c = std::cos(-from.theta), s = std::sin(-from.theta);
  return {c * wx - s * wy, s * wx + c * wy, soundworld::wrap_angle(to.theta - from.theta)};
}

BodyDelta action_delta(soundworld::Action a) {
  switch (a) {
    case soundworld::Action::Forward: return {soundworld::kForwardStep, 0.0, 0.0};
    case soundworld::Action::TurnLeft: return {0.0, 0.0, soundworld::kTurnStep};
    case soundworld::Action::TurnRight: return {0.0, 0.0, -soundworld::kTurnStep};
    case soundworld::Action::Stop: return {0.0, 0.0, 0.0};
  }
  return {};
}

EncodedTrajectory encode_trajectory(trajgen::Trajectory traj, const soundworld::Scene& scene,
                                    const ModelConfig& cfg) {
  EncodedTrajectory et;
  et.poses = traj.replay_poses(scene);
  et.audio_latents.resize(traj.length());
  for (int f = 0; f < traj.length(); ++f) {
    const TokenMatrix tokens = tokenizers::encode_audio(traj.decode_audio(f), cfg.audio);
    auto& row = et.audio_latents[f];
    row.resize(tokens.data.size());
    for (size_t i = 0; i < tokens.data.size(); ++i)
      row[i] = static_cast<float>(LatentScaling::scale_audio(tokens.data[i]));
  }
  et.traj = std::move(traj);
  return et;
}

void fill_frame_latents(const EncodedTrajectory& et, int frame, const ModelConfig& cfg,
                        TokenMatrix& visual, TokenMatrix& audio) {
  const TokenMatrix raw = tokenizers::encode_visual(et.traj.decode_image(frame), cfg.visual);
  visual = raw;
  for (auto& v : visual.data) v = LatentScaling::scale_visual(v);
  audio.num_tokens = cfg.audio_tokens();
  audio.dim = cfg.audio.token_dim();
  const auto& cached = et.audio_latents[frame];
  audio.data.assign(cached.begin(), cached.end());
}

TrainingExample make_training_example(const EncodedTrajectory& et, int t, int dt,
                                      const ModelConfig& cfg) {
  if (t < 0 || dt < 1 || t + dt >= et.length())
    throw ContractError("training example: window (t=" + std::to_string(t) +
                        ", dt=" + std::to_string(dt) + ") outside trajectory of length " +
                        std::to_string(et.length()));
  TrainingExample ex;
  for (int f = t - cfg.context_frames + 1; f <= t; ++f) {
    const int src = std::max(0, f);  // repeat the first frame when history is short
    TokenMatrix v, a;
    fill_frame_latents(et, src, cfg, v, a);
    ex.context.visual.push_back(std::move(v));
    ex.context.audio.push_back(std::move(a));
  }
  fill_frame_latents(et, t + dt, cfg, ex.clean.visual, ex.clean.audio);
  ex.cumulative_reward = et.traj.cumulative_reward(t, t + dt);
  ex.clean.reward = tokenizers::reward_broadcast(ex.cumulative_reward, cfg.width);
  const BodyDelta delta = aggregate_action(et.poses[t], et.poses[t + dt]);
  ex.cond = {delta.dx, delta.dy, delta.dtheta, dt, 1};
  return ex;
}

namespace {

struct ChainState {
  TokenMatrix visual;
  TokenMatrix audio;
  std::vector<double> reward;
};

void clip_array(std::vector<double>& v, double lo, double hi) {
  for (auto& x : v) x = std::clamp(x, lo, hi);
}

}  // namespace

Prediction sample_fixed_step(const ModelConfig& cfg, const avcdit::ParamStore& params,
                             const NoiseSchedule& schedule, const ContextLatents& context,
                             ConditioningInputs cond, Rng& rng, const SamplerOptions& opt) {
  const int nv = cfg.visual_tokens(), dv = cfg.visual.token_dim();
  const int na = cfg.audio_tokens(), da = cfg.audio.token_dim();
  const int d = cfg.width;
  const int k_max = schedule.steps();

  ChainState x;
  x.visual = {nv, dv, std::vector<double>(static_cast<size_t>(nv) * dv)};
  x.audio = {na, da, std::vector<double>(static_cast<size_t>(na) * da)};
  x.reward.resize(d);
  for (auto& v : x.visual.data) v = rng.normal();
  for (auto& v : x.audio.data) v = rng.normal();
  for (auto& v : x.reward) v = rng.normal();

  // Clean-space clip ranges (scaled space): pixels map to [-1, 1]; a DCT
  // frame of unit-amplitude samples is bounded by sqrt(F) before scaling.
  const double audio_bound = 0.5 * std::sqrt(static_cast<double>(da));
  const double reward_bound = 4.0;

  for (int k = k_max; k >= 1; --k) {
    cond.diffusion_step = k;
    TargetLatents noised;
    noised.visual = x.visual;
    noised.audio = x.audio;
    noised.reward = x.reward;
    const ModelOutput out = avcdit::model_forward(cfg, params, noised, context, cond);

    const double ab = schedule.alpha_bar(k);
    const double ab_prev = schedule.alpha_bar(k - 1);
    const double beta = schedule.beta(k);
    const double alpha = 1.0 - beta;
    const double beta_tilde = schedule.posterior_variance(k);
    const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
    const double ck = std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab);
    const double log_beta = std::log(beta);
    const double log_beta_tilde = std::log(beta_tilde);

    auto update = [&](std::vector<double>& xs, const std::vector<double>& eps,
                      const std::vector<double>* var, double lo, double hi) {
      for (size_t i = 0; i < xs.size(); ++i) {
        double x0 = (xs[i] - std::sqrt(1.0 - ab) * eps[i]) / std::sqrt(ab);
        if (opt.clip_denoised) x0 = std::clamp(x0, lo, hi);
        double mean = c0 * x0 + ck * xs[i];
        if (k > 1) {
          double log_var = log_beta_tilde;
          if (var) log_var = (*var)[i] * log_beta + (1.0 - (*var)[i]) * log_beta_tilde;
          mean += std::exp(0.5 * log_var) * rng.normal();
        }
        xs[i] = mean;
        if (!std::isfinite(xs[i]))
          throw ContractError("sampler: non-finite latent at step " + std::to_string(k));
      }
    };
    update(x.visual.data, out.eps_visual.values(),
           cfg.learned_variance ? &out.var_visual.values() : nullptr, -1.0, 1.0);
    update(x.audio.data, out.eps_audio.values(),
           cfg.learned_variance ? &out.var_audio.values() : nullptr, -audio_bound, audio_bound);
    update(x.reward, out.eps_reward.values(),
           cfg.learned_variance ? &out.var_reward.values() : nullptr, -reward_bound,
           reward_bound);
  }

  clip_array(x.visual.data, -1.0, 1.0);
  clip_array(x.audio.data, -audio_bound, audio_bound);

  Prediction pred;
  pred.visual_latents = x.visual;
  pred.audio_latents = x.audio;

  TokenMatrix unscaled_v = x.visual;
  for (auto& v : unscaled_v.data) v = LatentScaling::unscale_visual(v);
  pred.image = tokenizers::decode_visual(unscaled_v, cfg.visual);
  for (auto& v : pred.image.rgb) v = std::clamp(v, 0.0, 1.0);

  TokenMatrix unscaled_a = x.audio;
  for (auto& v : unscaled_a.data) v = LatentScaling::unscale_audio(v);
  pred.audio = tokenizers::decode_audio(unscaled_a, cfg.audio);
  for (auto& v : pred.audio.lr) v = std::clamp(v, -1.0, 1.0);

  pred.reward = tokenizers::reward_pool(x.reward);
  return pred;
}

std::vector<Prediction> rollout_generate(const ModelConfig& cfg, const avcdit::ParamStore& params,
                                         const NoiseSchedule& schedule, ContextLatents context,
                                         const std::vector<soundworld::Action>& actions,
                                         int horizon, Rng& rng, const SamplerOptions& opt) {
  if (static_cast<int>(actions.size()) < horizon)
    throw ContractError("rollout: need one action per step, got " +
                        std::to_string(actions.size()) + " for horizon " +
                        std::to_string(horizon));
  std::vector<Prediction> out;
  out.reserve(horizon);
  for (int step = 0; step < horizon; ++step) {
    if (static_cast<int>(context.visual.size()) != cfg.context_frames ||
        static_cast<int>(context.audio.size()) != cfg.context_frames)
      throw ContractError("rollout: context window must hold exactly m frames");
    const BodyDelta delta = action_delta(actions[step]);
    ConditioningInputs cond{delta.dx, delta.dy, delta.dtheta, 1, 1};
    Prediction pred = sample_fixed_step(cfg, params, schedule, context, cond, rng, opt);
    // Slide the window: drop the oldest frame, append the generated one.
    context.visual.erase(context.visual.begin());
    context.audio.erase(context.audio.begin());
    context.visual.push_back(pred.visual_latents);
    context.audio.push_back(pred.audio_latents);
    out.push_back(std::move(pred));
  }
  return out;
}

}  // namespace avwm::diffusion
