#pragma once

#include <cstdint>
#include <vector>

#include "avwm/param_store.hpp"
#include "avwm/tokenizers.hpp"

namespace avwm::avcdit {

using ndgrad::ParamStore;

// Conditional diffusion transformer over joint visual/audio/reward token
// sequences. The target sequence is [visual tokens : audio tokens : reward
// token]; context frames are cross-attended. Conditioning (aggregated
// action, temporal offset, diffusion step) modulates every sublayer through
// zero-initialized AdaLN scale/shift/gate triples, so each block is the
// identity on its residual stream at initialization and the heads emit zero.

struct ModelConfig {
  int width = 64;          // D, shared token width
  int num_blocks = 4;
  int num_heads = 4;
  int context_frames = 4;  // m
  int offset_min = 1;      // T_min (frames)
  int offset_max = 16;     // T_max (frames)
  bool modality_experts = true;
  bool learned_variance = true;
  int ffn_mult = 4;
  tokenizers::VisualTokenizerConfig visual;
  tokenizers::AudioTokenizerConfig audio;

  int visual_tokens() const { return visual.tokens_per_frame(); }
  int audio_tokens() const { return audio.tokens_per_frame(); }
  int target_tokens() const { return visual_tokens() + audio_tokens() + 1; }
  int frame_tokens() const { return visual_tokens() + audio_tokens(); }
  int context_tokens() const { return context_frames * frame_tokens(); }
  void validate() const;  // throws ConfigError
};

// Aggregated action in the body frame of the context's last pose, plus the
// temporal offset and diffusion step.
struct ConditioningInputs {
  double dx = 0.0;
  double dy = 0.0;
  double dtheta = 0.0;
  int temporal_offset = 1;  // in [offset_min, offset_max]
  int diffusion_step = 1;   // k in [1, K]; 0 allowed as the identity test hook
};

// Clean or noised target latents in their native (tokenizer) dimensions.
// The reward token already lives at model width.
struct TargetLatents {
  tokenizers::TokenMatrix visual;  // N_v x D_v
  tokenizers::TokenMatrix audio;   // N_a x D_a
  std::vector<double> reward;      // width
};

// m frames of clean context latents, oldest first.
struct ContextLatents {
  std::vector<tokenizers::TokenMatrix> visual;
  std::vector<tokenizers::TokenMatrix> audio;
};

struct ModelOutput {
  ndgrad::Tensor eps_visual;  // N_v x D_v
  ndgrad::Tensor eps_audio;   // N_a x D_a
  ndgrad::Tensor eps_reward;  // 1 x width
  // Variance interpolation coefficients in [0, 1]; defined only when
  // learned_variance is enabled.
  ndgrad::Tensor var_visual;
  ndgrad::Tensor var_audio;
  ndgrad::Tensor var_reward;
  // Token stream entering the final norm (after all blocks).
  ndgrad::Tensor residual;
};

// Per-sublayer AdaLN modulation parameters for one block.
struct BlockMods {
  ndgrad::Tensor scale[3];
  ndgrad::Tensor shift[3];
  ndgrad::Tensor gate[3];
};

int sinusoidal_dim();
// Sinusoidal features of a scalar: 32 frequencies, periods geometric from
// 1 to 1e4, sin and cos per frequency.
std::vector<double> sinusoidal_features(double value);

ParamStore init_params(const ModelConfig& cfg, uint64_t seed);

ndgrad::Tensor embed_conditioning(const ModelConfig& cfg, const ParamStore& params,
                                  const ConditioningInputs& cond);

BlockMods adaln_modulate(const ModelConfig& cfg, const ParamStore& params, int block,
                         const ndgrad::Tensor& c_t);

// Expert feed-forward sublayer (routing only, no LN/gate); exposed for the
// per-token equivariance and isolation tests. Rows follow the target layout
// [visual | audio | reward].
ndgrad::Tensor expert_ffn(const ModelConfig& cfg, const ParamStore& params, int block,
                          const ndgrad::Tensor& tokens);

ModelOutput model_forward(const ModelConfig& cfg, const ParamStore& params,
                          const TargetLatents& noised_target, const ContextLatents& context,
                          const ConditioningInputs& cond);

}  // namespace avwm::avcdit
