#include "avwm/avcdit.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "avwm/errors.hpp"
#include "avwm/rng.hpp"

namespace avwm::avcdit {

using ndgrad::ParamGroup;
using ndgrad::Tensor;

namespace {

constexpr int kNumFrequencies = 32;

std::string block_name(int i) { return "block" + std::to_string(i); }

Tensor xavier(int rows, int cols, Rng& rng) {
  const double a = std::sqrt(6.0 / (rows + cols));
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  for (auto& x : v) x = rng.uniform(-a, a);
  return Tensor::from(rows, cols, std::move(v), true);
}

Tensor small_normal(int rows, int cols, Rng& rng, double std_dev = 0.02) {
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  for (auto& x : v) x = std_dev * rng.normal();
  return Tensor::from(rows, cols, std::move(v), true);
}

Tensor zeros_param(int rows, int cols) { return Tensor::zeros(rows, cols, true); }

// Linear projection with a trainable bias row.
Tensor linear(const ParamStore& p, const std::string& prefix, const Tensor& x) {
  return ndgrad::add(ndgrad::matmul(x, p.at(prefix + ".w")), p.at(prefix + ".b"));
}

Tensor constant_row(int cols, double value) { return Tensor::full(1, cols, value); }

Tensor token_tensor(const tokenizers::TokenMatrix& m) {
  return Tensor::from(m.num_tokens, m.dim, m.data);
}

}  // namespace

void ModelConfig::validate() const {
  if (width <= 0 || num_blocks <= 0 || num_heads <= 0)
    throw ConfigError("model: width, blocks and heads must be positive");
  if (width % num_heads != 0) throw ConfigError("model: width must be divisible by num_heads");
  if (context_frames < 1) throw ConfigError("model: context length m must be >= 1");
  if (offset_min < 1 || offset_min > offset_max)
    throw ConfigError("model: offset range must satisfy 1 <= T_min <= T_max");
  if (visual.image_size % visual.patch != 0)
    throw ConfigError("model: image size not divisible by patch");
  if (audio.frame_samples % audio.dct_frame != 0)
    throw ConfigError("model: audio frame not divisible by DCT frame");
}

int sinusoidal_dim() { return 2 * kNumFrequencies; }

std::vector<double> sinusoidal_features(double value) {
  std::vector<double> out(sinusoidal_dim());
  for (int i = 0; i < kNumFrequencies; ++i) {
    // Periods geometric from 1 to 1e4.
    const double period = std::pow(10.0, 4.0 * i / (kNumFrequencies - 1));
    const double a = 2.0 * std::numbers::pi * value / period;
    out[2 * i] = std::sin(a);
    out[2 * i + 1] = std::cos(a);
  }
  return out;
}

ParamStore init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng = Rng::derive(seed, 0x61766364);  // stream tag for model init
  ParamStore p;
  const int d = cfg.width;
  const int dv = cfg.visual.token_dim();
  const int da = cfg.audio.token_dim();
  const int s = sinusoidal_dim();

  p.add("adaptor.visual.w", ParamGroup::visual_adaptor, xavier(dv, d, rng));
  p.add("adaptor.visual.b", ParamGroup::visual_adaptor, zeros_param(1, d));
  p.add("adaptor.audio.w", ParamGroup::audio_adaptor, xavier(da, d, rng));
  p.add("adaptor.audio.b", ParamGroup::audio_adaptor, zeros_param(1, d));

  // Conditioning MLPs: action components embedded separately and
  // concatenated, then a two-layer MLP per input.
  const struct {
    const char* name;
    int in;
  } conds[] = {{"cond.action", 3 * s}, {"cond.offset", s}, {"cond.step", s}};
  for (const auto& c : conds) {
    p.add(std::string(c.name) + ".w1", ParamGroup::conditioning, xavier(c.in, d, rng));
    p.add(std::string(c.name) + ".b1", ParamGroup::conditioning, zeros_param(1, d));
    p.add(std::string(c.name) + ".w2", ParamGroup::conditioning, xavier(d, d, rng));
    p.add(std::string(c.name) + ".b2", ParamGroup::conditioning, zeros_param(1, d));
  }

  p.add("pos.target", ParamGroup::conditioning, small_normal(cfg.target_tokens(), d, rng));
  p.add("pos.context_frame", ParamGroup::conditioning,
        small_normal(cfg.context_frames, d, rng));
  p.add("pos.context_token", ParamGroup::conditioning, small_normal(cfg.frame_tokens(), d, rng));

  for (int i = 0; i < cfg.num_blocks; ++i) {
    const std::string b = block_name(i);
    for (const char* attn : {"self", "cross"}) {
      const ParamGroup g =
          std::string(attn) == "self" ? ParamGroup::self_attn : ParamGroup::cross_attn;
      for (const char* w : {"wq", "wk", "wv", "wo"})
        p.add(b + "." + attn + "." + w, g, xavier(d, d, rng));
      for (const char* bias : {"bq", "bk", "bv", "bo"})
        p.add(b + "." + attn + "." + bias, g, zeros_param(1, d));
    }
    // AdaLN map: 3 sublayers x (scale, shift, gate); zero-initialized so each
    // block starts as the identity.
    p.add(b + ".adaln.w", ParamGroup::conditioning, zeros_param(d, 9 * d));
    p.add(b + ".adaln.b", ParamGroup::conditioning, zeros_param(1, 9 * d));

    const int hidden = cfg.ffn_mult * d;
    if (cfg.modality_experts) {
      for (const char* expert : {"visual", "audio"}) {
        const ParamGroup g = std::string(expert) == "visual" ? ParamGroup::visual_expert
                                                             : ParamGroup::audio_expert;
        p.add(b + ".ffn." + expert + ".w1", g, xavier(d, hidden, rng));
        p.add(b + ".ffn." + expert + ".b1", g, zeros_param(1, hidden));
        p.add(b + ".ffn." + expert + ".w2", g, xavier(hidden, d, rng));
        p.add(b + ".ffn." + expert + ".b2", g, zeros_param(1, d));
      }
    } else {
      // Shared feed-forward replacing the experts; it takes the visual
      // expert's place in the freezing schedule.
      p.add(b + ".ffn.shared.w1", ParamGroup::visual_expert, xavier(d, hidden, rng));
      p.add(b + ".ffn.shared.b1", ParamGroup::visual_expert, zeros_param(1, hidden));
      p.add(b + ".ffn.shared.w2", ParamGroup::visual_expert, xavier(hidden, d, rng));
      p.add(b + ".ffn.shared.b2", ParamGroup::visual_expert, zeros_param(1, d));
    }
  }

  p.add("final.adaln.w", ParamGroup::conditioning, zeros_param(d, 2 * d));
  p.add("final.adaln.b", ParamGroup::conditioning, zeros_param(1, 2 * d));

  const int vmult = cfg.learned_variance ? 2 : 1;
  p.add("head.visual.w", ParamGroup::visual_head, zeros_param(d, vmult * dv));
  p.add("head.visual.b", ParamGroup::visual_head, zeros_param(1, vmult * dv));
  p.add("head.audio.w", ParamGroup::audio_head, zeros_param(d, vmult * da));
  p.add("head.audio.b", ParamGroup::audio_head, zeros_param(1, vmult * da));
  p.add("head.reward.w", ParamGroup::audio_head, zeros_param(d, vmult * d));
  p.add("head.reward.b", ParamGroup::audio_head, zeros_param(1, vmult * d));
  return p;
}

Tensor embed_conditioning(const ModelConfig& cfg, const ParamStore& params,
                          const ConditioningInputs& cond) {
  (void)cfg;
  auto mlp = [&params](const std::string& prefix, std::vector<double> feats) {
    const int n = static_cast<int>(feats.size());
    Tensor f = Tensor::from(1, n, std::move(feats));
    Tensor h = ndgrad::silu(ndgrad::add(ndgrad::matmul(f, params.at(prefix + ".w1")),
                                        params.at(prefix + ".b1")));
    return ndgrad::add(ndgrad::matmul(h, params.at(prefix + ".w2")), params.at(prefix + ".b2"));
  };
  std::vector<double> action_feats = sinusoidal_features(cond.dx);
  const auto fy = sinusoidal_features(cond.dy);
  const auto ft = sinusoidal_features(cond.dtheta);
  action_feats.insert(action_feats.end(), fy.begin(), fy.end());
  action_feats.insert(action_feats.end(), ft.begin(), ft.end());

  Tensor psi_a = mlp("cond.action", std::move(action_feats));
  Tensor psi_dt = mlp("cond.offset", sinusoidal_features(cond.temporal_offset));
  Tensor psi_k = mlp("cond.step", sinusoidal_features(cond.diffusion_step));
  return ndgrad::add(ndgrad::add(psi_a, psi_dt), psi_k);
}

BlockMods adaln_modulate(const ModelConfig& cfg, const ParamStore& params, int block,
                         const ndgrad::Tensor& c_t) {
  const int d = cfg.width;
  Tensor raw = linear(params, block_name(block) + ".adaln", c_t);
  auto parts = ndgrad::split(raw, std::vector<int>(9, d), 1);
  BlockMods mods;
  for (int s = 0; s < 3; ++s) {
    mods.scale[s] = parts[3 * s];
    mods.shift[s] = parts[3 * s + 1];
    mods.gate[s] = parts[3 * s + 2];
  }
  return mods;
}

namespace {

Tensor modulated_norm(const Tensor& x, const Tensor& scale, const Tensor& shift) {
  const Tensor ones = constant_row(x.cols(), 1.0);
  const Tensor zeros = constant_row(x.cols(), 0.0);
  Tensor n = ndgrad::layer_norm(x, ones, zeros);
  return ndgrad::add(ndgrad::mul(n, ndgrad::add_scalar(scale, 1.0)), shift);
}

Tensor attention(const ModelConfig& cfg, const ParamStore& p, const std::string& prefix,
                 const Tensor& queries_in, const Tensor& kv_in) {
  const int d = cfg.width;
  const int dh = d / cfg.num_heads;
  Tensor qf = ndgrad::add(ndgrad::matmul(queries_in, p.at(prefix + ".wq")), p.at(prefix + ".bq"));
  Tensor kf = ndgrad::add(ndgrad::matmul(kv_in, p.at(prefix + ".wk")), p.at(prefix + ".bk"));
  Tensor vf = ndgrad::add(ndgrad::matmul(kv_in, p.at(prefix + ".wv")), p.at(prefix + ".bv"));
  const std::vector<int> head_sizes(cfg.num_heads, dh);
  auto qh = ndgrad::split(qf, head_sizes, 1);
  auto kh = ndgrad::split(kf, head_sizes, 1);
  auto vh = ndgrad::split(vf, head_sizes, 1);
  std::vector<Tensor> outs;
  outs.reserve(cfg.num_heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < cfg.num_heads; ++h) {
    Tensor scores = ndgrad::scalar_mul(ndgrad::matmul_nt(qh[h], kh[h]), inv_sqrt);
    outs.push_back(ndgrad::matmul(ndgrad::softmax(scores), vh[h]));
  }
  Tensor merged = ndgrad::concat(outs, 1);
  return ndgrad::add(ndgrad::matmul(merged, p.at(prefix + ".wo")), p.at(prefix + ".bo"));
}

}  // namespace

Tensor expert_ffn(const ModelConfig& cfg, const ParamStore& params, int block,
                  const Tensor& tokens) {
  const std::string b = block_name(block);
  auto ffn = [&](const std::string& prefix, const Tensor& x) {
    Tensor h = ndgrad::gelu(
        ndgrad::add(ndgrad::matmul(x, params.at(prefix + ".w1")), params.at(prefix + ".b1")));
    return ndgrad::add(ndgrad::matmul(h, params.at(prefix + ".w2")), params.at(prefix + ".b2"));
  };
  if (!cfg.modality_experts) return ffn(b + ".ffn.shared", tokens);
  if (tokens.rows() != cfg.target_tokens())
    throw ContractError("expert_ffn: expected " + std::to_string(cfg.target_tokens()) +
                        " target rows, got " + std::to_string(tokens.rows()));
  // Visual tokens route to the visual expert; audio and reward tokens to the
  // audio expert; order is preserved on re-concatenation.
  auto groups = ndgrad::split(tokens, {cfg.visual_tokens(), cfg.audio_tokens() + 1}, 0);
  Tensor visual_out = ffn(b + ".ffn.visual", groups[0]);
  Tensor audio_out = ffn(b + ".ffn.audio", groups[1]);
  return ndgrad::concat({visual_out, audio_out}, 0);
}

ModelOutput model_forward(const ModelConfig& cfg, const ParamStore& params,
                          const TargetLatents& noised_target, const ContextLatents& context,
                          const ConditioningInputs& cond) {
  cfg.validate();
  const int d = cfg.width;
  const int nv = cfg.visual_tokens();
  const int na = cfg.audio_tokens();
  if (noised_target.visual.num_tokens != nv || noised_target.visual.dim != cfg.visual.token_dim())
    throw ContractError("model_forward: visual latents are " +
                        std::to_string(noised_target.visual.num_tokens) + "x" +
                        std::to_string(noised_target.visual.dim));
  if (noised_target.audio.num_tokens != na || noised_target.audio.dim != cfg.audio.token_dim())
    throw ContractError("model_forward: audio latents are " +
                        std::to_string(noised_target.audio.num_tokens) + "x" +
                        std::to_string(noised_target.audio.dim));
  if (static_cast<int>(noised_target.reward.size()) != d)
    throw ContractError("model_forward: reward token dim " +
                        std::to_string(noised_target.reward.size()) + " != width");
  if (static_cast<int>(context.visual.size()) != cfg.context_frames ||
      static_cast<int>(context.audio.size()) != cfg.context_frames)
    throw ContractError("model_forward: context must hold exactly m frames");
  if (cond.temporal_offset < cfg.offset_min || cond.temporal_offset > cfg.offset_max)
    throw ContractError("model_forward: temporal offset " +
                        std::to_string(cond.temporal_offset) + " outside config range");

  Tensor c_t = embed_conditioning(cfg, params, cond);

  // Target tokens: adaptor projections to width, plus learned positions.
  Tensor xv = linear(params, "adaptor.visual", token_tensor(noised_target.visual));
  Tensor xa = linear(params, "adaptor.audio", token_tensor(noised_target.audio));
  Tensor xr = Tensor::from(1, d, noised_target.reward);
  Tensor x = ndgrad::add(ndgrad::concat({xv, xa, xr}, 0), params.at("pos.target"));

  // Context tokens: per-frame adaptor projections plus token-index and
  // frame-slot embeddings, normalized once for all blocks.
  auto frame_slots = ndgrad::split(params.at("pos.context_frame"),
                                   std::vector<int>(cfg.context_frames, 1), 0);
  std::vector<Tensor> frames;
  frames.reserve(cfg.context_frames);
  for (int f = 0; f < cfg.context_frames; ++f) {
    Tensor cv = linear(params, "adaptor.visual", token_tensor(context.visual[f]));
    Tensor ca = linear(params, "adaptor.audio", token_tensor(context.audio[f]));
    Tensor frame = ndgrad::add(ndgrad::concat({cv, ca}, 0), params.at("pos.context_token"));
    frames.push_back(ndgrad::add(frame, frame_slots[f]));
  }
  Tensor ctx = ndgrad::concat(frames, 0);
  Tensor ctx_n = ndgrad::layer_norm(ctx, constant_row(d, 1.0), constant_row(d, 0.0));

  for (int i = 0; i < cfg.num_blocks; ++i) {
    const std::string b = block_name(i);
    const BlockMods mods = adaln_modulate(cfg, params, i, c_t);
    Tensor h = modulated_norm(x, mods.scale[0], mods.shift[0]);
    x = ndgrad::add(x, ndgrad::mul(attention(cfg, params, b + ".self", h, h), mods.gate[0]));
    Tensor h2 = modulated_norm(x, mods.scale[1], mods.shift[1]);
    x = ndgrad::add(x,
                    ndgrad::mul(attention(cfg, params, b + ".cross", h2, ctx_n), mods.gate[1]));
    Tensor h3 = modulated_norm(x, mods.scale[2], mods.shift[2]);
    x = ndgrad::add(x, ndgrad::mul(expert_ffn(cfg, params, i, h3), mods.gate[2]));
  }

  // Final AdaLN-modulated norm, then per-modality heads.
  Tensor final_raw = linear(params, "final.adaln", c_t);
  auto fparts = ndgrad::split(final_raw, {d, d}, 1);
  Tensor n = modulated_norm(x, fparts[0], fparts[1]);
  auto streams = ndgrad::split(n, {nv, na, 1}, 0);

  ModelOutput out;
  out.residual = x;
  Tensor hv = linear(params, "head.visual", streams[0]);
  Tensor ha = linear(params, "head.audio", streams[1]);
  Tensor hr = linear(params, "head.reward", streams[2]);
  if (cfg.learned_variance) {
    auto pv = ndgrad::split(hv, {cfg.visual.token_dim(), cfg.visual.token_dim()}, 1);
    auto pa = ndgrad::split(ha, {cfg.audio.token_dim(), cfg.audio.token_dim()}, 1);
    auto pr = ndgrad::split(hr, {d, d}, 1);
    out.eps_visual = pv[0];
    out.eps_audio = pa[0];
    out.eps_reward = pr[0];
    out.var_visual = ndgrad::sigmoid(pv[1]);
    out.var_audio = ndgrad::sigmoid(pa[1]);
    out.var_reward = ndgrad::sigmoid(pr[1]);
  } else {
    out.eps_visual = hv;
    out.eps_audio = ha;
    out.eps_reward = hr;
  }
  return out;
}

}  // namespace avwm::avcdit
