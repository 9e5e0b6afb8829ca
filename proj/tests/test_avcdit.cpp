#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "avwm/avcdit.hpp"
#include "avwm/errors.hpp"
#include "avwm/gradcheck.hpp"
#include "avwm/rng.hpp"

using namespace avwm;
using namespace avwm::avcdit;
using ndgrad::ParamGroup;
using ndgrad::Tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.width = 16;
  cfg.num_blocks = 2;
  cfg.num_heads = 2;
  cfg.context_frames = 2;
  cfg.visual = {16, 8};       // 4 tokens of dim 192
  cfg.audio = {1200, 300};    // 8 tokens of dim 300
  return cfg;
}

tokenizers::TokenMatrix random_tokens(int n, int d, Rng& rng, double scale = 1.0) {
  tokenizers::TokenMatrix m{n, d, {}};
  m.data.resize(static_cast<size_t>(n) * d);
  for (auto& v : m.data) v = scale * rng.uniform(-1.0, 1.0);
  return m;
}

TargetLatents random_target(const ModelConfig& cfg, Rng& rng) {
  TargetLatents t;
  t.visual = random_tokens(cfg.visual_tokens(), cfg.visual.token_dim(), rng);
  t.audio = random_tokens(cfg.audio_tokens(), cfg.audio.token_dim(), rng);
  t.reward.resize(cfg.width);
  for (auto& v : t.reward) v = rng.uniform(-1.0, 1.0);
  return t;
}

ContextLatents random_context(const ModelConfig& cfg, Rng& rng) {
  ContextLatents c;
  for (int f = 0; f < cfg.context_frames; ++f) {
    c.visual.push_back(random_tokens(cfg.visual_tokens(), cfg.visual.token_dim(), rng));
    c.audio.push_back(random_tokens(cfg.audio_tokens(), cfg.audio.token_dim(), rng));
  }
  return c;
}

// Fill every zero-initialized tensor with random values so the network is
// not the identity; used by tests that need signal flowing everywhere.
void randomize_all(ParamStore& params, uint64_t seed, double scale = 0.05) {
  Rng rng(seed);
  for (auto& [name, e] : params.mutable_entries())
    for (auto& v : e.tensor.mutable_values()) v = scale * rng.uniform(-1.0, 1.0);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conditioning embedding is deterministic and additive in psi_k") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_params(cfg, 3);
  randomize_all(params, 17);
  ConditioningInputs a{0.15, 0.0, 0.1, 3, 10};
  Tensor c1 = embed_conditioning(cfg, params, a);
  Tensor c2 = embed_conditioning(cfg, params, a);
  CHECK(c1.values() == c2.values());

  // Changing only k shifts c_t by exactly psi_k(k) - psi_k(k').
  ConditioningInputs b = a;
  b.diffusion_step = 55;
  Tensor c3 = embed_conditioning(cfg, params, b);
  ConditioningInputs zero_action{0.0, 0.0, 0.0, a.temporal_offset, a.diffusion_step};
  ConditioningInputs zero_action2 = zero_action;
  zero_action2.diffusion_step = b.diffusion_step;
  Tensor d1 = embed_conditioning(cfg, params, zero_action);
  Tensor d2 = embed_conditioning(cfg, params, zero_action2);
  for (int j = 0; j < cfg.width; ++j) {
    const double lhs = c3.values()[j] - c1.values()[j];
    const double rhs = d2.values()[j] - d1.values()[j];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("sixteen temporal offsets embed to pairwise distinct vectors") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_params(cfg, 5);
  randomize_all(params, 23);
  std::vector<std::vector<double>> embeddings;
  for (int dt = 1; dt <= 16; ++dt) {
    ConditioningInputs c{0, 0, 0, dt, 1};
    embeddings.push_back(embed_conditioning(cfg, params, c).values());
  }
  double min_dist = 1e300;
  for (size_t i = 0; i < embeddings.size(); ++i)
    for (size_t j = i + 1; j < embeddings.size(); ++j) {
      double d = 0.0;
      for (size_t k = 0; k < embeddings[i].size(); ++k) {
        const double diff = embeddings[i][k] - embeddings[j][k];
        d += diff * diff;
      }
      min_dist = std::min(min_dist, std::sqrt(d));
    }
  CHECK(min_dist > 0.0);
}

TEST_CASE("adaln at zero init yields zero scale/shift/gate") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_params(cfg, 7);
  Tensor c_t = Tensor::zeros(1, cfg.width);
  BlockMods mods = adaln_modulate(cfg, params, 0, c_t);
  for (int s = 0; s < 3; ++s) {
    for (double v : mods.scale[s].values()) CHECK(v == 0.0);
    for (double v : mods.shift[s].values()) CHECK(v == 0.0);
    for (double v : mods.gate[s].values()) CHECK(v == 0.0);
  }
}

TEST_CASE("identity at init: residual stream equals the embedded input, output is zero") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_params(cfg, 11);
  Rng rng(31);
  TargetLatents target = random_target(cfg, rng);
  ContextLatents ctx = random_context(cfg, rng);
  ConditioningInputs cond{0.15, 0.0, 0.0, 2, 5};
  ModelOutput out = model_forward(cfg, params, target, ctx, cond);

  for (double v : out.eps_visual.values()) CHECK(v == 0.0);
  for (double v : out.eps_audio.values()) CHECK(v == 0.0);
  for (double v : out.eps_reward.values()) CHECK(v == 0.0);

  // The residual stream must equal the embedded input exactly: adaptor
  // projections plus target position embeddings, untouched by any block.
  using namespace ndgrad;
  Tensor xv = add(matmul(Tensor::from(target.visual.num_tokens, target.visual.dim,
                                      target.visual.data),
                         params.at("adaptor.visual.w")),
                  params.at("adaptor.visual.b"));
  Tensor xa = add(matmul(Tensor::from(target.audio.num_tokens, target.audio.dim,
                                      target.audio.data),
                         params.at("adaptor.audio.w")),
                  params.at("adaptor.audio.b"));
  Tensor xr = Tensor::from(1, cfg.width, target.reward);
  Tensor expected = add(concat({xv, xa, xr}, 0), params.at("pos.target"));
  CHECK(max_abs_diff(out.residual.values(), expected.values()) == 0.0);
}

TEST_CASE("conditioning reaches the output only through the AdaLN maps") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_params(cfg, 13);
  randomize_all(params, 41);
  // Zero every modulation map (including the final one): conditioning is
  // then provably inert.
  for (auto& [name, e] : params.mutable_entries())
    if (name.find("adaln") != std::string::npos)
      std::fill(e.tensor.mutable_values().begin(), e.tensor.mutable_values().end(), 0.0);

  Rng rng(43);
  TargetLatents target = random_target(cfg, rng);
  ContextLatents ctx = random_context(cfg, rng);
  ModelOutput a = model_forward(cfg, params, target, ctx, {0.15, 0, 0, 1, 3});
  ModelOutput b = model_forward(cfg, params, target, ctx, {-0.15, 0.1, 0.5, 9, 77});
  CHECK(a.eps_visual.values() == b.eps_visual.values());
  CHECK(a.eps_audio.values() == b.eps_audio.values());
  CHECK(a.eps_reward.values() == b.eps_reward.values());

  // Restoring one AdaLN map makes conditioning matter again.
  randomize_all(params, 41);
  ModelOutput c = model_forward(cfg, params, target, ctx, {0.15, 0, 0, 1, 3});
  ModelOutput d = model_forward(cfg, params, target, ctx, {-0.15, 0.1, 0.5, 9, 77});
  CHECK(max_abs_diff(c.eps_visual.values(), d.eps_visual.values()) > 0.0);
}

TEST_CASE("perturbing the visual expert leaves audio/reward FFN outputs unchanged") {
  ModelConfig cfg = tiny_config();
  cfg.num_blocks = 1;
  ParamStore params = init_params(cfg, 17);
  randomize_all(params, 47);
  Rng rng(53);
  TargetLatents target = random_target(cfg, rng);
  ContextLatents ctx = random_context(cfg, rng);
  ConditioningInputs cond{0.1, 0.0, 0.0, 1, 2};

  ModelOutput before = model_forward(cfg, params, target, ctx, cond);
  for (auto& v : params.at("block0.ffn.visual.w1").mutable_values()) v += 0.5;
  for (auto& v : params.at("block0.ffn.visual.b2").mutable_values()) v -= 0.25;
  ModelOutput after = model_forward(cfg, params, target, ctx, cond);

  CHECK(max_abs_diff(before.eps_audio.values(), after.eps_audio.values()) < 1e-12);
  CHECK(max_abs_diff(before.eps_reward.values(), after.eps_reward.values()) < 1e-12);
  CHECK(max_abs_diff(before.eps_visual.values(), after.eps_visual.values()) > 1e-6);
}

TEST_CASE("visual expert gets zero gradient from an audio/reward-only loss") {
  ModelConfig cfg = tiny_config();
  cfg.num_blocks = 1;
  ParamStore params = init_params(cfg, 19);
  randomize_all(params, 59);
  Rng rng(61);
  TargetLatents target = random_target(cfg, rng);
  ContextLatents ctx = random_context(cfg, rng);
  params.zero_grad();
  ModelOutput out = model_forward(cfg, params, target, ctx, {0, 0, 0, 1, 1});
  using namespace ndgrad;
  Tensor loss = add(mean_all(square(out.eps_audio)), mean_all(square(out.eps_reward)));
  backward(loss);
  for (const auto& [name, e] : params.entries()) {
    if (e.group == ParamGroup::visual_expert)
      for (double g : e.tensor.grad()) REQUIRE(g == 0.0);
    if (e.group == ParamGroup::visual_head)
      for (double g : e.tensor.grad()) REQUIRE(g == 0.0);
  }
  // The audio expert does receive gradient.
  double audio_norm = 0.0;
  for (double g : params.at("block0.ffn.audio.w1").grad()) audio_norm += g * g;
  CHECK(audio_norm > 0.0);
}

TEST_CASE("expert FFN is token-wise: permuting audio tokens permutes outputs") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_params(cfg, 23);
  randomize_all(params, 67);
  Rng rng(71);
  const int t = cfg.target_tokens();
  Tensor tokens = Tensor::zeros(t, cfg.width);
  for (auto& v : tokens.mutable_values()) v = rng.uniform(-1.0, 1.0);
  Tensor out = expert_ffn(cfg, params, 0, tokens);

  // Swap two audio-token rows of the input.
  const int a0 = cfg.visual_tokens();
  std::vector<double> swapped = tokens.values();
  for (int j = 0; j < cfg.width; ++j)
    std::swap(swapped[(a0 + 1) * cfg.width + j], swapped[(a0 + 3) * cfg.width + j]);
  Tensor out2 = expert_ffn(cfg, params, 0, Tensor::from(t, cfg.width, swapped));

  for (int j = 0; j < cfg.width; ++j) {
    CHECK(out.at(a0 + 1, j) == doctest::Approx(out2.at(a0 + 3, j)).epsilon(1e-14));
    CHECK(out.at(a0 + 3, j) == doctest::Approx(out2.at(a0 + 1, j)).epsilon(1e-14));
  }
}

TEST_CASE("without modality experts the audio-expert entries are absent and inert") {
  ModelConfig cfg = tiny_config();
  cfg.modality_experts = false;
  ParamStore shared = init_params(cfg, 29);
  ModelConfig expert_cfg = tiny_config();
  ParamStore experts = init_params(expert_cfg, 29);
  // One shared FFN instead of two experts: strictly fewer parameters.
  CHECK(shared.num_values() < experts.num_values());
  CHECK(shared.num_values({ParamGroup::audio_expert}) == 0);

  // Injecting expert-named tensors into the store does not change the
  // forward pass; the shared path never reads them.
  randomize_all(shared, 73);
  Rng rng(79);
  TargetLatents target = random_target(cfg, rng);
  ContextLatents ctx = random_context(cfg, rng);
  ConditioningInputs cond{0, 0, 0, 1, 1};
  ModelOutput a = model_forward(cfg, shared, target, ctx, cond);
  Rng junk(83);
  for (int i = 0; i < cfg.num_blocks; ++i) {
    const std::string b = "block" + std::to_string(i);
    shared.add(b + ".ffn.visual.dead", ParamGroup::visual_expert,
               Tensor::from(4, 4, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16}, true));
    shared.add(b + ".ffn.audio.dead", ParamGroup::audio_expert,
               Tensor::from(4, 4, {9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9, 9}, true));
  }
  ModelOutput b2 = model_forward(cfg, shared, target, ctx, cond);
  CHECK(a.eps_visual.values() == b2.eps_visual.values());
  CHECK(a.eps_audio.values() == b2.eps_audio.values());
}

TEST_CASE("output shapes follow the config") {
  ModelConfig cfg;  // desk defaults: D=64, 4 blocks, P=8 on 32px, F=300 on 2400
  ParamStore params = init_params(cfg, 31);
  Rng rng(89);
  TargetLatents target = random_target(cfg, rng);
  ContextLatents ctx = random_context(cfg, rng);
  ModelOutput out = model_forward(cfg, params, target, ctx, {0, 0, 0, 1, 1});
  CHECK(out.eps_visual.rows() == 16);
  CHECK(out.eps_visual.cols() == 192);
  CHECK(out.eps_audio.rows() == 16);
  CHECK(out.eps_audio.cols() == 300);
  CHECK(out.eps_reward.rows() == 1);
  CHECK(out.eps_reward.cols() == 64);
  CHECK(out.var_visual.rows() == 16);
  CHECK(out.var_audio.cols() == 300);
  CHECK(out.var_reward.cols() == 64);
  for (double v : out.var_visual.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("forward pass is a pure function of inputs and parameters") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_params(cfg, 37);
  randomize_all(params, 97);
  Rng rng(101);
  TargetLatents target = random_target(cfg, rng);
  ContextLatents ctx = random_context(cfg, rng);
  ConditioningInputs cond{0.1, -0.05, 0.2, 4, 9};
  ModelOutput a = model_forward(cfg, params, target, ctx, cond);
  ModelOutput b = model_forward(cfg, params, target, ctx, cond);
  CHECK(a.eps_visual.values() == b.eps_visual.values());
  CHECK(a.eps_audio.values() == b.eps_audio.values());
  CHECK(a.var_audio.values() == b.var_audio.values());
}

TEST_CASE("after a few optimizer steps every parameter group receives gradient") {
  ModelConfig cfg = tiny_config();
  ParamStore params = init_params(cfg, 41);
  ndgrad::AdamW opt({.lr = 1e-3});
  Rng rng(103);
  TargetLatents target = random_target(cfg, rng);
  ContextLatents ctx = random_context(cfg, rng);
  ConditioningInputs cond{0.15, 0, 0, 2, 3};
  const std::set<ParamGroup> all_groups = {
      ParamGroup::self_attn,     ParamGroup::cross_attn,   ParamGroup::visual_expert,
      ParamGroup::audio_expert,  ParamGroup::visual_adaptor, ParamGroup::audio_adaptor,
      ParamGroup::visual_head,   ParamGroup::audio_head,   ParamGroup::conditioning};

  using namespace ndgrad;
  for (int it = 0; it < 3; ++it) {
    params.zero_grad();
    ModelOutput out = model_forward(cfg, params, target, ctx, cond);
    Tensor noise_v = Tensor::full(out.eps_visual.rows(), out.eps_visual.cols(), 0.3);
    Tensor noise_a = Tensor::full(out.eps_audio.rows(), out.eps_audio.cols(), -0.2);
    Tensor noise_r = Tensor::full(1, cfg.width, 0.1);
    Tensor loss = add(mean_all(square(sub(out.eps_visual, noise_v))),
                      add(mean_all(square(sub(out.eps_audio, noise_a))),
                          mean_all(square(sub(out.eps_reward, noise_r)))));
    backward(loss);
    opt.step(params, all_groups);
  }

  params.zero_grad();
  ModelOutput out = model_forward(cfg, params, target, ctx, cond);
  Tensor loss = add(mean_all(square(out.eps_visual)),
                    add(mean_all(square(out.eps_audio)), mean_all(square(out.eps_reward))));
  backward(loss);
  std::map<ParamGroup, double> group_norm;
  for (const auto& [name, e] : params.entries())
    for (double g : e.tensor.grad()) group_norm[e.group] += g * g;
  for (const auto& g : all_groups) {
    CAPTURE(ndgrad::to_string(g));
    CHECK(group_norm[g] > 0.0);
  }
}

TEST_CASE("full-model analytic gradients match finite differences") {
  ModelConfig cfg;
  cfg.width = 8;
  cfg.num_blocks = 1;
  cfg.num_heads = 2;
  cfg.context_frames = 2;
  cfg.visual = {8, 8};      // 1 token of dim 192
  cfg.audio = {300, 300};   // 2 tokens of dim 300
  cfg.learned_variance = false;
  ParamStore params = init_params(cfg, 43);
  randomize_all(params, 107, 0.2);
  Rng rng(109);
  TargetLatents target = random_target(cfg, rng);
  ContextLatents ctx = random_context(cfg, rng);
  ConditioningInputs cond{0.15, -0.1, 0.3, 2, 7};
  tokenizers::TokenMatrix noise_v = random_tokens(1, 192, rng);
  tokenizers::TokenMatrix noise_a = random_tokens(2, 300, rng);

  auto loss_fn = [&] {
    using namespace ndgrad;
    ModelOutput out = model_forward(cfg, params, target, ctx, cond);
    Tensor nv = Tensor::from(1, 192, noise_v.data);
    Tensor na = Tensor::from(2, 300, noise_a.data);
    return add(mean_all(square(sub(out.eps_visual, nv))),
               add(mean_all(square(sub(out.eps_audio, na))),
                   mean_all(square(out.eps_reward))));
  };
  auto res = ndgrad::finite_difference_check(params, loss_fn);
  CAPTURE(res.worst_param);
  CAPTURE(res.checked);
  CHECK(res.max_rel_err < 1e-4);
}
