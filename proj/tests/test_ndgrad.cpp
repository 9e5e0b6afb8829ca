#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "avwm/errors.hpp"
#include "avwm/gradcheck.hpp"
#include "avwm/ndgrad.hpp"
#include "avwm/param_store.hpp"
#include "avwm/rng.hpp"

using namespace avwm;
using namespace avwm::ndgrad;

namespace {

Tensor random_leaf(int rows, int cols, Rng& rng, bool requires_grad = true) {
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(rows, cols, std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("matmul identity-padded example") {
  // 2x3 times a 3x2 matrix holding the first two columns of the identity:
  // the product selects the left matrix's first two columns.
  Tensor a = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from(3, 2, {1, 0, 0, 1, 0, 0});
  Tensor c = matmul(a, b);
  CHECK(c.values() == std::vector<double>{1, 2, 4, 5});
}

TEST_CASE("matmul shape mismatch names shapes") {
  Tensor a = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from(2, 2, {1, 0, 0, 1});
  CHECK_THROWS_WITH_AS(matmul(a, b), "matmul: 2x3 vs 2x2", DimensionError);
}

TEST_CASE("layer_norm of a constant row is zero") {
  Tensor x = Tensor::full(1, 8, 3.25);
  Tensor one = Tensor::full(1, 8, 1.0);
  Tensor zero = Tensor::zeros(1, 8);
  Tensor y = layer_norm(x, one, zero);
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("softmax of zeros is uniform") {
  Tensor x = Tensor::zeros(1, 4);
  Tensor y = softmax(x);
  for (double v : y.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("backward of sum of squares") {
  Tensor x = Tensor::from(1, 2, {1.0, -2.0}, true);
  Tensor loss = sum_all(square(x));
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(-4.0));
}

TEST_CASE("backward requires scalar loss and runs once") {
  Tensor x = Tensor::from(1, 2, {1.0, 2.0}, true);
  Tensor y = square(x);
  CHECK_THROWS_AS(backward(y), ContractError);
  Tensor loss = sum_all(y);
  backward(loss);
  CHECK_THROWS_AS(backward(loss), UsageError);
}

TEST_CASE("mean of layer_norm gradient vs finite differences") {
  Rng rng(7);
  ParamStore params;
  params.add("x", ParamGroup::conditioning, random_leaf(3, 16, rng));
  Tensor one = Tensor::full(1, 16, 1.0);
  Tensor zero = Tensor::zeros(1, 16);
  auto loss_fn = [&] {
    // A nonlinear readout so the gradient is not trivially constant.
    Tensor n = layer_norm(params.at("x"), one, zero);
    return mean_all(mul(n, silu(n)));
  };
  auto res = finite_difference_check(params, loss_fn);
  CHECK(res.max_rel_err < 1e-4);

  // Orthogonal-to-constant property: the gradient of any function of
  // layer_norm(x) has (near) zero row sums.
  params.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);
  const auto& g = params.at("x").grad();
  for (int r = 0; r < 3; ++r) {
    double s = 0.0;
    for (int c = 0; c < 16; ++c) s += g[r * 16 + c];
    CHECK(std::abs(s) < 1e-12);
  }
}

TEST_CASE("composed graph gradients match finite differences") {
  // A graph touching every primitive the transformer uses, < 500 params.
  Rng rng(11);
  ParamStore params;
  params.add("w1", ParamGroup::self_attn, random_leaf(8, 12, rng));
  params.add("w2", ParamGroup::cross_attn, random_leaf(12, 8, rng));
  params.add("scale", ParamGroup::conditioning, random_leaf(1, 12, rng));
  params.add("shift", ParamGroup::conditioning, random_leaf(1, 12, rng));
  params.add("gate", ParamGroup::visual_expert, random_leaf(1, 8, rng));
  Tensor data = random_leaf(5, 8, rng, false);

  auto loss_fn = [&] {
    Tensor h = matmul(data, params.at("w1"));
    h = layer_norm(h, params.at("scale"), params.at("shift"));
    h = gelu(h);
    Tensor attn = softmax(matmul_nt(h, h));
    Tensor mixed = matmul(attn, h);
    Tensor back = matmul(mixed, params.at("w2"));
    back = mul(back, params.at("gate"));
    auto parts = split(back, {2, 3}, 0);
    Tensor rejoined = concat({parts[1], parts[0]}, 0);
    Tensor act = add(silu(rejoined), sigmoid(scalar_mul(rejoined, 0.5)));
    Tensor sq = square(add_scalar(act, -0.25));
    Tensor per_col = mean_axis0(sq);
    return add(mean_all(per_col), scalar_mul(mean_all(exp(scalar_mul(act, 0.1))), 0.5));
  };
  auto res = finite_difference_check(params, loss_fn);
  CAPTURE(res.worst_param);
  CHECK(res.checked < 500);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("detach blocks gradient flow") {
  Tensor x = Tensor::from(1, 2, {1.5, -0.5}, true);
  Tensor loss = sum_all(mul(x, detach(square(x))));
  backward(loss);
  // d/dx of x * stopgrad(x^2) is just x^2.
  CHECK(x.grad()[0] == doctest::Approx(2.25));
  CHECK(x.grad()[1] == doctest::Approx(0.25));
}

TEST_CASE("determinism: same seed gives bit-identical values and gradients") {
  auto run = [] {
    Rng rng(42);
    ParamStore params;
    params.add("w", ParamGroup::self_attn, random_leaf(6, 6, rng));
    Tensor x = random_leaf(4, 6, rng, false);
    params.zero_grad();
    Tensor loss = mean_all(square(gelu(matmul(x, params.at("w")))));
    backward(loss);
    return std::make_pair(loss.item(), params.at("w").grad());
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("adamw: empty trainable set leaves parameters bit-identical") {
  Rng rng(3);
  ParamStore params;
  params.add("w", ParamGroup::visual_head, random_leaf(4, 4, rng));
  auto before = params.value_bytes();
  params.zero_grad();
  Tensor loss = sum_all(square(params.at("w")));
  backward(loss);
  AdamW opt({.lr = 0.1});
  opt.step(params, {});
  CHECK(params.value_bytes() == before);
}

TEST_CASE("adamw: single step on a unit-gradient scalar moves by ~lr") {
  ParamStore params;
  params.add("w", ParamGroup::audio_head, Tensor::from(1, 1, {1.0}, true));
  params.zero_grad();
  Tensor loss = params.at("w");
  backward(loss);  // gradient exactly 1
  AdamW opt({.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999, .weight_decay = 0.0});
  opt.step(params, {ParamGroup::audio_head});
  // Bias-corrected m/sqrt(v) = 1/(1 + eps), so the step is lr to ~1e-8.
  CHECK(params.at("w").values()[0] == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("adamw: repeated steps on f(w)=w^2 decrease the loss monotonically") {
  ParamStore params;
  params.add("w", ParamGroup::audio_expert, Tensor::from(1, 1, {1.0}, true));
  AdamW opt({.lr = 0.05});
  double prev = 1.0;
  for (int i = 0; i < 10; ++i) {
    params.zero_grad();
    Tensor loss = square(params.at("w"));
    backward(loss);
    opt.step(params, {ParamGroup::audio_expert});
    const double w = params.at("w").values()[0];
    CHECK(w * w < prev);
    prev = w * w;
  }
}

TEST_CASE("adamw: frozen groups are byte-identical, trainable groups change") {
  Rng rng(5);
  ParamStore params;
  params.add("a", ParamGroup::visual_expert, random_leaf(3, 3, rng));
  params.add("b", ParamGroup::audio_expert, random_leaf(3, 3, rng));
  auto frozen_before = params.value_bytes({ParamGroup::visual_expert});
  params.zero_grad();
  Tensor loss = add(sum_all(square(params.at("a"))), sum_all(square(params.at("b"))));
  backward(loss);
  AdamW opt({.lr = 0.01});
  opt.step(params, {ParamGroup::audio_expert});
  CHECK(params.value_bytes({ParamGroup::visual_expert}) == frozen_before);
  CHECK(params.value_bytes({ParamGroup::audio_expert}) !=
        params.value_bytes({ParamGroup::visual_expert}));
}

TEST_CASE("adamw: missing gradient on a trainable tensor is a contract error") {
  Rng rng(9);
  ParamStore params;
  params.add("w", ParamGroup::self_attn, random_leaf(2, 2, rng));
  AdamW opt({});
  CHECK_THROWS_AS(opt.step(params, {ParamGroup::self_attn}), ContractError);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  Rng rng(13);
  ParamStore params;
  params.add("block0.w", ParamGroup::self_attn, random_leaf(7, 5, rng));
  params.add("block0.b", ParamGroup::self_attn, random_leaf(1, 5, rng));
  params.add("head.w", ParamGroup::visual_head, random_leaf(5, 3, rng));
  const auto path = std::filesystem::temp_directory_path() / "avwm_ndgrad_ckpt_test.bin";
  params.save(path.string());
  ParamStore loaded = ParamStore::load(path.string());
  CHECK(loaded.size() == params.size());
  CHECK(loaded.value_bytes() == params.value_bytes());
  CHECK(loaded.group_of("head.w") == ParamGroup::visual_head);
  std::filesystem::remove(path);
}

TEST_CASE("unreachable leaves keep zero gradients after zero_grad") {
  Rng rng(21);
  ParamStore params;
  params.add("used", ParamGroup::self_attn, random_leaf(2, 2, rng));
  params.add("unused", ParamGroup::cross_attn, random_leaf(2, 2, rng));
  params.zero_grad();
  Tensor loss = sum_all(square(params.at("used")));
  backward(loss);
  for (double g : params.at("unused").grad()) CHECK(g == 0.0);
}
