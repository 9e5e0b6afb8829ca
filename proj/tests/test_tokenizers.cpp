#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "avwm/errors.hpp"
#include "avwm/rng.hpp"
#include "avwm/tokenizers.hpp"

using namespace avwm;
using namespace avwm::tokenizers;
using soundworld::Audio;
using soundworld::Image;

namespace {

Image random_image(int size, Rng& rng) {
  Image img{size, size, std::vector<double>(static_cast<size_t>(size) * size * 3)};
  for (auto& v : img.rgb) v = rng.uniform();
  return img;
}

Audio random_audio(int samples, Rng& rng) {
  Audio a{samples, std::vector<double>(2 * static_cast<size_t>(samples))};
  for (auto& v : a.lr) v = rng.uniform(-1.0, 1.0);
  return a;
}

double energy(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

TEST_CASE("visual token shape: 32x32 image with P=8 gives 16 tokens of dim 192") {
  Rng rng(1);
  Image img = random_image(32, rng);
  TokenMatrix t = encode_visual(img, {32, 8});
  CHECK(t.num_tokens == 16);
  CHECK(t.dim == 192);
}

TEST_CASE("all-zero image maps to all-zero tokens") {
  Image img{32, 32, std::vector<double>(32 * 32 * 3, 0.0)};
  TokenMatrix t = encode_visual(img, {32, 8});
  for (double v : t.data) CHECK(v == 0.0);
}

TEST_CASE("visual round-trip is bit-identical") {
  Rng rng(2);
  Image img = random_image(32, rng);
  Image back = decode_visual(encode_visual(img, {32, 8}), {32, 8});
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("indivisible visual dims raise a configuration error") {
  Rng rng(3);
  Image img = random_image(30, rng);
  CHECK_THROWS_AS(encode_visual(img, {30, 8}), ConfigError);
}

TEST_CASE("audio token shape: L=2400, F=300 gives 16 interleaved tokens of dim 300") {
  Rng rng(4);
  Audio a = random_audio(2400, rng);
  TokenMatrix t = encode_audio(a, {2400, 300});
  CHECK(t.num_tokens == 16);
  CHECK(t.dim == 300);
}

TEST_CASE("interleaving: left channel occupies even token rows") {
  Audio a{600, std::vector<double>(1200, 0.0)};
  for (int i = 0; i < 600; ++i) a.lr[2 * i] = std::sin(0.02 * i);  // left only
  TokenMatrix t = encode_audio(a, {600, 300});
  CHECK(energy({t.row(0), t.row(0) + 300}) > 1.0);
  CHECK(energy({t.row(1), t.row(1) + 300}) == 0.0);
  CHECK(energy({t.row(2), t.row(2) + 300}) > 1.0);
  CHECK(energy({t.row(3), t.row(3) + 300}) == 0.0);
}

TEST_CASE("zero audio maps to zero tokens") {
  Audio a{2400, std::vector<double>(4800, 0.0)};
  TokenMatrix t = encode_audio(a, {2400, 300});
  for (double v : t.data) CHECK(v == 0.0);
}

TEST_CASE("audio round-trip within 1e-9 and Parseval energy match") {
  Rng rng(5);
  Audio a = random_audio(2400, rng);
  AudioTokenizerConfig cfg{2400, 300};
  TokenMatrix t = encode_audio(a, cfg);
  Audio back = decode_audio(t, cfg);
  double max_err = 0.0;
  for (size_t i = 0; i < a.lr.size(); ++i)
    max_err = std::max(max_err, std::abs(a.lr[i] - back.lr[i]));
  CHECK(max_err < 1e-9);
  CHECK(energy(t.data) == doctest::Approx(energy(a.lr)).epsilon(1e-12));
}

TEST_CASE("pure 800 Hz tone concentrates energy in one dominant DCT bin") {
  // Oracle: a naive O(F^2) DCT-II, written out longhand.
  const int f = 300;
  std::vector<double> chunk(f);
  for (int n = 0; n < f; ++n) chunk[n] = std::cos(2.0 * std::numbers::pi * 800.0 * n / 16000.0);
  std::vector<double> naive(f);
  for (int k = 0; k < f; ++k) {
    double s = 0.0;
    for (int n = 0; n < f; ++n)
      s += chunk[n] * std::cos(std::numbers::pi * (n + 0.5) * k / f);
    naive[k] = (k == 0 ? std::sqrt(1.0 / f) : std::sqrt(2.0 / f)) * s;
  }

  Audio a{f, std::vector<double>(2 * static_cast<size_t>(f))};
  for (int n = 0; n < f; ++n) a.lr[2 * n] = a.lr[2 * n + 1] = chunk[n];
  TokenMatrix t = encode_audio(a, {f, f});

  double total = 0.0, peak = 0.0;
  int peak_bin = -1;
  for (int k = 0; k < f; ++k) {
    CHECK(t.row(0)[k] == doctest::Approx(naive[k]).epsilon(1e-9));
    const double e = t.row(0)[k] * t.row(0)[k];
    total += e;
    if (e > peak) {
      peak = e;
      peak_bin = k;
    }
  }
  // 800 Hz at fs=16k? bin index ~ 2*F*800/16000 = 30.
  CHECK(peak_bin == 30);
  CHECK(peak / total > 0.8);
}

TEST_CASE("token count formulas hold over a config sweep") {
  Rng rng(6);
  for (int size : {16, 32, 64})
    for (int p : {4, 8, 16}) {
      if (size % p) continue;
      Image img = random_image(size, rng);
      TokenMatrix t = encode_visual(img, {size, p});
      CHECK(t.num_tokens == (size / p) * (size / p));
      CHECK(t.dim == p * p * 3);
      Image back = decode_visual(t, {size, p});
      CHECK(back.rgb == img.rgb);
    }
  for (int l : {1200, 2400})
    for (int f : {150, 300, 600}) {
      if (l % f) continue;
      Audio a = random_audio(l, rng);
      TokenMatrix t = encode_audio(a, {l, f});
      CHECK(t.num_tokens == 2 * l / f);
      CHECK(t.dim == f);
      Audio back = decode_audio(t, {l, f});
      double max_err = 0.0;
      for (size_t i = 0; i < a.lr.size(); ++i)
        max_err = std::max(max_err, std::abs(a.lr[i] - back.lr[i]));
      CHECK(max_err < 1e-9);
    }
}

TEST_CASE("reward broadcast and pool") {
  CHECK(reward_pool(reward_broadcast(0.0, 64)) == 0.0);
  CHECK(reward_pool(reward_broadcast(0.15, 64)) == 0.15);
  CHECK(reward_pool({1.0, -1.0, 1.0, -1.0}) == 0.0);
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const double r = rng.uniform(-3.0, 3.0);
    CHECK(reward_pool(reward_broadcast(r, 64)) == r);
  }
}
