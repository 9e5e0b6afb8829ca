#include "avwm/tokenizers.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "avwm/errors.hpp"
#include "avwm/ndgrad.hpp"

namespace avwm::tokenizers {

TokenMatrix encode_visual(const soundworld::Image& image, const VisualTokenizerConfig& cfg) {
  const int h = image.height, w = image.width, p = cfg.patch;
  if (h != cfg.image_size || w != cfg.image_size)
    throw ConfigError("visual tokenizer: image is " + std::to_string(h) + "x" +
                      std::to_string(w) + ", config expects " + std::to_string(cfg.image_size));
  if (h % p != 0 || w % p != 0)
    throw ConfigError("visual tokenizer: image size " + std::to_string(h) +
                      " not divisible by patch " + std::to_string(p));
  const int per_side = h / p;
  TokenMatrix out{per_side * per_side, p * p * 3, {}};
  out.data.resize(static_cast<size_t>(out.num_tokens) * out.dim);
  int t = 0;
  for (int py = 0; py < per_side; ++py)
    for (int px = 0; px < per_side; ++px, ++t) {
      double* row = out.row(t);
      int k = 0;
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
          for (int ch = 0; ch < 3; ++ch) row[k++] = image.at(py * p + r, px * p + c, ch);
    }
  return out;
}

soundworld::Image decode_visual(const TokenMatrix& tokens, const VisualTokenizerConfig& cfg) {
  const int p = cfg.patch, size = cfg.image_size, per_side = size / p;
  if (tokens.num_tokens != per_side * per_side || tokens.dim != p * p * 3)
    throw ConfigError("visual tokenizer: token matrix " + std::to_string(tokens.num_tokens) +
                      "x" + std::to_string(tokens.dim) + " does not match config");
  soundworld::Image img{size, size, std::vector<double>(static_cast<size_t>(size) * size * 3)};
  int t = 0;
  for (int py = 0; py < per_side; ++py)
    for (int px = 0; px < per_side; ++px, ++t) {
      const double* row = tokens.row(t);
      int k = 0;
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
          for (int ch = 0; ch < 3; ++ch) img.at(py * p + r, px * p + c, ch) = row[k++];
    }
  return img;
}

const std::vector<double>& dct_basis(int f) {
  static std::mutex mu;
  static std::map<int, std::vector<double>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(f);
  if (it != cache.end()) return it->second;
  std::vector<double> basis(static_cast<size_t>(f) * f);
  const double s0 = std::sqrt(1.0 / f), sk = std::sqrt(2.0 / f);
  for (int k = 0; k < f; ++k)
    for (int n = 0; n < f; ++n)
      basis[static_cast<size_t>(k) * f + n] =
          (k == 0 ? s0 : sk) * std::cos(std::numbers::pi * (n + 0.5) * k / f);
  return cache.emplace(f, std::move(basis)).first->second;
}

TokenMatrix encode_audio(const soundworld::Audio& audio, const AudioTokenizerConfig& cfg) {
  const int l = cfg.frame_samples, f = cfg.dct_frame;
  if (audio.samples != l)
    throw ConfigError("audio tokenizer: waveform has " + std::to_string(audio.samples) +
                      " samples, config expects " + std::to_string(l));
  if (l % f != 0)
    throw ConfigError("audio tokenizer: frame length " + std::to_string(l) +
                      " not divisible by DCT frame " + std::to_string(f));
  const int frames = l / f;
  const auto& basis = dct_basis(f);
  TokenMatrix out{2 * frames, f, {}};
  out.data.resize(static_cast<size_t>(out.num_tokens) * f);
  std::vector<double> chunk(f);
  for (int fr = 0; fr < frames; ++fr)
    for (int ch = 0; ch < 2; ++ch) {
      for (int n = 0; n < f; ++n) chunk[n] = audio.lr[2 * (static_cast<size_t>(fr) * f + n) + ch];
      // token index interleaves channels: L, R, L, R, ... in time order
      double* row = out.row(2 * fr + ch);
      ndgrad::mm_nt(basis.data(), chunk.data(), row, f, f, 1, false);
    }
  return out;
}

soundworld::Audio decode_audio(const TokenMatrix& tokens, const AudioTokenizerConfig& cfg) {
  const int l = cfg.frame_samples, f = cfg.dct_frame;
  const int frames = l / f;
  if (tokens.num_tokens != 2 * frames || tokens.dim != f)
    throw ConfigError("audio tokenizer: token matrix " + std::to_string(tokens.num_tokens) +
                      "x" + std::to_string(tokens.dim) + " does not match config");
  const auto& basis = dct_basis(f);
  soundworld::Audio audio{l, std::vector<double>(2 * static_cast<size_t>(l))};
  std::vector<double> chunk(f);
  for (int fr = 0; fr < frames; ++fr)
    for (int ch = 0; ch < 2; ++ch) {
      // inverse of an orthonormal transform is its transpose
      ndgrad::mm_tn(basis.data(), tokens.row(2 * fr + ch), chunk.data(), f, f, 1, false);
      for (int n = 0; n < f; ++n) audio.lr[2 * (static_cast<size_t>(fr) * f + n) + ch] = chunk[n];
    }
  return audio;
}

std::vector<double> reward_broadcast(double r, int dim) {
  return std::vector<double>(static_cast<size_t>(dim), r);
}

namespace {

double pairwise_sum(const double* v, size_t n) {
  if (n == 1) return v[0];
  const size_t half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

}  // namespace

double reward_pool(const std::vector<double>& token) {
  if (token.empty()) throw ContractError("reward_pool: empty token");
  return pairwise_sum(token.data(), token.size()) / static_cast<double>(token.size());
}

}  // namespace avwm::tokenizers
