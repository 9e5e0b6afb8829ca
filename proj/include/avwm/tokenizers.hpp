#pragma once

#include <vector>

#include "avwm/render.hpp"

namespace avwm::tokenizers {

// Deterministic, lossless stand-ins for pretrained tokenizers. Visual frames
// become raster-ordered P x P patch tokens (a pure reshape, so the
// round-trip is bit-exact); binaural audio becomes per-channel orthonormal
// DCT-II frame tokens (round-trip exact to ~1e-13, energy preserving).

struct TokenMatrix {
  int num_tokens = 0;
  int dim = 0;
  std::vector<double> data;  // num_tokens x dim row-major

  double* row(int t) { return data.data() + static_cast<size_t>(t) * dim; }
  const double* row(int t) const { return data.data() + static_cast<size_t>(t) * dim; }
};

struct VisualTokenizerConfig {
  int image_size = 32;
  int patch = 8;

  int tokens_per_frame() const { return (image_size / patch) * (image_size / patch); }
  int token_dim() const { return patch * patch * 3; }
};

struct AudioTokenizerConfig {
  int frame_samples = 2400;  // L, per channel
  int dct_frame = 300;       // F

  int tokens_per_frame() const { return 2 * frame_samples / dct_frame; }
  int token_dim() const { return dct_frame; }
};

// Throws ConfigError when the image size is not divisible by the patch size.
TokenMatrix encode_visual(const soundworld::Image& image, const VisualTokenizerConfig& cfg);
soundworld::Image decode_visual(const TokenMatrix& tokens, const VisualTokenizerConfig& cfg);

// Left/right channel tokens interleaved L,R,L,R,... in time order. Throws
// ConfigError when the frame length is not divisible by the DCT frame.
TokenMatrix encode_audio(const soundworld::Audio& audio, const AudioTokenizerConfig& cfg);
soundworld::Audio decode_audio(const TokenMatrix& tokens, const AudioTokenizerConfig& cfg);

// Reward token: broadcast a scalar across the model width; pooling inverts it
// exactly (pairwise summation, exact for power-of-two dims).
std::vector<double> reward_broadcast(double r, int dim);
double reward_pool(const std::vector<double>& token);

// Orthonormal DCT-II basis of size f x f (row k = basis vector k); cached per
// size. Exposed so tests can compare against a naive transform.
const std::vector<double>& dct_basis(int f);

}  // namespace avwm::tokenizers
