#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "avwm/soundworld.hpp"

namespace avwm::soundworld {

struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> rgb;  // H*W*3 row-major, values in [0, 1]

  double& at(int r, int c, int ch) { return rgb[(static_cast<size_t>(r) * width + c) * 3 + ch]; }
  double at(int r, int c, int ch) const {
    return rgb[(static_cast<size_t>(r) * width + c) * 3 + ch];
  }
};

struct Audio {
  int samples = 0;
  std::vector<double> lr;  // samples x 2 interleaved (left first), values in [-1, 1]

  double left(int i) const { return lr[2 * static_cast<size_t>(i)]; }
  double right(int i) const { return lr[2 * static_cast<size_t>(i) + 1]; }
};

struct Observation {
  Image image;
  Audio audio;
};

struct RenderConfig {
  int image_size = 32;       // H = W
  int sample_rate = 16000;   // Hz; frame length = round(0.15 s * rate)
  bool reflection = false;   // add one first-order specular reflection
};

inline int frame_samples(int sample_rate) {
  return static_cast<int>(std::llround(kFrameSeconds * sample_rate));
}

// The looping ring pattern the source plays: an 800/1000 Hz two-tone burst
// gated by a 1.0 s on / 0.5 s off envelope. Periodic with period 1.5 s.
double ring_source_sample(double t_seconds);

// Egocentric raycast over a 90-degree field of view, one ray per column.
// Columns are painted with the hit wall's palette color under 1/(1+d)
// depth falloff between fixed floor and ceiling bands; the source cell
// renders in a reserved high-saturation color.
Image render_visual(const Scene& scene, const AgentPose& pose, int image_size);

// Binaural rendering: per ear, the source signal is delayed by distance /
// 343 m/s (fractional-sample linear interpolation), scaled by
// min(1, 0.5/max(d, 0.1)) and by a head-shadow gain in [0.6, 1.0].
// frame_index fixes the global phase so consecutive frames are continuous.
Audio render_binaural(const Scene& scene, const AgentPose& pose, int64_t frame_index,
                      int sample_rate, bool reflection = false);

Observation observe(const Scene& scene, const AgentPose& pose, int64_t frame_index,
                    const RenderConfig& cfg);

}  // namespace avwm::soundworld
