#include "avwm/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace avwm::soundworld {

namespace {

constexpr double kFov = std::numbers::pi / 2.0;  // 90 degrees
constexpr double kCeiling[3] = {0.24, 0.26, 0.30};
constexpr double kFloor[3] = {0.42, 0.40, 0.37};
constexpr double kSourceColor[3] = {1.00, 0.05, 0.95};

struct RayHit {
  double distance = 0.0;
  int ix = 0;
  int iy = 0;
  bool is_source_cell = false;
};

// Walks the grid until an occupied cell or the source cell is hit. The scene
// boundary is occupied, so every ray terminates.
RayHit raycast(const Scene& scene, double x0, double y0, double angle) {
  const double cs = scene.cell_size();
  const double dx = std::cos(angle), dy = std::sin(angle);
  GridIndex c = scene.cell_of(x0, y0);
  const GridIndex src = scene.source_cell();

  const int step_x = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int step_y = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  double t_max_x = std::numeric_limits<double>::infinity();
  double t_max_y = std::numeric_limits<double>::infinity();
  double t_delta_x = std::numeric_limits<double>::infinity();
  double t_delta_y = std::numeric_limits<double>::infinity();
  if (step_x != 0) {
    const double next_x = (c.ix + (step_x > 0 ? 1 : 0)) * cs;
    t_max_x = (next_x - x0) / dx;
    t_delta_x = cs / std::abs(dx);
  }
  if (step_y != 0) {
    const double next_y = (c.iy + (step_y > 0 ? 1 : 0)) * cs;
    t_max_y = (next_y - y0) / dy;
    t_delta_y = cs / std::abs(dy);
  }

  double t = 0.0;
  for (int guard = 0; guard < 100000; ++guard) {
    if (t_max_x < t_max_y) {
      t = t_max_x;
      c.ix += step_x;
      t_max_x += t_delta_x;
    } else {
      t = t_max_y;
      c.iy += step_y;
      t_max_y += t_delta_y;
    }
    if (scene.occupied(c.ix, c.iy)) return {t, c.ix, c.iy, false};
    if (c.ix == src.ix && c.iy == src.iy) return {t, c.ix, c.iy, true};
  }
  return {t, c.ix, c.iy, false};
}

}  // namespace

Image render_visual(const Scene& scene, const AgentPose& pose, int image_size) {
  const int h = image_size, w = image_size;
  Image img{h, w, std::vector<double>(static_cast<size_t>(h) * w * 3)};

  for (int col = 0; col < w; ++col) {
    // Column 0 is the leftmost ray (+fov/2 relative to the heading).
    const double rel = kFov / 2.0 - (col + 0.5) * kFov / w;
    const RayHit hit = raycast(scene, pose.x, pose.y, pose.theta + rel);
    const double shade = 1.0 / (1.0 + hit.distance);

    double wall[3];
    if (hit.is_source_cell) {
      for (int ch = 0; ch < 3; ++ch) wall[ch] = kSourceColor[ch] * shade;
    } else {
      const auto color = scene.palette(hit.ix, hit.iy);
      for (int ch = 0; ch < 3; ++ch) wall[ch] = color[ch] * shade;
    }

    const int half = std::min(h / 2, static_cast<int>(std::lround(h / (2.0 * (1.0 + hit.distance)))));
    const int top = h / 2 - half;
    const int bottom = h / 2 + half;  // exclusive
    for (int row = 0; row < h; ++row) {
      const double* c = row < top ? kCeiling : (row < bottom ? wall : kFloor);
      for (int ch = 0; ch < 3; ++ch) img.at(row, col, ch) = c[ch];
    }
  }
  return img;
}

double ring_source_sample(double t_seconds) {
  if (t_seconds < 0.0) return 0.0;
  const double phase = std::fmod(t_seconds, 1.5);
  if (phase >= 1.0) return 0.0;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return 0.5 * (std::sin(two_pi * 800.0 * t_seconds) + std::sin(two_pi * 1000.0 * t_seconds));
}

namespace {

struct EarSource {
  double delay_samples;
  double gain;
};

EarSource ear_source(double ear_x, double ear_y, double normal_x, double normal_y,
                     double src_x, double src_y, int sample_rate, double extra_gain) {
  const double dx = src_x - ear_x, dy = src_y - ear_y;
  const double dist = std::sqrt(dx * dx + dy * dy);
  const double dist_gain = std::min(1.0, 0.5 / std::max(dist, kGainFloorDistance));
  // Angle between the ear's outward normal and the direction to the source.
  double cos_a = 0.0;
  if (dist > 1e-12) cos_a = (normal_x * dx + normal_y * dy) / dist;
  const double shadow = 0.6 + 0.4 * (1.0 + cos_a) / 2.0;
  return {dist / kSpeedOfSound * sample_rate, dist_gain * shadow * extra_gain};
}

double delayed_sample(double global_index, double delay_samples, int sample_rate) {
  const double u = global_index - delay_samples;
  if (u < 0.0) return 0.0;
  const double n0 = std::floor(u);
  const double frac = u - n0;
  const double s0 = ring_source_sample(n0 / sample_rate);
  const double s1 = ring_source_sample((n0 + 1.0) / sample_rate);
  return s0 * (1.0 - frac) + s1 * frac;
}

// Mirror the source across the face of the occupied cell nearest to it.
void image_source(const Scene& scene, double& mx, double& my) {
  const double cs = scene.cell_size();
  const double sx = scene.source_x(), sy = scene.source_y();
  double best = std::numeric_limits<double>::infinity();
  int bx = -1, by = -1;
  for (int iy = 0; iy < scene.height(); ++iy)
    for (int ix = 0; ix < scene.width(); ++ix) {
      if (!scene.occupied(ix, iy)) continue;
      const double cx = (ix + 0.5) * cs, cy = (iy + 0.5) * cs;
      const double d = (cx - sx) * (cx - sx) + (cy - sy) * (cy - sy);
      if (d < best) {
        best = d;
        bx = ix;
        by = iy;
      }
    }
  const double cx = (bx + 0.5) * cs, cy = (by + 0.5) * cs;
  if (std::abs(cx - sx) >= std::abs(cy - sy)) {
    const double face_x = sx < cx ? bx * cs : (bx + 1) * cs;
    mx = 2.0 * face_x - sx;
    my = sy;
  } else {
    const double face_y = sy < cy ? by * cs : (by + 1) * cs;
    mx = sx;
    my = 2.0 * face_y - sy;
  }
}

}  // namespace

Audio render_binaural(const Scene& scene, const AgentPose& pose, int64_t frame_index,
                      int sample_rate, bool reflection) {
  const int length = frame_samples(sample_rate);
  Audio audio{length, std::vector<double>(2 * static_cast<size_t>(length))};

  // Left ear sits to the left of the heading; its outward normal points left.
  const double lnx = -std::sin(pose.theta), lny = std::cos(pose.theta);
  struct Ear {
    double x, y, nx, ny;
  };
  const Ear ears[2] = {
      {pose.x + kHeadRadius * lnx, pose.y + kHeadRadius * lny, lnx, lny},
      {pose.x - kHeadRadius * lnx, pose.y - kHeadRadius * lny, -lnx, -lny},
  };

  double mirror_x = 0.0, mirror_y = 0.0;
  if (reflection) image_source(scene, mirror_x, mirror_y);

  const int64_t base = frame_index * length;
  for (int e = 0; e < 2; ++e) {
    const EarSource direct = ear_source(ears[e].x, ears[e].y, ears[e].nx, ears[e].ny,
                                        scene.source_x(), scene.source_y(), sample_rate, 1.0);
    EarSource mirror{};
    if (reflection)
      mirror = ear_source(ears[e].x, ears[e].y, ears[e].nx, ears[e].ny, mirror_x, mirror_y,
                          sample_rate, 0.3);
    for (int i = 0; i < length; ++i) {
      const double g = static_cast<double>(base + i);
      double v = direct.gain * delayed_sample(g, direct.delay_samples, sample_rate);
      if (reflection) v += mirror.gain * delayed_sample(g, mirror.delay_samples, sample_rate);
      audio.lr[2 * static_cast<size_t>(i) + e] = std::clamp(v, -1.0, 1.0);
    }
  }
  return audio;
}

Observation observe(const Scene& scene, const AgentPose& pose, int64_t frame_index,
                    const RenderConfig& cfg) {
  return {render_visual(scene, pose, cfg.image_size),
          render_binaural(scene, pose, frame_index, cfg.sample_rate, cfg.reflection)};
}

}  // namespace avwm::soundworld
