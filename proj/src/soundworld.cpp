#include "avwm/soundworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include "avwm/errors.hpp"
#include "avwm/rng.hpp"

namespace avwm::soundworld {

const char* to_string(Action a) {
  switch (a) {
    case Action::Forward: return "Forward";
    case Action::TurnLeft: return "TurnLeft";
    case Action::TurnRight: return "TurnRight";
    case Action::Stop: return "Stop";
  }
  return "?";
}

Action action_from_string(const std::string& s) {
  if (s == "Forward") return Action::Forward;
  if (s == "TurnLeft") return Action::TurnLeft;
  if (s == "TurnRight") return Action::TurnRight;
  if (s == "Stop") return Action::Stop;
  throw ConfigError("unknown action: " + s);
}

double wrap_angle(double theta) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, two_pi);
  if (w <= 0.0) w += two_pi;
  return w - std::numbers::pi;
}

Scene::Scene(int width, int height, double cell_size, std::vector<uint8_t> occupancy,
             std::vector<std::array<float, 3>> palette, double source_x, double source_y,
             std::string scene_id)
    : width_(width),
      height_(height),
      cell_size_(cell_size),
      occupancy_(std::move(occupancy)),
      palette_(std::move(palette)),
      source_x_(source_x),
      source_y_(source_y),
      scene_id_(std::move(scene_id)) {
  if (width_ < 3 || height_ < 3) throw ConfigError("scene: grid must be at least 3x3");
  if (occupancy_.size() != static_cast<size_t>(width_) * height_)
    throw ConfigError("scene: occupancy size mismatch");
  if (palette_.size() != occupancy_.size()) throw ConfigError("scene: palette size mismatch");
  for (int ix = 0; ix < width_; ++ix)
    if (!occupied(ix, 0) || !occupied(ix, height_ - 1))
      throw ConfigError("scene: boundary must be occupied (closed world)");
  for (int iy = 0; iy < height_; ++iy)
    if (!occupied(0, iy) || !occupied(width_ - 1, iy))
      throw ConfigError("scene: boundary must be occupied (closed world)");
  source_cell_ = cell_of(source_x_, source_y_);
  if (occupied(source_cell_.ix, source_cell_.iy))
    throw ConfigError("scene: source must lie in a free cell");
  compute_geodesic_field();
}

GridIndex Scene::cell_of(double x, double y) const {
  return {static_cast<int>(std::floor(x / cell_size_)),
          static_cast<int>(std::floor(y / cell_size_))};
}

bool Scene::free_at(double x, double y) const {
  const GridIndex c = cell_of(x, y);
  return !occupied(c.ix, c.iy);
}

std::array<float, 3> Scene::palette(int ix, int iy) const {
  if (!in_bounds(ix, iy)) return {0.f, 0.f, 0.f};
  return palette_[static_cast<size_t>(iy) * width_ + ix];
}

DistanceField dijkstra_field(const Scene& scene, GridIndex from) {
  const int width = scene.width();
  const size_t n = static_cast<size_t>(width) * scene.height();
  DistanceField field;
  field.width = width;
  field.steps.assign(n, GeodesicSteps{});
  field.parent.assign(n, -1);

  struct QItem {
    double dist;
    int32_t cell;
    bool operator>(const QItem& o) const {
      if (dist != o.dist) return dist > o.dist;
      return cell > o.cell;  // deterministic tie-break
    }
  };
  std::priority_queue<QItem, std::vector<QItem>, std::greater<QItem>> queue;
  std::vector<uint8_t> done(n, 0);

  const size_t src = static_cast<size_t>(from.iy) * width + from.ix;
  field.steps[src] = {0, 0};
  queue.push({0.0, static_cast<int32_t>(src)});

  const int dx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  const int dy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  const double cs = scene.cell_size();

  while (!queue.empty()) {
    const auto [dist, cell] = queue.top();
    queue.pop();
    if (done[cell]) continue;
    done[cell] = 1;
    const int cx = cell % width, cy = cell / width;
    const GeodesicSteps cur = field.steps[cell];
    for (int k = 0; k < 8; ++k) {
      const int nx = cx + dx[k], ny = cy + dy[k];
      if (scene.occupied(nx, ny)) continue;
      // A diagonal move must not cut a corner through occupied cells.
      if (k >= 4 && (scene.occupied(cx + dx[k], cy) || scene.occupied(cx, cy + dy[k]))) continue;
      const size_t ni = static_cast<size_t>(ny) * width + nx;
      if (done[ni]) continue;
      GeodesicSteps cand = cur;
      if (k < 4)
        cand.straight += 1;
      else
        cand.diagonal += 1;
      const double cand_m = cand.meters(cs);
      if (!field.steps[ni].reachable() || cand_m < field.steps[ni].meters(cs) - 1e-12) {
        field.steps[ni] = cand;
        field.parent[ni] = cell;
        queue.push({cand_m, static_cast<int32_t>(ni)});
      }
    }
  }
  return field;
}

void Scene::compute_geodesic_field() {
  DistanceField field = dijkstra_field(*this, source_cell_);
  field_ = std::move(field.steps);
  parent_ = std::move(field.parent);
  connected_cells_.clear();
  for (int iy = 0; iy < height_; ++iy)
    for (int ix = 0; ix < width_; ++ix)
      if (field_[static_cast<size_t>(iy) * width_ + ix].reachable())
        connected_cells_.push_back({ix, iy});
}

GeodesicSteps Scene::geodesic_steps(double x, double y) const {
  const GridIndex c = cell_of(x, y);
  if (occupied(c.ix, c.iy))
    throw UnreachableError("geodesic: point (" + std::to_string(x) + ", " + std::to_string(y) +
                           ") lies in an occupied cell of " + scene_id_);
  const GeodesicSteps g = field_[static_cast<size_t>(c.iy) * width_ + c.ix];
  if (!g.reachable())
    throw UnreachableError("geodesic: point (" + std::to_string(x) + ", " + std::to_string(y) +
                           ") is not connected to the source in " + scene_id_);
  return g;
}

double Scene::geodesic_distance(double x, double y) const {
  return geodesic_steps(x, y).meters(cell_size_);
}

bool Scene::source_connected(double x, double y) const {
  const GridIndex c = cell_of(x, y);
  if (occupied(c.ix, c.iy)) return false;
  return field_[static_cast<size_t>(c.iy) * width_ + c.ix].reachable();
}

std::vector<GridIndex> Scene::path_to_source(double x, double y) const {
  geodesic_steps(x, y);  // validates reachability
  std::vector<GridIndex> path;
  const GridIndex c = cell_of(x, y);
  int32_t cell = static_cast<int32_t>(static_cast<size_t>(c.iy) * width_ + c.ix);
  while (cell >= 0) {
    path.push_back({cell % width_, cell / width_});
    cell = parent_[cell];
  }
  return path;
}

// --- transition ----------------------------------------------------------

bool segment_free(const Scene& scene, double x0, double y0, double x1, double y1) {
  // Amanatides-Woo traversal over every cell the segment touches.
  const double cs = scene.cell_size();
  GridIndex c = scene.cell_of(x0, y0);
  const GridIndex end = scene.cell_of(x1, y1);
  if (scene.occupied(c.ix, c.iy)) return false;

  const double dx = x1 - x0, dy = y1 - y0;
  const int step_x = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int step_y = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  const double inv_dx = dx != 0 ? 1.0 / dx : 0.0;
  const double inv_dy = dy != 0 ? 1.0 / dy : 0.0;

  double t_max_x = std::numeric_limits<double>::infinity();
  double t_max_y = std::numeric_limits<double>::infinity();
  double t_delta_x = std::numeric_limits<double>::infinity();
  double t_delta_y = std::numeric_limits<double>::infinity();
  if (step_x != 0) {
    const double next_x = (c.ix + (step_x > 0 ? 1 : 0)) * cs;
    t_max_x = (next_x - x0) * inv_dx;
    t_delta_x = cs * std::abs(inv_dx);
  }
  if (step_y != 0) {
    const double next_y = (c.iy + (step_y > 0 ? 1 : 0)) * cs;
    t_max_y = (next_y - y0) * inv_dy;
    t_delta_y = cs * std::abs(inv_dy);
  }

  for (int guard = 0; guard < 4096; ++guard) {
    if (c.ix == end.ix && c.iy == end.iy) return true;
    if (t_max_x < t_max_y) {
      c.ix += step_x;
      t_max_x += t_delta_x;
    } else {
      c.iy += step_y;
      t_max_y += t_delta_y;
    }
    if (scene.occupied(c.ix, c.iy)) return false;
  }
  return false;
}

AgentPose step(const Scene& scene, const AgentPose& pose, Action action) {
  switch (action) {
    case Action::Stop:
      return pose;
    case Action::TurnLeft:
      return {pose.x, pose.y, wrap_angle(pose.theta + kTurnStep)};
    case Action::TurnRight:
      return {pose.x, pose.y, wrap_angle(pose.theta - kTurnStep)};
    case Action::Forward: {
      const double nx = pose.x + kForwardStep * std::cos(pose.theta);
      const double ny = pose.y + kForwardStep * std::sin(pose.theta);
      if (!segment_free(scene, pose.x, pose.y, nx, ny)) return pose;  // blocked
      return {nx, ny, pose.theta};
    }
  }
  return pose;
}

GeodesicSteps reward_steps(const Scene& scene, const AgentPose& before, const AgentPose& after) {
  return scene.geodesic_steps(before.x, before.y) - scene.geodesic_steps(after.x, after.y);
}

double reward(const Scene& scene, const AgentPose& before, const AgentPose& after) {
  return reward_steps(scene, before, after).meters(scene.cell_size());
}

// --- file format ---------------------------------------------------------

void Scene::serialize(std::ostream& out) const {
  out << "AVWM-SCENE v1\n";
  out << "scene_id: " << scene_id_ << "\n";
  out << "width: " << width_ << "\n";
  out << "height: " << height_ << "\n";
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.17g", cell_size_);
  out << "cell_size: " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", source_x_);
  out << "source: " << buf;
  std::snprintf(buf, sizeof buf, "%.17g", source_y_);
  out << " " << buf << "\n";
  out << "grid:\n";
  for (int iy = 0; iy < height_; ++iy) {
    for (int ix = 0; ix < width_; ++ix)
      out << (occupancy_[static_cast<size_t>(iy) * width_ + ix] ? '#' : '.');
    out << "\n";
  }
  int count = 0;
  for (size_t i = 0; i < occupancy_.size(); ++i)
    if (occupancy_[i]) ++count;
  out << "palette: " << count << "\n";
  for (int iy = 0; iy < height_; ++iy)
    for (int ix = 0; ix < width_; ++ix) {
      const size_t i = static_cast<size_t>(iy) * width_ + ix;
      if (!occupancy_[i]) continue;
      std::snprintf(buf, sizeof buf, "%d %d %.9g %.9g %.9g", ix, iy,
                    static_cast<double>(palette_[i][0]), static_cast<double>(palette_[i][1]),
                    static_cast<double>(palette_[i][2]));
      out << buf << "\n";
    }
  out << "end\n";
}

void Scene::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("scene: cannot open " + path + " for writing");
  serialize(out);
}

Scene Scene::parse(std::istream& in, const std::string& origin) {
  auto fail = [&origin](const std::string& why) -> void {
    throw UsageError("scene file " + origin + ": " + why);
  };
  std::string line;
  std::getline(in, line);
  if (line != "AVWM-SCENE v1") fail("bad magic");
  auto expect_key = [&](const std::string& key) {
    std::getline(in, line);
    if (line.rfind(key + ": ", 0) != 0) fail("expected key " + key);
    return line.substr(key.size() + 2);
  };
  const std::string scene_id = expect_key("scene_id");
  const int width = std::stoi(expect_key("width"));
  const int height = std::stoi(expect_key("height"));
  const double cell_size = std::stod(expect_key("cell_size"));
  std::istringstream src(expect_key("source"));
  double sx = 0, sy = 0;
  src >> sx >> sy;
  std::getline(in, line);
  if (line != "grid:") fail("expected grid section");
  std::vector<uint8_t> occ(static_cast<size_t>(width) * height, 0);
  for (int iy = 0; iy < height; ++iy) {
    std::getline(in, line);
    if (static_cast<int>(line.size()) != width) fail("bad grid row length");
    for (int ix = 0; ix < width; ++ix) {
      if (line[ix] == '#')
        occ[static_cast<size_t>(iy) * width + ix] = 1;
      else if (line[ix] != '.')
        fail("bad grid character");
    }
  }
  std::getline(in, line);
  if (line.rfind("palette: ", 0) != 0) fail("expected palette section");
  const int count = std::stoi(line.substr(9));
  std::vector<std::array<float, 3>> palette(occ.size(), {0.f, 0.f, 0.f});
  for (int i = 0; i < count; ++i) {
    std::getline(in, line);
    std::istringstream row(line);
    int ix = 0, iy = 0;
    double r = 0, g = 0, b = 0;
    row >> ix >> iy >> r >> g >> b;
    if (!row) fail("bad palette row");
    palette[static_cast<size_t>(iy) * width + ix] = {static_cast<float>(r),
                                                     static_cast<float>(g),
                                                     static_cast<float>(b)};
  }
  std::getline(in, line);
  if (line != "end") fail("missing end marker");
  return Scene(width, height, cell_size, std::move(occ), std::move(palette), sx, sy, scene_id);
}

Scene Scene::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("scene: cannot open " + path);
  return parse(in, path);
}

// --- procedural generation -----------------------------------------------

namespace {

uint64_t hash_string(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Fixed wall-color vocabulary shared by all scenes so that test scenes stay
// within the training color distribution; the arrangement is scene-specific.
constexpr std::array<std::array<float, 3>, 8> kWallColors = {{
    {0.86f, 0.32f, 0.30f},
    {0.32f, 0.74f, 0.36f},
    {0.34f, 0.46f, 0.86f},
    {0.85f, 0.76f, 0.30f},
    {0.80f, 0.40f, 0.76f},
    {0.34f, 0.76f, 0.76f},
    {0.90f, 0.56f, 0.26f},
    {0.62f, 0.62f, 0.66f},
}};

std::array<float, 3> wall_color(int ix, int iy) {
  const uint64_t h = (static_cast<uint64_t>(ix) * 73856093ULL) ^
                     (static_cast<uint64_t>(iy) * 19349663ULL);
  return kWallColors[h % kWallColors.size()];
}

}  // namespace

Scene Scene::generate(uint64_t seed, const std::string& scene_id, int cells_per_side,
                      double cell_size) {
  const int n = cells_per_side;
  if (n < 16) throw ConfigError("scene generate: grid too small");

  for (int attempt = 0;; ++attempt) {
    Rng rng = Rng::derive(seed, hash_string(scene_id), static_cast<uint64_t>(attempt));
    std::vector<uint8_t> occ(static_cast<size_t>(n) * n, 0);
    const auto idx = [n](int ix, int iy) { return static_cast<size_t>(iy) * n + ix; };
    for (int i = 0; i < n; ++i) {
      occ[idx(i, 0)] = occ[idx(i, n - 1)] = 1;
      occ[idx(0, i)] = occ[idx(n - 1, i)] = 1;
    }

    if (attempt < 40) {
      // Rectangular obstacle blocks.
      const int blocks = static_cast<int>(rng.range(3, 7));
      for (int b = 0; b < blocks; ++b) {
        const int w = static_cast<int>(rng.range(4, n / 5));
        const int h = static_cast<int>(rng.range(4, n / 5));
        const int x0 = static_cast<int>(rng.range(2, n - 2 - w));
        const int y0 = static_cast<int>(rng.range(2, n - 2 - h));
        for (int iy = y0; iy < y0 + h; ++iy)
          for (int ix = x0; ix < x0 + w; ++ix) occ[idx(ix, iy)] = 1;
      }
      // One or two straight interior walls with a gap.
      const int walls = static_cast<int>(rng.range(1, 2));
      for (int w = 0; w < walls; ++w) {
        const bool vertical = rng.below(2) == 0;
        const int pos = static_cast<int>(rng.range(n / 4, 3 * n / 4));
        const int gap_at = static_cast<int>(rng.range(3, n - 8));
        const int gap_len = static_cast<int>(rng.range(4, 8));
        for (int i = 1; i < n - 1; ++i) {
          if (i >= gap_at && i < gap_at + gap_len) continue;
          if (vertical)
            occ[idx(pos, i)] = 1;
          else
            occ[idx(i, pos)] = 1;
        }
      }
    }
    // Past 40 attempts the scene degenerates to an empty room, which is always valid.

    // Keep only the largest free component; fill the rest so every free cell
    // is source-connected.
    std::vector<int32_t> comp(occ.size(), -1);
    int32_t best_comp = -1;
    size_t best_size = 0;
    int32_t comp_count = 0;
    for (int iy = 1; iy < n - 1; ++iy)
      for (int ix = 1; ix < n - 1; ++ix) {
        if (occ[idx(ix, iy)] || comp[idx(ix, iy)] >= 0) continue;
        std::vector<size_t> stack = {idx(ix, iy)};
        comp[idx(ix, iy)] = comp_count;
        size_t size = 0;
        while (!stack.empty()) {
          const size_t c = stack.back();
          stack.pop_back();
          ++size;
          const int cx = static_cast<int>(c % n), cy = static_cast<int>(c / n);
          const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
          for (int k = 0; k < 4; ++k) {
            const int nx2 = cx + dx[k], ny2 = cy + dy[k];
            const size_t ni = idx(nx2, ny2);
            if (!occ[ni] && comp[ni] < 0) {
              comp[ni] = comp_count;
              stack.push_back(ni);
            }
          }
        }
        if (size > best_size) {
          best_size = size;
          best_comp = comp_count;
        }
        ++comp_count;
      }
    if (best_comp < 0 || best_size < static_cast<size_t>(n) * n / 3) continue;
    for (size_t i = 0; i < occ.size(); ++i)
      if (!occ[i] && comp[i] != best_comp) occ[i] = 1;

    // Source: a random free cell with a little clearance from the walls.
    std::vector<size_t> free_cells;
    for (int iy = 2; iy < n - 2; ++iy)
      for (int ix = 2; ix < n - 2; ++ix)
        if (!occ[idx(ix, iy)]) free_cells.push_back(idx(ix, iy));
    if (free_cells.empty()) continue;
    const size_t src = free_cells[rng.below(free_cells.size())];

    std::vector<std::array<float, 3>> palette(occ.size(), {0.f, 0.f, 0.f});
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix)
        if (occ[idx(ix, iy)]) palette[idx(ix, iy)] = wall_color(ix, iy);

    const double sx = (static_cast<double>(src % n) + 0.5) * cell_size;
    const double sy = (static_cast<double>(src / n) + 0.5) * cell_size;
    return Scene(n, n, cell_size, std::move(occ), std::move(palette), sx, sy, scene_id);
  }
}

}  // namespace avwm::soundworld
