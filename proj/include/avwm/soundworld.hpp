#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <string>
#include <vector>

namespace avwm::soundworld {

// Action space: all four actions take one frame of simulated time.
enum class Action : uint8_t { Forward = 0, TurnLeft = 1, TurnRight = 2, Stop = 3 };

constexpr double kForwardStep = 0.15;                        // meters
constexpr double kTurnStep = std::numbers::pi / 18.0;        // 10 degrees
constexpr double kSpeedOfSound = 343.0;                      // m/s
constexpr double kHeadRadius = 0.09;                         // meters
constexpr double kGainFloorDistance = 0.1;                   // meters
constexpr double kFrameSeconds = 0.15;                       // per-frame audio span

const char* to_string(Action a);
Action action_from_string(const std::string& s);

// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

struct AgentPose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // radians, wrapped to (-pi, pi]
};

struct GridIndex {
  int ix = 0;
  int iy = 0;
};

// Geodesic distance to the source expressed as exact counts of straight and
// diagonal 8-connected moves. Keeping the counts integral makes the
// telescoping identity sum(rewards) == d(start) - d(end) exact.
struct GeodesicSteps {
  int32_t straight = -1;
  int32_t diagonal = -1;

  bool reachable() const { return straight >= 0; }
  double meters(double cell_size) const {
    return cell_size * (static_cast<double>(straight) +
                        std::numbers::sqrt2 * static_cast<double>(diagonal));
  }
  GeodesicSteps operator-(const GeodesicSteps& o) const {
    return {straight - o.straight, diagonal - o.diagonal};
  }
  bool operator==(const GeodesicSteps&) const = default;
};

// Occupancy-grid world with a fixed sound source. Immutable after
// construction; the geodesic field is computed once and shared safely.
class Scene {
 public:
  Scene(int width, int height, double cell_size, std::vector<uint8_t> occupancy,
        std::vector<std::array<float, 3>> palette, double source_x, double source_y,
        std::string scene_id);

  // Deterministic procedural generator keyed by (seed, scene_id).
  static Scene generate(uint64_t seed, const std::string& scene_id, int cells_per_side = 100,
                        double cell_size = 0.1);

  static Scene load(const std::string& path);
  static Scene parse(std::istream& in, const std::string& origin);
  void save(const std::string& path) const;
  void serialize(std::ostream& out) const;

  int width() const { return width_; }
  int height() const { return height_; }
  double cell_size() const { return cell_size_; }
  const std::string& scene_id() const { return scene_id_; }
  double source_x() const { return source_x_; }
  double source_y() const { return source_y_; }

  bool in_bounds(int ix, int iy) const {
    return ix >= 0 && ix < width_ && iy >= 0 && iy < height_;
  }
  bool occupied(int ix, int iy) const {
    return !in_bounds(ix, iy) || occupancy_[static_cast<size_t>(iy) * width_ + ix] != 0;
  }
  GridIndex cell_of(double x, double y) const;
  bool free_at(double x, double y) const;
  std::array<float, 3> palette(int ix, int iy) const;

  // Geodesic field queries (8-connected Dijkstra from the source, cached).
  GeodesicSteps geodesic_steps(double x, double y) const;  // throws UnreachableError
  double geodesic_distance(double x, double y) const;
  bool source_connected(double x, double y) const;
  GridIndex source_cell() const { return source_cell_; }

  // Free cells connected to the source, in row-major order.
  const std::vector<GridIndex>& connected_free_cells() const { return connected_cells_; }

  // Shortest 8-connected cell path from the cell containing (x, y) to the
  // source cell, both endpoints included.
  std::vector<GridIndex> path_to_source(double x, double y) const;

 private:
  void compute_geodesic_field();

  int width_ = 0;
  int height_ = 0;
  double cell_size_ = 0.1;
  std::vector<uint8_t> occupancy_;                  // row-major, 1 = occupied
  std::vector<std::array<float, 3>> palette_;       // row-major RGB in [0,1]
  double source_x_ = 0.0;
  double source_y_ = 0.0;
  std::string scene_id_;
  GridIndex source_cell_;
  std::vector<GeodesicSteps> field_;                // row-major
  std::vector<int32_t> parent_;                     // predecessor cell index, -1 at source
  std::vector<GridIndex> connected_cells_;
};

// 8-connected Dijkstra distances (and predecessor cells) from an arbitrary
// free cell. Diagonal moves may not cut corners through occupied cells.
struct DistanceField {
  int width = 0;
  std::vector<GeodesicSteps> steps;   // row-major
  std::vector<int32_t> parent;        // predecessor cell index, -1 at the root

  const GeodesicSteps& at(GridIndex c) const {
    return steps[static_cast<size_t>(c.iy) * width + c.ix];
  }
  int32_t parent_of(GridIndex c) const {
    return parent[static_cast<size_t>(c.iy) * width + c.ix];
  }
};

DistanceField dijkstra_field(const Scene& scene, GridIndex from);

// Deterministic transition. Forward moves 0.15 m along the heading unless the
// swept segment crosses an occupied cell (blocked moves are legal no-ops);
// turns adjust theta by exactly +-10 degrees; Stop is the identity.
AgentPose step(const Scene& scene, const AgentPose& pose, Action action);

// True if the segment from (x0,y0) to (x1,y1) stays within free cells.
bool segment_free(const Scene& scene, double x0, double y0, double x1, double y1);

// Reduction in geodesic distance to the source.
double reward(const Scene& scene, const AgentPose& before, const AgentPose& after);
GeodesicSteps reward_steps(const Scene& scene, const AgentPose& before, const AgentPose& after);

}  // namespace avwm::soundworld
