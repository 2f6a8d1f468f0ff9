#pragma once

// Obstacle worlds made of spheres and axis-aligned boxes, a simulated lidar,
// an inflated occupancy grid and a 26-connected A* planner.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hamgov/governor.hpp"

namespace hamgov {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
};

class ObstacleSet {
 public:
  /// Both throw std::invalid_argument on degenerate primitives.
  void add(const Sphere& s);
  void add(const Box& b);

  const std::vector<Sphere>& spheres() const { return spheres_; }
  const std::vector<Box>& boxes() const { return boxes_; }
  bool empty() const { return spheres_.empty() && boxes_.empty(); }

  /// Distance to the nearest primitive, 0 inside, +inf for an empty set.
  double distance(const Vec3& p) const;
  /// Range to the first hit along a unit direction, if any within max_range.
  std::optional<double> raycast(const Vec3& origin, const Vec3& dir, double max_range) const;

 private:
  std::vector<Sphere> spheres_;
  std::vector<Box> boxes_;
};

double exact_distance(const Vec3& p, const ObstacleSet& obstacles);
/// min(d, beta); throws std::invalid_argument unless beta > 0.
double truncated_distance(const Vec3& p, const ObstacleSet& obstacles, double beta);

/// Obstacles plus the box the vehicle (and the map) lives in.
struct World {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Ones();
  ObstacleSet obstacles;
};

/// Line format, '#' starts a comment:
///   bounds xmin ymin zmin xmax ymax zmax
///   sphere cx cy cz r
///   box xmin ymin zmin xmax ymax zmax
/// Throws std::runtime_error with the line number on malformed input.
World parse_world(const std::string& text);
World load_world(const std::string& path);
std::string format_world(const World& w);

struct PointCloud {
  double time = 0.0;
  std::vector<Vec3> points;
};

/// Body-frame unit rays: `rings` elevations evenly spread over
/// [-max_elevation, max_elevation] times `azimuths` headings.
std::vector<Vec3> lidar_directions(int rings = 16, int azimuths = 90, double max_elevation = 1.309);

/// First hit of every ray within beta; misses are dropped.
PointCloud lidar_scan(const Vec3& p, const Mat3& R, const ObstacleSet& obstacles, double beta,
                      const std::vector<Vec3>& body_dirs, double time = 0.0);

/// min ||g - y|| over the cloud, clamped to beta.
double cloud_distance(const Vec3& g, const std::vector<Vec3>& points, double beta);

using Cell = std::array<int, 3>;

class OccupancyGrid {
 public:
  OccupancyGrid(const Vec3& lo, const Vec3& hi, double resolution, double inflation);

  int nx() const { return n_[0]; }
  int ny() const { return n_[1]; }
  int nz() const { return n_[2]; }
  double resolution() const { return res_; }
  double inflation() const { return inflation_; }
  const Vec3& origin() const { return lo_; }

  bool in_bounds(const Cell& c) const;
  /// Cell containing p; may be out of bounds.
  Cell cell_of(const Vec3& p) const;
  Vec3 center(const Cell& c) const;

  bool occupied(const Cell& c) const;
  /// Occupied or within the inflation radius of a measured point. Out of
  /// bounds counts as blocked.
  bool blocked(const Cell& c) const;
  bool free(const Cell& c) const { return in_bounds(c) && !blocked(c); }

  /// Marks the cells holding cloud points and every cell whose centre lies
  /// within the inflation radius of a point. Out-of-bounds points are skipped.
  void update(const std::vector<Vec3>& points);
  void set_blocked(const Cell& c);

  std::size_t occupied_count() const;
  std::size_t blocked_count() const;

 private:
  std::size_t index(const Cell& c) const;

  Vec3 lo_;
  double res_, inflation_;
  std::array<int, 3> n_{};
  std::vector<std::uint8_t> occ_, infl_;
};

struct GridPlan {
  std::vector<Cell> cells;
  double cost = 0.0;
};

/// Shortest 26-connected path with Euclidean edge costs (in metres). The
/// start cell may sit inside the inflation band; the path may cross that band
/// only until it first reaches a free cell. Throws std::runtime_error("no
/// path") when the goal is unreachable or blocked.
GridPlan astar_cells(const OccupancyGrid& grid, const Cell& start, const Cell& goal);

/// A* between two points: waypoints at cell centres with the exact endpoints
/// substituted and collinear runs merged.
Path astar_plan(const OccupancyGrid& grid, const Vec3& start, const Vec3& goal);

}  // namespace hamgov
