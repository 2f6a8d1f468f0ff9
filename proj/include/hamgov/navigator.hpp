#pragma once

// Closed-loop navigation: every tick scans, maps, (maybe) replans from the
// governor, projects the goal, moves the governor, lifts, controls and
// integrates the plant.

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "hamgov/governor.hpp"
#include "hamgov/world.hpp"

namespace hamgov {

struct NavParams {
  double dt = 0.01;
  double duration = 120.0;
  double replan_period = 0.5;
  double k_g = 1.0;
  double eps = 0.1;
  double beta = 30.0;
  double goal_tolerance = 0.05;
  int lidar_rings = 16;
  int lidar_azimuths = 90;
  double grid_resolution = 0.25;
  double inflation = 0.3;
  /// Remembered lidar points are thinned to one per voxel of this size.
  double memory_voxel = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Scenario {
  World world;
  Vec3 start = Vec3::Zero();
  double start_yaw = 0.0;
  /// World-frame velocity at t = 0; the initial margin must still be positive.
  Vec3 start_velocity = Vec3::Zero();
  Vec3 goal = Vec3::Zero();
  Gains gains;
  NavParams params;
};

/// One row per control tick, all values at the start of the tick.
struct TelemetryRecord {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Twist zeta;
  Vec3 g = Vec3::Zero();
  Vec3 g_bar = Vec3::Zero();
  double sigma = 0.0;
  double delta_e = 0.0;
  double h_d = 0.0;
  double radius = 0.0;
  double gov_speed = 0.0;   // ||g_dot||
  double d_true = 0.0;      // exact d(p, O)
  double d_bar = 0.0;       // sensed clearance at g
  ControlInput u = ControlInput::Zero();
  bool replanned = false;
  bool held = false;        // safety guard kept the previous reference
};

enum class Outcome { Running, Success, Timeout, Unsafe };
const char* outcome_name(Outcome o);

struct Verdict {
  Outcome outcome = Outcome::Running;
  double time = 0.0;
  std::size_t ticks = 0;
  double min_distance = 0.0;
  double min_delta_e = 0.0;
  double final_goal_error = 0.0;
  std::size_t replans = 0;
  std::size_t failed_replans = 0;
  std::size_t guard_holds = 0;
};

class Navigator {
 public:
  /// `model` drives the controller and the safety margin, `plant` is
  /// simulated. Throws std::invalid_argument when the start is not in free
  /// space or the initial safety margin is not positive, and
  /// std::runtime_error("no path") when no initial plan exists.
  Navigator(Scenario scenario, const HamiltonianModel& model, const HamiltonianModel& plant);

  /// One tick. Returns false once the run has an outcome.
  bool step();
  void run();

  const State& state() const { return x_; }
  const Vec3& governor() const { return g_; }
  const Path& path() const { return path_; }
  const ReferenceState& reference() const { return ref_; }
  const OccupancyGrid& grid() const { return grid_; }
  const std::vector<Vec3>& memory() const { return memory_; }
  const std::vector<TelemetryRecord>& telemetry() const { return log_; }
  const Verdict& verdict() const { return verdict_; }
  const Scenario& scenario() const { return sc_; }
  double time() const { return t_; }

 private:
  void sense();
  bool try_replan();

  Scenario sc_;
  const HamiltonianModel& model_;
  const HamiltonianModel& plant_;
  std::vector<Vec3> dirs_;
  OccupancyGrid grid_;
  std::vector<Vec3> memory_;
  std::unordered_set<std::uint64_t> voxels_;
  Path path_;
  Lift lift_;
  State x_;
  Vec3 g_;
  ReferenceState ref_;
  double t_ = 0.0;
  double next_replan_ = 0.0;
  std::vector<TelemetryRecord> log_;
  Verdict verdict_;
};

/// Start velocity along `direction` whose kinetic energy uses up `fraction`
/// (in [0, 1)) of the initial safety margin of the scenario started at rest.
Vec3 launch_velocity(const Scenario& scenario, const HamiltonianModel& model, const HamiltonianModel& plant,
                     const Vec3& direction, double fraction);

/// Header line (starting with '#') naming every column.
std::string telemetry_header();
std::string format_record(const TelemetryRecord& r);
void write_telemetry(const std::string& path, const std::vector<TelemetryRecord>& log);
/// Throws std::runtime_error on an empty or malformed file.
std::vector<TelemetryRecord> read_telemetry(const std::string& path);

std::string format_verdict(const Verdict& v);

/// Spearman rank correlation; 0 when either input is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace hamgov
