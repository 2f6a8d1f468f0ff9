#pragma once

// Reference governor: first-order filter g toward a projected goal on the
// reference path, plus the lift of (g, g_bar) to a full SE(3) reference.

#include <vector>

#include "hamgov/idapbc.hpp"

namespace hamgov {

/// Piecewise-linear path parameterised by normalised arc length in [0, 1].
class Path {
 public:
  /// Throws std::invalid_argument on an empty or non-finite waypoint list.
  explicit Path(std::vector<Vec3> waypoints);

  Vec3 at(double sigma) const;
  double length() const { return cumulative_.back(); }
  const std::vector<Vec3>& waypoints() const { return waypoints_; }
  Vec3 start() const { return waypoints_.front(); }
  Vec3 end() const { return waypoints_.back(); }
  /// Arc length up to each waypoint.
  const std::vector<double>& cumulative() const { return cumulative_; }
  /// Parameter of the path point closest to x.
  double nearest(const Vec3& x) const;

 private:
  std::vector<Vec3> waypoints_;
  std::vector<double> cumulative_;
};

/// Exact solution of g_dot = -k_g (g - u_g) over dt with u_g held.
Vec3 governor_step(const Vec3& g, const Vec3& u_g, double k_g, double dt);

/// sqrt(max(0, dE) / (1 + eps)).
double safe_radius(double delta_e, double eps);

/// Radius of the local safe set around ref.p, where ref is the current lifted
/// governor reference and d_bar the obstacle clearance measured at ref.p.
double local_safe_radius(const State& x, const ReferenceState& ref, const Gains& gains,
                         const HamiltonianModel& model, double d_bar, double eps);

struct ProjectedGoal {
  Vec3 point = Vec3::Zero();
  double sigma = 0.0;
  /// No path point lies within the radius: point is g itself.
  bool fallback = false;
};

/// Furthest point along the path inside the closed ball (g, radius).
ProjectedGoal local_projected_goal(const Path& path, const Vec3& g, double radius);

/// Lift of (g, g_bar): position g, attitude heading toward g_bar. Keeps the
/// most recent attitude as the backup used when g_bar == g.
class Lift {
 public:
  static constexpr double kTol = 1e-9;

  ReferenceState operator()(const Vec3& g, const Vec3& g_bar);
  const Mat3& backup() const { return backup_; }
  void reset(const Mat3& R = Mat3::Identity()) { backup_ = R; }

 private:
  Mat3 backup_ = Mat3::Identity();
};

}  // namespace hamgov
