#include "hamgov/governor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hamgov {

Path::Path(std::vector<Vec3> waypoints) : waypoints_(std::move(waypoints)) {
  if (waypoints_.empty()) throw std::invalid_argument("path needs at least one waypoint");
  cumulative_.push_back(0.0);
  for (std::size_t i = 0; i < waypoints_.size(); ++i) {
    if (!waypoints_[i].allFinite()) throw std::invalid_argument("path waypoint is not finite");
    if (i > 0) cumulative_.push_back(cumulative_.back() + (waypoints_[i] - waypoints_[i - 1]).norm());
  }
}

Vec3 Path::at(double sigma) const {
  const double L = length();
  if (L <= 0.0 || sigma >= 1.0) return sigma >= 1.0 ? waypoints_.back() : waypoints_.front();
  if (sigma <= 0.0) return waypoints_.front();
  const double s = sigma * L;
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const double t = seg > 0.0 ? (s - cumulative_[i]) / seg : 0.0;
  return waypoints_[i] + t * (waypoints_[i + 1] - waypoints_[i]);
}

double Path::nearest(const Vec3& x) const {
  const double L = length();
  if (L <= 0.0) return 0.0;
  double best = std::numeric_limits<double>::infinity(), best_s = 0.0;
  for (std::size_t i = 0; i + 1 < waypoints_.size(); ++i) {
    const Vec3 d = waypoints_[i + 1] - waypoints_[i];
    const double len2 = d.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp(d.dot(x - waypoints_[i]) / len2, 0.0, 1.0) : 0.0;
    const double dist = (waypoints_[i] + t * d - x).squaredNorm();
    if (dist <= best) {
      best = dist;
      best_s = cumulative_[i] + t * std::sqrt(len2);
    }
  }
  return best_s / L;
}

Vec3 governor_step(const Vec3& g, const Vec3& u_g, double k_g, double dt) {
  if (!(dt > 0.0) || !(k_g > 0.0)) throw std::invalid_argument("governor needs dt > 0 and k_g > 0");
  return u_g + (g - u_g) * std::exp(-k_g * dt);
}

double safe_radius(double delta_e, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  return std::sqrt(std::max(0.0, delta_e) / (1.0 + eps));
}

double local_safe_radius(const State& x, const ReferenceState& ref, const Gains& gains,
                         const HamiltonianModel& model, double d_bar, double eps) {
  return safe_radius(dsm(x, ref, d_bar, gains, model), eps);
}

ProjectedGoal local_projected_goal(const Path& path, const Vec3& g, double radius) {
  const auto& w = path.waypoints();
  const auto& cum = path.cumulative();
  const double L = path.length();
  const double r2 = radius * radius;

  if (L <= 0.0) {
    if ((w.front() - g).squaredNorm() <= r2) return {w.front(), 1.0, false};
    return {g, 0.0, true};
  }
  // last segment first: the first hit holds the largest parameter
  for (std::size_t i = w.size() - 1; i-- > 0;) {
    const Vec3 d = w[i + 1] - w[i];
    const double a = d.squaredNorm();
    if (a <= 0.0) continue;
    const Vec3 f = w[i] - g;
    const double b = d.dot(f);
    const double c = f.squaredNorm() - r2;
    const double disc = b * b - a * c;
    if (disc < 0.0) continue;
    const double t_hi = (-b + std::sqrt(disc)) / a;
    const double t_lo = (-b - std::sqrt(disc)) / a;
    if (t_hi < 0.0 || t_lo > 1.0) continue;
    const double t = std::min(1.0, t_hi);
    const double sigma = std::min(1.0, (cum[i] + t * std::sqrt(a)) / L);
    const Vec3 point = t >= 1.0 ? w[i + 1] : Vec3(w[i] + t * d);
    return {point, sigma, false};
  }
  return {g, path.nearest(g), true};
}

ReferenceState Lift::operator()(const Vec3& g, const Vec3& g_bar) {
  const Vec3 d = g_bar - g;
  const double n = d.norm();
  if (n < kTol) return {g, backup_};
  const Vec3 c1 = d / n;
  const Vec3 e3c1 = Vec3::UnitZ().cross(c1);
  if (e3c1.norm() < kTol) {
    backup_ = Mat3::Identity();
  } else {
    const Vec3 c2 = e3c1.normalized();
    const Vec3 c3 = c1.cross(c2).normalized();
    backup_.col(0) = c1;
    backup_.col(1) = c2;
    backup_.col(2) = c3;
  }
  return {g, backup_};
}

}  // namespace hamgov
