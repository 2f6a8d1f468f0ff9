#include "hamgov/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace hamgov {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double box_distance(const Box& b, const Vec3& p) {
  const Vec3 d = (b.lo - p).cwiseMax(p - b.hi).cwiseMax(0.0);
  return d.norm();
}

std::optional<double> ray_sphere(const Sphere& s, const Vec3& o, const Vec3& d) {
  const Vec3 f = o - s.center;
  const double c = f.squaredNorm() - s.radius * s.radius;
  if (c <= 0.0) return 0.0;
  const double b = d.dot(f);
  const double disc = b * b - c;
  if (b > 0.0 || disc < 0.0) return std::nullopt;
  // stable root of t^2 + 2bt + c
  const double q = -b + std::sqrt(disc);
  return c / q;
}

std::optional<double> ray_box(const Box& bx, const Vec3& o, const Vec3& d) {
  double t0 = 0.0, t1 = kInf;
  for (int i = 0; i < 3; ++i) {
    if (d(i) == 0.0) {
      if (o(i) < bx.lo(i) || o(i) > bx.hi(i)) return std::nullopt;
      continue;
    }
    double a = (bx.lo(i) - o(i)) / d(i), b = (bx.hi(i) - o(i)) / d(i);
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

}  // namespace

void ObstacleSet::add(const Sphere& s) {
  if (!s.center.allFinite() || !(s.radius > 0.0) || !std::isfinite(s.radius)) {
    throw std::invalid_argument("sphere radius must be positive");
  }
  spheres_.push_back(s);
}

void ObstacleSet::add(const Box& b) {
  if (!b.lo.allFinite() || !b.hi.allFinite() || !(b.lo.array() < b.hi.array()).all()) {
    throw std::invalid_argument("box needs min < max in every axis");
  }
  boxes_.push_back(b);
}

double ObstacleSet::distance(const Vec3& p) const {
  double d = kInf;
  for (const auto& s : spheres_) d = std::min(d, std::max(0.0, (p - s.center).norm() - s.radius));
  for (const auto& b : boxes_) d = std::min(d, box_distance(b, p));
  return d;
}

std::optional<double> ObstacleSet::raycast(const Vec3& origin, const Vec3& dir, double max_range) const {
  double best = kInf;
  for (const auto& s : spheres_) {
    if (auto t = ray_sphere(s, origin, dir)) best = std::min(best, *t);
  }
  for (const auto& b : boxes_) {
    if (auto t = ray_box(b, origin, dir)) best = std::min(best, *t);
  }
  if (best <= max_range) return best;
  return std::nullopt;
}

double exact_distance(const Vec3& p, const ObstacleSet& obstacles) { return obstacles.distance(p); }

double truncated_distance(const Vec3& p, const ObstacleSet& obstacles, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("sensing range must be positive");
  return std::min(obstacles.distance(p), beta);
}

World parse_world(const std::string& text) {
  World w;
  bool have_bounds = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    throw std::runtime_error(fmt::format("world line {}: {}", lineno, why));
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (!ls.eof()) fail("bad number");
    try {
      if (kind == "bounds" && v.size() == 6) {
        w.lo = {v[0], v[1], v[2]};
        w.hi = {v[3], v[4], v[5]};
        if (!(w.lo.array() < w.hi.array()).all()) fail("bounds need min < max");
        have_bounds = true;
      } else if (kind == "sphere" && v.size() == 4) {
        w.obstacles.add(Sphere{{v[0], v[1], v[2]}, v[3]});
      } else if (kind == "box" && v.size() == 6) {
        w.obstacles.add(Box{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
      } else {
        fail("expected 'bounds' (6), 'sphere' (4) or 'box' (6) values");
      }
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
  if (!have_bounds) throw std::runtime_error("world has no bounds line");
  return w;
}

World load_world(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open world file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_world(ss.str());
}

std::string format_world(const World& w) {
  std::string out = fmt::format("bounds {} {} {} {} {} {}\n", w.lo.x(), w.lo.y(), w.lo.z(), w.hi.x(), w.hi.y(),
                                w.hi.z());
  for (const auto& s : w.obstacles.spheres()) {
    out += fmt::format("sphere {} {} {} {}\n", s.center.x(), s.center.y(), s.center.z(), s.radius);
  }
  for (const auto& b : w.obstacles.boxes()) {
    out += fmt::format("box {} {} {} {} {} {}\n", b.lo.x(), b.lo.y(), b.lo.z(), b.hi.x(), b.hi.y(), b.hi.z());
  }
  return out;
}

std::vector<Vec3> lidar_directions(int rings, int azimuths, double max_elevation) {
  if (rings <= 0 || azimuths <= 0) throw std::invalid_argument("lidar needs rings and azimuths");
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<std::size_t>(rings * azimuths));
  for (int i = 0; i < rings; ++i) {
    const double el = rings == 1 ? 0.0 : -max_elevation + 2.0 * max_elevation * i / (rings - 1);
    for (int j = 0; j < azimuths; ++j) {
      const double az = 2.0 * M_PI * j / azimuths;
      dirs.emplace_back(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    }
  }
  return dirs;
}

PointCloud lidar_scan(const Vec3& p, const Mat3& R, const ObstacleSet& obstacles, double beta,
                      const std::vector<Vec3>& body_dirs, double time) {
  PointCloud pc;
  pc.time = time;
  if (obstacles.empty()) return pc;
  for (const Vec3& b : body_dirs) {
    const Vec3 d = R * b;
    if (auto t = obstacles.raycast(p, d, beta)) pc.points.push_back(p + *t * d);
  }
  return pc;
}

double cloud_distance(const Vec3& g, const std::vector<Vec3>& points, double beta) {
  double best = beta * beta;
  for (const Vec3& y : points) best = std::min(best, (g - y).squaredNorm());
  return std::sqrt(best);
}

}  // namespace hamgov
