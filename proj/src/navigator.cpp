#include "hamgov/navigator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace hamgov {

void NavParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(fmt::format("{} must be positive", name));
  };
  positive(dt, "dt");
  positive(duration, "duration");
  positive(replan_period, "replan_period");
  positive(k_g, "k_g");
  positive(eps, "eps");
  positive(beta, "beta");
  positive(goal_tolerance, "goal_tolerance");
  positive(grid_resolution, "grid_resolution");
  positive(memory_voxel, "memory_voxel");
  if (!(inflation >= 0.0)) throw std::invalid_argument("inflation must be non-negative");
  if (lidar_rings <= 0 || lidar_azimuths <= 0) throw std::invalid_argument("lidar needs rings and azimuths");
}

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Running: return "running";
    case Outcome::Success: return "success";
    case Outcome::Timeout: return "timeout";
    case Outcome::Unsafe: return "unsafe";
  }
  return "unknown";
}

namespace {

bool inside(const World& w, const Vec3& p) { return (p.array() >= w.lo.array()).all() && (p.array() <= w.hi.array()).all(); }

}  // namespace

Navigator::Navigator(Scenario scenario, const HamiltonianModel& model, const HamiltonianModel& plant)
    : sc_(std::move(scenario)),
      model_(model),
      plant_(plant),
      dirs_(lidar_directions(sc_.params.lidar_rings, sc_.params.lidar_azimuths)),
      grid_(sc_.world.lo, sc_.world.hi, sc_.params.grid_resolution, sc_.params.inflation),
      path_({sc_.start}) {
  sc_.params.validate();
  sc_.gains.validate();
  if (!sc_.start.allFinite() || !sc_.goal.allFinite() || !sc_.start_velocity.allFinite()) throw std::invalid_argument("start, goal and start velocity must be finite");
  if (!inside(sc_.world, sc_.start) || !inside(sc_.world, sc_.goal)) {
    throw std::invalid_argument("start and goal must lie inside the world bounds");
  }
  if (!(exact_distance(sc_.start, sc_.world.obstacles) > 0.0)) throw std::invalid_argument("start is not in free space");
  if (!(exact_distance(sc_.goal, sc_.world.obstacles) > 0.0)) throw std::invalid_argument("goal is not in free space");

  const GeneralizedCoord q0{sc_.start, se3::so3_exp(Vec3(0.0, 0.0, sc_.start_yaw))};
  x_ = State{q0, momentum_of(q0, Twist{q0.R.transpose() * sc_.start_velocity, Vec3::Zero()}, plant_)};
  g_ = sc_.start;
  ref_ = lift_(g_, g_);

  sense();
  if (!try_replan()) throw std::runtime_error("no path");
  next_replan_ = sc_.params.replan_period;

  const double d_bar = cloud_distance(g_, memory_, sc_.params.beta);
  if (!(dsm(x_, ref_, d_bar, sc_.gains, model_) > 0.0)) {
    throw std::invalid_argument("initial safety margin is not positive");
  }
  verdict_.min_distance = std::numeric_limits<double>::infinity();
  verdict_.min_delta_e = std::numeric_limits<double>::infinity();
}

void Navigator::sense() {
  const PointCloud pc = lidar_scan(x_.q.p, x_.q.R, sc_.world.obstacles, sc_.params.beta, dirs_, t_);
  std::vector<Vec3> fresh;
  const double v = sc_.params.memory_voxel;
  for (const Vec3& y : pc.points) {
    // 21 bits per axis, offset so negative coordinates pack too
    std::uint64_t key = 0;
    for (int i = 0; i < 3; ++i) {
      const auto k = static_cast<std::int64_t>(std::floor(y(i) / v)) + (1 << 20);
      key = (key << 21) | (static_cast<std::uint64_t>(k) & 0x1FFFFF);
    }
    if (voxels_.insert(key).second) {
      memory_.push_back(y);
      fresh.push_back(y);
    }
  }
  grid_.update(fresh);
}

bool Navigator::try_replan() {
  try {
    path_ = astar_plan(grid_, g_, sc_.goal);
    ++verdict_.replans;
    return true;
  } catch (const std::runtime_error& e) {
    if (std::string(e.what()) != "no path") throw;
    ++verdict_.failed_replans;
    return false;
  }
}

bool Navigator::step() {
  if (verdict_.outcome != Outcome::Running) return false;
  const NavParams& P = sc_.params;

  TelemetryRecord rec;
  rec.t = t_;
  rec.p = x_.q.p;
  rec.R = x_.q.R;
  rec.zeta = twist_of(x_, plant_);

  sense();
  if (t_ >= next_replan_ - 1e-9) {
    rec.replanned = try_replan();
    next_replan_ += P.replan_period;
  }

  const double d_bar = cloud_distance(g_, memory_, P.beta);
  const double delta_e = dsm(x_, ref_, d_bar, sc_.gains, model_);
  const double radius = safe_radius(delta_e, P.eps);
  const ProjectedGoal pg = local_projected_goal(path_, g_, radius);

  Vec3 g_next = governor_step(g_, pg.point, P.k_g, P.dt);
  const Mat3 backup = lift_.backup();
  ReferenceState ref_next = lift_(g_next, pg.point);
  // the move must keep the margin non-negative for the current state, with
  // the clearance at the new point bounded through the 1-Lipschitz distance.
  // A heading change can cost more than the margin holds, so first retry the
  // move with the old attitude, then hold everything
  const double moved = (g_next - g_).norm();
  const double d_lb = std::max(0.0, d_bar - moved);
  if (dsm(x_, ref_next, d_lb, sc_.gains, model_) < 0.0) {
    rec.held = true;
    ++verdict_.guard_holds;
    lift_.reset(backup);
    ref_next.R = ref_.R;
    if (dsm(x_, ref_next, d_lb, sc_.gains, model_) < 0.0) {
      g_next = g_;
      ref_next = ref_;
    }
  }

  const ControlInput u = control(x_, ref_next, sc_.gains, model_);

  rec.g = g_;
  rec.g_bar = pg.point;
  rec.sigma = pg.sigma;
  rec.delta_e = delta_e;
  rec.h_d = desired_hamiltonian(x_, ref_, sc_.gains, model_);
  rec.radius = radius;
  rec.gov_speed = (g_next - g_).norm() / P.dt;
  rec.d_true = exact_distance(x_.q.p, sc_.world.obstacles);
  rec.d_bar = d_bar;
  rec.u = u;
  log_.push_back(rec);

  verdict_.min_distance = std::min(verdict_.min_distance, rec.d_true);
  verdict_.min_delta_e = std::min(verdict_.min_delta_e, delta_e);

  x_ = rk4_step(x_, u, P.dt, plant_);
  g_ = g_next;
  ref_ = ref_next;
  t_ += P.dt;
  ++verdict_.ticks;
  verdict_.time = t_;

  if (!x_.q.stacked().allFinite() || !x_.p.stacked().allFinite()) throw std::runtime_error("non-finite state");

  const double d_now = exact_distance(x_.q.p, sc_.world.obstacles);
  verdict_.min_distance = std::min(verdict_.min_distance, d_now);
  verdict_.final_goal_error = (x_.q.p - sc_.goal).norm();
  const double speed = twist_of(x_, plant_).stacked().norm();
  if (!(d_now > 0.0)) {
    verdict_.outcome = Outcome::Unsafe;
  } else if (verdict_.final_goal_error < P.goal_tolerance && speed < P.goal_tolerance &&
             (g_ - sc_.goal).norm() < P.goal_tolerance) {
    verdict_.outcome = Outcome::Success;
  } else if (t_ >= P.duration - 1e-9) {
    verdict_.outcome = Outcome::Timeout;
  }
  return verdict_.outcome == Outcome::Running;
}

void Navigator::run() {
  while (step()) {
  }
}

Vec3 launch_velocity(const Scenario& scenario, const HamiltonianModel& model, const HamiltonianModel& plant,
                     const Vec3& direction, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("launch fraction must lie in [0, 1)");
  if (!(direction.norm() > 0.0) || !direction.allFinite()) throw std::invalid_argument("launch direction must be non-zero");
  Scenario rest = scenario;
  rest.start_velocity = Vec3::Zero();
  const Navigator probe(rest, model, plant);
  const double d_bar = cloud_distance(rest.start, probe.memory(), rest.params.beta);
  const State x0 = probe.state();
  const ReferenceState ref = probe.reference();
  const double margin = dsm(x0, ref, d_bar, rest.gains, model);
  // the kinetic share of the margin is quadratic in the speed
  const Vec3 dir = direction.normalized();
  State x1 = x0;
  x1.p = momentum_of(x0.q, Twist{x0.q.R.transpose() * dir, Vec3::Zero()}, plant);
  const double per_unit = margin - dsm(x1, ref, d_bar, rest.gains, model);
  return std::sqrt(fraction * margin / per_unit) * dir;
}

std::string telemetry_header() {
  return "# t px py pz r11 r12 r13 r21 r22 r23 r31 r32 r33 vx vy vz wx wy wz gx gy gz gbx gby gbz sigma delta_e h_d "
         "radius gov_speed d_true d_bar fx fy fz tx ty tz replanned held";
}

std::string format_record(const TelemetryRecord& r) {
  std::string s = fmt::format("{:.17g}", r.t);
  auto put = [&](double v) { s += fmt::format(" {:.17g}", v); };
  for (int i = 0; i < 3; ++i) put(r.p(i));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) put(r.R(i, j));
  for (int i = 0; i < 3; ++i) put(r.zeta.v(i));
  for (int i = 0; i < 3; ++i) put(r.zeta.w(i));
  for (int i = 0; i < 3; ++i) put(r.g(i));
  for (int i = 0; i < 3; ++i) put(r.g_bar(i));
  for (double v : {r.sigma, r.delta_e, r.h_d, r.radius, r.gov_speed, r.d_true, r.d_bar}) put(v);
  for (int i = 0; i < 6; ++i) put(r.u(i));
  s += fmt::format(" {} {}", r.replanned ? 1 : 0, r.held ? 1 : 0);
  return s;
}

void write_telemetry(const std::string& path, const std::vector<TelemetryRecord>& log) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write telemetry " + path);
  f << telemetry_header() << '\n';
  for (const auto& r : log) f << format_record(r) << '\n';
  if (!f) throw std::runtime_error("cannot write telemetry " + path);
}

std::vector<TelemetryRecord> read_telemetry(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open telemetry " + path);
  std::vector<TelemetryRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (!ls.eof() || v.size() != 40) throw std::runtime_error(fmt::format("telemetry line {}: expected 40 numbers", lineno));
    TelemetryRecord r;
    std::size_t k = 0;
    r.t = v[k++];
    for (int i = 0; i < 3; ++i) r.p(i) = v[k++];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.R(i, j) = v[k++];
    for (int i = 0; i < 3; ++i) r.zeta.v(i) = v[k++];
    for (int i = 0; i < 3; ++i) r.zeta.w(i) = v[k++];
    for (int i = 0; i < 3; ++i) r.g(i) = v[k++];
    for (int i = 0; i < 3; ++i) r.g_bar(i) = v[k++];
    r.sigma = v[k++];
    r.delta_e = v[k++];
    r.h_d = v[k++];
    r.radius = v[k++];
    r.gov_speed = v[k++];
    r.d_true = v[k++];
    r.d_bar = v[k++];
    for (int i = 0; i < 6; ++i) r.u(i) = v[k++];
    r.replanned = v[k++] != 0.0;
    r.held = v[k++] != 0.0;
    out.push_back(r);
  }
  if (out.empty()) throw std::runtime_error("telemetry " + path + " has no records");
  return out;
}

std::string format_verdict(const Verdict& v) {
  return fmt::format(
      "outcome {}\ntime {:.6f}\nticks {}\nmin_distance {:.9g}\nmin_delta_e {:.9g}\nfinal_goal_error {:.9g}\n"
      "replans {}\nfailed_replans {}\nguard_holds {}\n",
      outcome_name(v.outcome), v.time, v.ticks, v.min_distance, v.min_delta_e, v.final_goal_error, v.replans,
      v.failed_replans, v.guard_holds);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman needs two equal-length series");
  auto ranks = [](const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j);  // average rank for ties
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace hamgov
