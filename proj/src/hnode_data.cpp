#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "hamgov/hnode.hpp"

namespace hamgov {

void validate(const Trajectory& traj) {
  const std::size_t n = traj.times.size();
  if (n < 2) throw std::invalid_argument("trajectory needs at least two samples");
  if (traj.q.size() != n || traj.zeta.size() != n) throw std::invalid_argument("trajectory field sizes differ");
  for (std::size_t k = 1; k < n; ++k) {
    if (!(traj.times[k] > traj.times[k - 1])) throw std::invalid_argument("times must be strictly increasing");
  }
  for (const auto& q : traj.q) {
    if (!se3::is_rotation(q.R, 1e-6)) throw std::invalid_argument("trajectory orientation is not a rotation");
  }
}

Trajectory translate_to_origin(const Trajectory& traj) {
  if (traj.q.empty()) throw std::invalid_argument("empty trajectory");
  Trajectory out = traj;
  const Vec3 p0 = traj.q.front().p;
  for (auto& q : out.q) q.p -= p0;
  return out;
}

namespace {

// Pose PD used only to produce excitation for the dataset.
struct PoseTarget {
  Vec3 p;
  Mat3 R;
};

ControlInput pose_pd(const State& x, const PoseTarget& target, const GroundTruthModel& model) {
  const double kp = 0.1, kv = 0.06;
  const Mat3& J = model.inertia();
  const Mat3& R = x.q.R;
  const Twist z = Twist::from_stacked(model.mass_matrix().inverse() * x.p.stacked());
  const Vec3 eR = 0.5 * se3::vee(target.R.transpose() * R - R.transpose() * target.R);
  ControlInput u;
  u.head<3>() = model.mass() * model.gravity() * R.row(2).transpose() - kp * R.transpose() * (x.q.p - target.p) -
                kv * z.v;
  u.tail<3>() = -16.0 * J * eR - 4.0 * J * z.w;
  return u;
}

Mat3 random_rotation(std::mt19937_64& rng, double max_angle) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> a(0.0, max_angle);
  const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
  return se3::so3_exp(a(rng) * axis);
}

Vec3 uniform3(std::mt19937_64& rng, double s) {
  std::uniform_real_distribution<double> d(-s, s);
  return {d(rng), d(rng), d(rng)};
}

State simulate(State x, const ControlInput& u, double duration, double max_dt, const GroundTruthModel& model) {
  const int steps = std::max(1, static_cast<int>(std::ceil(duration / max_dt - 1e-9)));
  const double dt = duration / steps;
  for (int i = 0; i < steps; ++i) x = rk4_step(x, u, dt, model);
  return x;
}

void record(Trajectory& tr, double t, const State& x, const GroundTruthModel& model) {
  tr.times.push_back(t);
  tr.q.push_back(x.q);
  tr.zeta.push_back(twist_of(x, model));
}

}  // namespace

Dataset generate_dataset(const GroundTruthModel& model, const DataGenConfig& cfg) {
  if (cfg.count < 1 || cfg.horizon < 1) throw std::invalid_argument("dataset count and horizon must be positive");
  if (cfg.flights < 1 || !(cfg.flight_duration > 0.0) || !(cfg.spacing > 0.0) || !(cfg.sim_dt > 0.0)) {
    throw std::invalid_argument("invalid dataset generation settings");
  }
  std::mt19937_64 rng(cfg.seed);
  const int per_flight = (cfg.count + cfg.flights - 1) / cfg.flights;
  const double window_gap = cfg.flight_duration / per_flight;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  Dataset data;
  data.reserve(static_cast<std::size_t>(cfg.count));
  for (int f = 0; f < cfg.flights && static_cast<int>(data.size()) < cfg.count; ++f) {
    GeneralizedCoord q0{uniform3(rng, 1.0), random_rotation(rng, M_PI / 3.0)};
    const Twist z0{uniform3(rng, 0.5), uniform3(rng, 1.0)};
    State x{q0, generalized_momentum(model.mass_matrix(), z0)};
    const PoseTarget target{uniform3(rng, 1.0), random_rotation(rng, M_PI / 2.0)};

    for (int w = 0; w < per_flight && static_cast<int>(data.size()) < cfg.count; ++w) {
      ControlInput u = pose_pd(x, target, model);
      ControlInput excite;
      excite << 0.02 * unit(rng), 0.02 * unit(rng), 0.02 * unit(rng), 1e-4 * unit(rng), 1e-4 * unit(rng),
          1e-4 * unit(rng);
      u += excite;

      Trajectory tr;
      tr.u = u;
      State y = x;
      record(tr, 0.0, y, model);
      for (int k = 1; k <= cfg.horizon; ++k) {
        y = simulate(y, u, cfg.spacing, cfg.sim_dt, model);
        record(tr, k * cfg.spacing, y, model);
      }
      data.push_back(translate_to_origin(tr));

      // advance the flight itself under continuously updated PD
      const int steps = std::max(1, static_cast<int>(std::ceil(window_gap / cfg.sim_dt - 1e-9)));
      const double dt = window_gap / steps;
      for (int s = 0; s < steps; ++s) x = rk4_step(x, pose_pd(x, target, model), dt, model);
    }
  }
  return data;
}

double estimate_inv_inertia_scale(const Dataset& data) {
  double num = 0.0, den = 0.0;
  for (const auto& tr : data) {
    if (tr.times.size() < 2) continue;
    const double dt = tr.times[1] - tr.times[0];
    const Vec3 accel = (tr.zeta[1].w - tr.zeta[0].w) / dt;
    const Vec3 tau = tr.u.tail<3>();
    num += accel.dot(tau);
    den += tau.dot(tau);
  }
  if (!(den > 0.0) || !(num > 0.0)) throw std::invalid_argument("dataset carries no usable torque excitation");
  return num / den;
}

std::pair<double, double> estimate_input_scales(const Dataset& data) {
  double f2 = 0.0, t2 = 0.0;
  for (const auto& tr : data) {
    f2 += tr.u.head<3>().squaredNorm();
    t2 += tr.u.tail<3>().squaredNorm();
  }
  const double n = 3.0 * static_cast<double>(data.size());
  if (!(f2 > 0.0) || !(t2 > 0.0)) throw std::invalid_argument("dataset carries no usable input excitation");
  return {std::sqrt(f2 / n), std::sqrt(t2 / n)};
}

LearnedModel initial_model(const Dataset& data, double mass, double gravity, std::uint64_t seed, int hidden) {
  LearnedModel m = LearnedModel::initialized(mass, gravity, estimate_inv_inertia_scale(data), seed, hidden);
  const auto [force, torque] = estimate_input_scales(data);
  m.set_input_scales(force, torque);
  return m;
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "# hamgov dataset v1\n"
       "# traj t px py pz r11 r12 r13 r21 r22 r23 r31 r32 r33 vx vy vz wx wy wz u1 u2 u3 u4 u5 u6\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Trajectory& tr = data[i];
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      std::string line = fmt::format("{} {:.17g}", i, tr.times[k]);
      const Vec12 q = tr.q[k].stacked();
      for (int j = 0; j < 12; ++j) line += fmt::format(" {:.17g}", q(j));
      const Vec6 z = tr.zeta[k].stacked();
      for (int j = 0; j < 6; ++j) line += fmt::format(" {:.17g}", z(j));
      for (int j = 0; j < 6; ++j) line += fmt::format(" {:.17g}", tr.u(j));
      f << line << '\n';
    }
  }
  if (!f) throw std::runtime_error("cannot write " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  Dataset data;
  long current = -1;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream in(line);
    long id;
    double t;
    Vec12 q;
    Vec6 z;
    ControlInput u;
    in >> id >> t;
    for (int j = 0; j < 12; ++j) in >> q(j);
    for (int j = 0; j < 6; ++j) in >> z(j);
    for (int j = 0; j < 6; ++j) in >> u(j);
    if (!in) throw std::runtime_error(fmt::format("{}:{}: malformed dataset row", path, lineno));
    if (id != current) {
      if (id != current + 1) throw std::runtime_error(fmt::format("{}:{}: trajectory ids out of order", path, lineno));
      current = id;
      data.emplace_back();
      data.back().u = u;
    }
    Trajectory& tr = data.back();
    tr.times.push_back(t);
    tr.q.push_back(GeneralizedCoord::from_stacked(q));
    tr.zeta.push_back(Twist::from_stacked(z));
  }
  for (const auto& tr : data) validate(tr);
  return data;
}

}  // namespace hamgov
