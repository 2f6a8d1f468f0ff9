#include "hamgov/config.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"

namespace hamgov {

namespace {

using nlohmann::json;

// Reads the keys of one object into fields; anything else is an error.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(fmt::format("{} must be an object", name_));
  }

  void allow(std::initializer_list<const char*> keys) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) throw ConfigError(fmt::format("unknown key {}.{}", name_, it.key()));
    }
  }

  bool has(const char* key) const { return j_.contains(key); }
  Section sub(const char* key) const { return Section(j_.at(key), name_ + "." + key); }

  void read(const char* key, double& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(fmt::format("{}.{} must be a number", name_, key));
    out = v.get<double>();
  }
  void read(const char* key, int& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(fmt::format("{}.{} must be an integer", name_, key));
    out = v.get<int>();
  }
  void read(const char* key, std::uint64_t& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError(fmt::format("{}.{} must be a non-negative integer", name_, key));
    }
    out = v.get<std::uint64_t>();
  }
  void read(const char* key, std::string& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(fmt::format("{}.{} must be a string", name_, key));
    out = v.get<std::string>();
  }
  void read(const char* key, Vec3& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 3) throw ConfigError(fmt::format("{}.{} must be [x, y, z]", name_, key));
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) throw ConfigError(fmt::format("{}.{} must be [x, y, z]", name_, key));
      out(i) = v[i].get<double>();
    }
  }

 private:
  const json& j_;
  std::string name_;
};

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || p == "ground-truth") return p;
  const std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  return (std::filesystem::path(base) / path).lexically_normal().string();
}

json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

Config parse_config(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  Config c;
  const Section root(j, "config");
  root.allow({"scenario", "gains", "governor", "sensing", "simulation", "model", "training", "data", "output"});

  if (root.has("scenario")) {
    const Section s = root.sub("scenario");
    s.allow({"world", "start", "goal", "start_yaw", "start_velocity", "launch"});
    s.read("world", c.scenario.world);
    s.read("start", c.scenario.start);
    s.read("goal", c.scenario.goal);
    s.read("start_yaw", c.scenario.start_yaw);
    s.read("start_velocity", c.scenario.start_velocity);
    if (s.has("launch")) {
      const Section l = s.sub("launch");
      l.allow({"direction", "fraction"});
      l.read("direction", c.scenario.launch_direction);
      l.read("fraction", c.scenario.launch_fraction);
    }
  }
  if (root.has("gains")) {
    const Section s = root.sub("gains");
    s.allow({"kp", "kR", "kv", "kw"});
    s.read("kp", c.gains.kp);
    s.read("kR", c.gains.kR);
    s.read("kv", c.gains.kv);
    s.read("kw", c.gains.kw);
  }
  if (root.has("governor")) {
    const Section s = root.sub("governor");
    s.allow({"k_g", "eps", "replan_period"});
    s.read("k_g", c.nav.k_g);
    s.read("eps", c.nav.eps);
    s.read("replan_period", c.nav.replan_period);
  }
  if (root.has("sensing")) {
    const Section s = root.sub("sensing");
    s.allow({"beta", "lidar_rings", "lidar_azimuths", "grid_resolution", "inflation", "memory_voxel"});
    s.read("beta", c.nav.beta);
    s.read("lidar_rings", c.nav.lidar_rings);
    s.read("lidar_azimuths", c.nav.lidar_azimuths);
    s.read("grid_resolution", c.nav.grid_resolution);
    s.read("inflation", c.nav.inflation);
    s.read("memory_voxel", c.nav.memory_voxel);
  }
  if (root.has("simulation")) {
    const Section s = root.sub("simulation");
    s.allow({"dt", "duration", "goal_tolerance", "seed"});
    s.read("dt", c.nav.dt);
    s.read("duration", c.nav.duration);
    s.read("goal_tolerance", c.nav.goal_tolerance);
    s.read("seed", c.nav.seed);
  }
  root.read("model", c.model);
  if (root.has("training")) {
    const Section s = root.sub("training");
    s.allow({"iterations", "learning_rate", "batch_size", "horizon", "seed", "substeps", "hidden"});
    s.read("iterations", c.training.iterations);
    s.read("learning_rate", c.training.learning_rate);
    s.read("batch_size", c.training.batch_size);
    s.read("horizon", c.training.horizon);
    s.read("seed", c.training.seed);
    s.read("substeps", c.training.substeps);
    s.read("hidden", c.hidden);
  }
  if (root.has("data")) {
    const Section s = root.sub("data");
    s.allow({"count", "horizon", "spacing", "flights", "flight_duration", "sim_dt", "seed"});
    s.read("count", c.data.count);
    s.read("horizon", c.data.horizon);
    s.read("spacing", c.data.spacing);
    s.read("flights", c.data.flights);
    s.read("flight_duration", c.data.flight_duration);
    s.read("sim_dt", c.data.sim_dt);
    s.read("seed", c.data.seed);
  }
  if (root.has("output")) {
    const Section s = root.sub("output");
    s.allow({"dir"});
    s.read("dir", c.output_dir);
  }

  c.scenario.world = resolve(base_dir, c.scenario.world);
  c.model = resolve(base_dir, c.model);

  try {
    c.nav.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(c.gains.kp > 0.0 && c.gains.kR > 0.0 && c.gains.kv > 0.0 && c.gains.kw > 0.0)) {
    throw ConfigError("gains must be positive");
  }
  if (!(c.scenario.launch_fraction >= 0.0 && c.scenario.launch_fraction < 1.0)) {
    throw ConfigError("scenario.launch.fraction must lie in [0, 1)");
  }
  if (c.training.iterations < 0 || c.training.batch_size <= 0 || c.training.horizon < 2 || c.training.substeps <= 0 ||
      !(c.training.learning_rate > 0.0) || c.hidden <= 0) {
    throw ConfigError("training settings out of range");
  }
  if (c.data.count <= 0 || c.data.horizon < 2 || c.data.flights <= 0 || !(c.data.spacing > 0.0) ||
      !(c.data.flight_duration > 0.0) || !(c.data.sim_dt > 0.0)) {
    throw ConfigError("data settings out of range");
  }
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string dir = std::filesystem::path(path).parent_path().string();
  return parse_config(ss.str(), dir.empty() ? "." : dir);
}

std::string dump_config(const Config& c) {
  json j;
  j["scenario"] = {{"world", c.scenario.world},
                   {"start", vec(c.scenario.start)},
                   {"goal", vec(c.scenario.goal)},
                   {"start_yaw", c.scenario.start_yaw},
                   {"start_velocity", vec(c.scenario.start_velocity)},
                   {"launch", {{"direction", vec(c.scenario.launch_direction)}, {"fraction", c.scenario.launch_fraction}}}};
  j["gains"] = {{"kp", c.gains.kp}, {"kR", c.gains.kR}, {"kv", c.gains.kv}, {"kw", c.gains.kw}};
  j["governor"] = {{"k_g", c.nav.k_g}, {"eps", c.nav.eps}, {"replan_period", c.nav.replan_period}};
  j["sensing"] = {{"beta", c.nav.beta},
                  {"lidar_rings", c.nav.lidar_rings},
                  {"lidar_azimuths", c.nav.lidar_azimuths},
                  {"grid_resolution", c.nav.grid_resolution},
                  {"inflation", c.nav.inflation},
                  {"memory_voxel", c.nav.memory_voxel}};
  j["simulation"] = {{"dt", c.nav.dt}, {"duration", c.nav.duration}, {"goal_tolerance", c.nav.goal_tolerance},
                     {"seed", c.nav.seed}};
  j["model"] = c.model;
  j["training"] = {{"iterations", c.training.iterations}, {"learning_rate", c.training.learning_rate},
                   {"batch_size", c.training.batch_size},  {"horizon", c.training.horizon},
                   {"seed", c.training.seed},              {"substeps", c.training.substeps},
                   {"hidden", c.hidden}};
  j["data"] = {{"count", c.data.count},   {"horizon", c.data.horizon},
               {"spacing", c.data.spacing}, {"flights", c.data.flights},
               {"flight_duration", c.data.flight_duration}, {"sim_dt", c.data.sim_dt},
               {"seed", c.data.seed}};
  j["output"] = {{"dir", c.output_dir}};
  return j.dump(2) + "\n";
}

Scenario make_scenario(const Config& c, const GroundTruthModel& vehicle) {
  if (c.scenario.world.empty()) throw ConfigError("scenario.world is required");
  Scenario sc;
  try {
    sc.world = load_world(c.scenario.world);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  sc.start = c.scenario.start;
  sc.goal = c.scenario.goal;
  sc.start_yaw = c.scenario.start_yaw;
  sc.start_velocity = c.scenario.start_velocity;
  sc.gains.kp = c.gains.kp;
  sc.gains.KR = c.gains.kR * vehicle.inertia();
  sc.gains.kv = c.gains.kv;
  sc.gains.Kw = c.gains.kw * vehicle.inertia();
  sc.params = c.nav;
  return sc;
}

}  // namespace hamgov
