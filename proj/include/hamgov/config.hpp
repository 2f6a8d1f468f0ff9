#pragma once

// One JSON document configures every CLI subcommand. Unknown keys are
// rejected so typos fail loudly; missing keys keep their defaults.

#include <stdexcept>
#include <string>

#include "hamgov/hnode.hpp"
#include "hamgov/navigator.hpp"

namespace hamgov {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Config {
  struct ScenarioSection {
    std::string world;  // resolved against the config file's directory
    Vec3 start = Vec3(1.0, 1.0, 1.0);
    Vec3 goal = Vec3(2.0, 1.0, 1.0);
    double start_yaw = 0.0;
    Vec3 start_velocity = Vec3::Zero();
    /// When fraction > 0 the start velocity is replaced by a launch along
    /// `launch_direction` that spends this share of the initial margin.
    Vec3 launch_direction = Vec3::UnitX();
    double launch_fraction = 0.0;
  } scenario;

  /// K_R = kR J and K_w = kw J with the vehicle inertia J.
  struct GainSection {
    double kp = 0.25, kR = 125.0, kv = 0.125, kw = 10.0;
  } gains;

  NavParams nav;  // governor, sensing and simulation sections
  /// "ground-truth" or the path of a trained model file.
  std::string model = "ground-truth";
  TrainConfig training;
  int hidden = 64;
  DataGenConfig data;
  std::string output_dir = "out";
};

/// Throws ConfigError on malformed JSON, unknown keys or wrong types.
Config parse_config(const std::string& text, const std::string& base_dir = ".");
Config load_config(const std::string& path);
std::string dump_config(const Config& cfg);

/// Loads the world and builds the scenario (launch not applied).
Scenario make_scenario(const Config& cfg, const GroundTruthModel& vehicle);

}  // namespace hamgov
