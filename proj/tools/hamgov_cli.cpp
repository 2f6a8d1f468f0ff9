// hamgov command line: data generation, training, navigation runs, plots.
//
// Exit codes: 0 ok, 1 other failure, 2 config or usage error, 3 training
// diverged, 4 unsafe or timed-out run.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "hamgov/config.hpp"
#include "hamgov/hnode.hpp"
#include "hamgov/navigator.hpp"
#include "hamgov/plot.hpp"

using namespace hamgov;
namespace fs = std::filesystem;

namespace {

constexpr int kConfigError = 2;
constexpr int kDiverged = 3;
constexpr int kUnsafe = 4;

struct Common {
  std::string config;
  std::string out_dir;
};

Config load(const Common& c) {
  Config cfg = c.config.empty() ? parse_config("{}") : load_config(c.config);
  if (const char* env = std::getenv("HAMGOV_OUT_DIR"); env && *env) cfg.output_dir = env;
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  return cfg;
}

std::string out_path(const Config& cfg, const std::string& name) {
  fs::create_directories(cfg.output_dir);
  return (fs::path(cfg.output_dir) / name).string();
}

std::unique_ptr<HamiltonianModel> controller_model(const std::string& spec) {
  if (spec == "ground-truth") return std::make_unique<GroundTruthModel>(GroundTruthModel::hexarotor());
  if (!fs::exists(spec)) throw ConfigError("model file not found: " + spec);
  return std::make_unique<LearnedModel>(LearnedModel::load(spec));
}

Vec3 vec_or(const std::vector<double>& v, const Vec3& fallback, const char* name) {
  if (v.empty()) return fallback;
  if (v.size() != 3) throw ConfigError(fmt::format("--{} takes three numbers", name));
  return {v[0], v[1], v[2]};
}

struct RunOutcome {
  Verdict verdict;
  std::vector<Vec3> path;
};

RunOutcome run_scenario(const Config& cfg, const std::string& tag, bool write) {
  const GroundTruthModel plant = GroundTruthModel::hexarotor();
  const auto model = controller_model(cfg.model);
  Scenario sc = make_scenario(cfg, plant);
  if (cfg.scenario.launch_fraction > 0.0) {
    sc.start_velocity = launch_velocity(sc, *model, plant, cfg.scenario.launch_direction, cfg.scenario.launch_fraction);
  }
  Navigator nav(sc, *model, plant);
  nav.run();
  if (write) {
    write_telemetry(out_path(cfg, tag + "telemetry.tel"), nav.telemetry());
    std::ofstream(out_path(cfg, tag + "verdict.txt")) << format_verdict(nav.verdict());
    std::ofstream paths(out_path(cfg, tag + "path.txt"));
    for (const Vec3& w : nav.path().waypoints()) paths << fmt::format("{:.17g} {:.17g} {:.17g}\n", w.x(), w.y(), w.z());
    std::ofstream(out_path(cfg, tag + "config.json")) << dump_config(cfg);
  }
  return {nav.verdict(), nav.path().waypoints()};
}

std::vector<Vec3> read_path(const std::string& file) {
  std::vector<Vec3> out;
  std::ifstream in(file);
  double x, y, z;
  while (in >> x >> y >> z) out.emplace_back(x, y, z);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned Hamiltonian dynamics with an energy-aware reference governor"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "JSON config file");
    sub->add_option("-o,--out-dir", common.out_dir, "output directory (overrides HAMGOV_OUT_DIR and the config)");
  };

  auto* gen = app.add_subcommand("generate-data", "simulate the hexarotor and write a training dataset");
  add_common(gen);
  std::optional<int> trajectories;
  std::optional<std::uint64_t> data_seed;
  gen->add_option("-n,--trajectories", trajectories, "number of trajectory windows");
  gen->add_option("--seed", data_seed, "data seed");

  auto* train_cmd = app.add_subcommand("train", "fit the Hamiltonian networks");
  add_common(train_cmd);
  std::optional<int> iterations;
  std::string data_file, init = "random";
  train_cmd->add_option("-i,--iterations", iterations, "Adam iterations");
  train_cmd->add_option("-d,--data", data_file, "dataset file (generated when missing)");
  train_cmd->add_option("--init", init, "initial weights: random or ground-truth")
      ->check(CLI::IsMember({"random", "ground-truth"}));

  auto* sim = app.add_subcommand("simulate", "run one navigation scenario");
  add_common(sim);
  std::string model_flag, world_flag;
  std::vector<double> start_flag, goal_flag;
  std::optional<std::uint64_t> sim_seed;
  std::optional<double> duration, k_g;
  sim->add_option("-m,--model", model_flag, "ground-truth or a trained model file");
  sim->add_option("-w,--world", world_flag, "world file");
  sim->add_option("--start", start_flag, "start position x y z")->expected(3);
  sim->add_option("--goal", goal_flag, "goal position x y z")->expected(3);
  sim->add_option("--seed", sim_seed, "simulation seed");
  sim->add_option("--duration", duration, "time cap [s]");
  sim->add_option("--kg", k_g, "governor gain");

  auto* plot = app.add_subcommand("plot", "SVG figures from a telemetry file");
  add_common(plot);
  std::string tel_file;
  plot->add_option("-t,--telemetry", tel_file, "telemetry file (default: output dir)");

  auto* eval = app.add_subcommand("evaluate", "run several scenario configs and print a summary table");
  std::vector<std::string> eval_configs;
  std::string eval_model;
  eval->add_option("configs", eval_configs, "scenario configs")->required();
  eval->add_option("-m,--model", eval_model, "ground-truth or a trained model file (overrides every config)");
  eval->add_option("-o,--out-dir", common.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*gen) {
      Config cfg = load(common);
      if (trajectories) cfg.data.count = *trajectories;
      if (data_seed) cfg.data.seed = *data_seed;
      if (cfg.data.count <= 0) throw ConfigError("--trajectories must be positive");
      const Dataset data = generate_dataset(GroundTruthModel::hexarotor(), cfg.data);
      const std::string file = out_path(cfg, "dataset.txt");
      save_dataset(data, file);
      fmt::print("wrote {} trajectories to {}\n", data.size(), file);
      return 0;
    }

    if (*train_cmd) {
      Config cfg = load(common);
      if (iterations) cfg.training.iterations = *iterations;
      if (cfg.training.iterations < 0) throw ConfigError("--iterations must be non-negative");
      const GroundTruthModel truth = GroundTruthModel::hexarotor();
      const std::string dfile = data_file.empty() ? out_path(cfg, "dataset.txt") : data_file;
      Dataset data;
      if (fs::exists(dfile)) {
        data = load_dataset(dfile);
      } else {
        data = generate_dataset(truth, cfg.data);
        save_dataset(data, dfile);
      }
      LearnedModel start = initial_model(data, truth.mass(), truth.gravity(), cfg.training.seed, cfg.hidden);
      if (init == "ground-truth") start.set_ground_truth(truth);
      const int every = std::max(1, cfg.training.iterations / 20);
      const TrainResult res = train(data, start, cfg.training, [&](int it, double loss) {
        if (it % every == 0) fmt::print("iteration {} loss {:.6e}\n", it, loss);
      });
      const std::string mfile = out_path(cfg, "model.txt");
      res.model.save(mfile);
      std::ofstream hist(out_path(cfg, "loss.txt"));
      for (std::size_t i = 0; i < res.loss_history.size(); ++i) hist << fmt::format("{} {:.17g}\n", i, res.loss_history[i]);
      std::vector<Mat3> rots;
      for (std::size_t i = 0; i < data.size(); i += 10) rots.push_back(data[i].q.front().R);
      const ScaleCheck sc = scale_consistency(res.model, truth, rots);
      fmt::print("initial loss {:.6e}\nfinal loss {:.6e}\ngamma {:.6f}\nmax relative deviation {:.6f}\nmodel {}\n",
                 res.initial_loss, res.final_loss, sc.gamma, sc.max_rel_dev, mfile);
      return 0;
    }

    if (*sim) {
      Config cfg = load(common);
      if (!model_flag.empty()) cfg.model = model_flag;
      if (!world_flag.empty()) cfg.scenario.world = world_flag;
      cfg.scenario.start = vec_or(start_flag, cfg.scenario.start, "start");
      cfg.scenario.goal = vec_or(goal_flag, cfg.scenario.goal, "goal");
      if (sim_seed) cfg.nav.seed = *sim_seed;
      if (duration) cfg.nav.duration = *duration;
      if (k_g) cfg.nav.k_g = *k_g;
      try {
        cfg.nav.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      const RunOutcome r = run_scenario(cfg, "", true);
      fmt::print("{}", format_verdict(r.verdict));
      return r.verdict.outcome == Outcome::Success ? 0 : kUnsafe;
    }

    if (*plot) {
      Config cfg = load(common);
      const std::string tfile = tel_file.empty() ? out_path(cfg, "telemetry.tel") : tel_file;
      const auto log = read_telemetry(tfile);
      World world;
      world.lo = Vec3::Zero();
      world.hi = Vec3::Ones();
      if (!cfg.scenario.world.empty()) {
        world = load_world(cfg.scenario.world);
      } else {
        // no world: frame the flown trajectory
        world.lo = world.hi = log.front().p;
        for (const auto& r : log) {
          world.lo = world.lo.cwiseMin(r.p);
          world.hi = world.hi.cwiseMax(r.p);
        }
        world.lo.array() -= 0.5;
        world.hi.array() += 0.5;
      }
      const fs::path pfile = fs::path(tfile).parent_path() / "path.txt";
      const auto files = write_plots(cfg.output_dir, log, cfg.gains.kp, world,
                                     fs::exists(pfile) ? read_path(pfile.string()) : std::vector<Vec3>{});
      for (const auto& f : files) fmt::print("{}\n", f);
      return 0;
    }

    if (*eval) {
      std::string out = common.out_dir;
      if (out.empty()) {
        const char* env = std::getenv("HAMGOV_OUT_DIR");
        if (env && *env) out = env;
      }
      bool all_ok = true;
      fmt::print("{:<24} {:<8} {:>8} {:>10} {:>12} {:>8}\n", "scenario", "outcome", "time", "min_dist", "min_dE", "replans");
      for (const auto& file : eval_configs) {
        Config cfg = load_config(file);
        if (!eval_model.empty()) cfg.model = eval_model;
        if (!out.empty()) cfg.output_dir = out;
        const std::string tag = fs::path(file).stem().string();
        const RunOutcome r = run_scenario(cfg, tag + "_", !out.empty());
        const Verdict& v = r.verdict;
        all_ok = all_ok && v.outcome == Outcome::Success;
        fmt::print("{:<24} {:<8} {:>8.2f} {:>10.4f} {:>12.4e} {:>8}\n", tag, outcome_name(v.outcome), v.time,
                   v.min_distance, v.min_delta_e, v.replans);
      }
      return all_ok ? 0 : kUnsafe;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (std::string(e.what()) == "training diverged") return kDiverged;
    return 1;
  } catch (const std::invalid_argument& e) {
    // bad scenario or parameters
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
