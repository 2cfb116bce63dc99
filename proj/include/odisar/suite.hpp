// The synthetic experiment suite: vessel and robot datasets on disk plus ready-to-run
// configuration files for training, calibration and the evaluation grid.
//
// Layout under the output directory:
//   vessel/{train,val}/<maneuver>_<variant>.csv       undisturbed runs
//   vessel/test/<maneuver>_<variant>_<case>.csv       disturbed runs
//   robot/{train,val}/run<i>.csv                      clean waypoint runs
//   robot/test/run<i>.csv                             runs with injected odometry noise
//   vessel.conf, robot.conf, grid.conf

#ifndef ODISAR_SUITE_HPP
#define ODISAR_SUITE_HPP

#include "odisar/rng.hpp"
#include "odisar/synth.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace odisar {

struct SuiteOptions {
  std::uint64_t seed = 0;

  // Vessel model and training settings written to vessel.conf.
  long vessel_window = 10;
  long vessel_horizon = 10;
  long vessel_train_stride = 5;
  long vessel_epochs = 200;
  long vessel_patience = 15;

  // Robot runs and settings written to robot.conf.
  long robot_train_runs = 6;
  long robot_val_runs = 3;
  long robot_test_runs = 4;
  long robot_waypoints = 5;
  long robot_window = 10;
  long robot_horizon = 10;
  long robot_train_stride = 10;
  long robot_epochs = 200;
  long robot_patience = 15;

  long passes = 30;
  double k = 3.0;
};

/// Every (maneuver, variant) pair of the vessel study.
inline std::vector<std::pair<Maneuver, std::string>> vessel_variants() {
  return {{Maneuver::Zigzag, "10"},  {Maneuver::Zigzag, "15"},  {Maneuver::Zigzag, "20"},
          {Maneuver::Zigzag, "30"},  {Maneuver::Turning, "10"}, {Maneuver::Turning, "15"},
          {Maneuver::Turning, "20"}, {Maneuver::Turning, "30"}, {Maneuver::Random, "1"},
          {Maneuver::Random, "low"}, {Maneuver::Random, "high"}};
}

inline RobotScenario suite_robot_scenario(std::uint64_t seed, long waypoints, bool noisy) {
  RobotScenario sc;
  sc.seed = seed;
  sc.waypoints = random_waypoints(derive_seed(seed, "route"), static_cast<std::size_t>(waypoints));
  sc.inject_noise = noisy;
  return sc;
}

namespace detail {

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

inline void write_conf(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace detail

/// Writes the suite. Trace seeds are derived from the suite seed and the file's
/// relative path, so every file is reproducible on its own.
inline void write_suite(const std::string& out_dir, const SuiteOptions& o) {
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  for (const char* d : {"vessel/train", "vessel/val", "vessel/test", "robot/train", "robot/val",
                        "robot/test"}) {
    fs::create_directories(root / d);
  }
  auto seed_for = [&](const std::string& rel) { return derive_seed(o.seed, rel); };

  std::vector<std::string> v_train, v_val;
  std::map<std::string, std::vector<std::string>> v_cells;  // "<maneuver>_<case>" -> traces
  for (const auto& [m, variant] : vessel_variants()) {
    const std::string stem = to_string(m) + "_" + variant;
    for (const char* split : {"train", "val"}) {
      const std::string rel = std::string("vessel/") + split + "/" + stem + ".csv";
      VesselScenario sc;
      sc.maneuver = m;
      sc.variant = variant;
      sc.seed = seed_for(rel);
      export_trace(gen_vessel(sc), (root / rel).string());
      (std::string(split) == "train" ? v_train : v_val).push_back(rel);
    }
    for (auto c : {DisturbanceCase::Case1, DisturbanceCase::Case2, DisturbanceCase::Case3}) {
      const std::string rel = "vessel/test/" + stem + "_" + to_string(c) + ".csv";
      VesselScenario sc;
      sc.maneuver = m;
      sc.variant = variant;
      sc.disturbance = c;
      sc.seed = seed_for(rel);
      export_trace(gen_vessel(sc), (root / rel).string());
      v_cells[to_string(m) + "_" + to_string(c)].push_back(rel);
    }
  }

  std::vector<std::string> r_train, r_val, r_test;
  auto robot_runs = [&](const char* split, long n, bool noisy, std::vector<std::string>& list) {
    for (long i = 0; i < n; ++i) {
      const std::string rel = std::string("robot/") + split + "/run" + std::to_string(i) + ".csv";
      export_trace(gen_robot(suite_robot_scenario(seed_for(rel), o.robot_waypoints, noisy)),
                   (root / rel).string());
      list.push_back(rel);
    }
  };
  robot_runs("train", o.robot_train_runs, false, r_train);
  robot_runs("val", o.robot_val_runs, false, r_val);
  robot_runs("test", o.robot_test_runs, true, r_test);

  auto model_conf = [&](const char* profile, long w, long h, long stride, long epochs,
                        long patience, const std::vector<std::string>& tr,
                        const std::vector<std::string>& va) {
    std::ostringstream s;
    s << "# " << profile << " model: training, calibration and detection settings\n"
      << "profile = " << profile << '\n'
      << "seed = " << o.seed << '\n'
      << "window = " << w << '\n'
      << "horizon = " << h << '\n'
      << "train_stride = " << stride << '\n'
      << "epochs = " << epochs << '\n'
      << "patience = " << patience << '\n'
      << "k = " << format_double(o.k) << '\n'
      << "passes = " << o.passes << '\n'
      << "out = models/" << profile << '\n'
      << "train_data = " << detail::join(tr) << '\n'
      << "val_data = " << detail::join(va) << '\n';
    return s.str();
  };
  detail::write_conf(root / "vessel.conf",
                     model_conf("vessel", o.vessel_window, o.vessel_horizon, o.vessel_train_stride,
                                o.vessel_epochs, o.vessel_patience, v_train, v_val));
  detail::write_conf(root / "robot.conf",
                     model_conf("robot", o.robot_window, o.robot_horizon, o.robot_train_stride,
                                o.robot_epochs, o.robot_patience, r_train, r_val));

  std::ostringstream g;
  g << "# evaluation grid: one cell per (maneuver, disturbance case) plus the robot run set\n"
    << "seed = " << o.seed << '\n'
    << "passes = " << o.passes << '\n'
    << "out = report\n";
  for (auto c : {DisturbanceCase::Case1, DisturbanceCase::Case2, DisturbanceCase::Case3}) {
    for (auto m : {Maneuver::Zigzag, Maneuver::Turning, Maneuver::Random}) {
      const std::string name = to_string(m) + "_" + to_string(c);
      g << "cell." << name << ".checkpoint = models/vessel/checkpoint.json\n"
        << "cell." << name << ".thresholds = models/vessel/thresholds.json\n"
        << "cell." << name << ".baseline = models/vessel/baseline.json\n"
        << "cell." << name << ".traces = " << detail::join(v_cells[name]) << '\n';
    }
  }
  g << "cell.waypoint_noise.checkpoint = models/robot/checkpoint.json\n"
    << "cell.waypoint_noise.thresholds = models/robot/thresholds.json\n"
    << "cell.waypoint_noise.baseline = models/robot/baseline.json\n"
    << "cell.waypoint_noise.traces = " << detail::join(r_test) << '\n';
  detail::write_conf(root / "grid.conf", g.str());
}

}  // namespace odisar

#endif  // ODISAR_SUITE_HPP
