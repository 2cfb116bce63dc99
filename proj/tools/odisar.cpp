// odisar: generate data, train, calibrate, detect and evaluate from the command line.

#include "odisar/pipeline.hpp"
#include "odisar/suite.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace odisar;

namespace {

// Keys whose values are file paths; relative paths in a config file are taken relative
// to the file's directory.
const std::vector<std::string> kPathKeys = {"out", "checkpoint", "thresholds", "baseline"};
const std::vector<std::string> kPathListKeys = {"train_data", "val_data", "data"};

std::string rebase(const std::string& base, const std::string& p) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().generic_string();
}

struct Flags {
  std::string config;
  std::vector<std::string> sets;  // key=value
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, profile;
  std::optional<double> k;
  std::optional<long> passes, window, horizon, epochs;
  std::vector<std::string> train_data, val_data, data;
  std::optional<std::string> checkpoint, thresholds, baseline;
  bool force_attribution = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "key = value configuration file");
  app->add_option("--seed", f.seed, "top-level seed");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--profile", f.profile, "vessel, robot or custom");
  app->add_option("--k", f.k, "threshold sensitivity");
  app->add_option("--passes", f.passes, "MC dropout passes");
  app->add_option("--window", f.window, "input window w");
  app->add_option("--horizon", f.horizon, "forecast horizon h");
  app->add_option("--set", f.sets, "override any configuration key (key=value)");
}

/// File entries first, then flags on top.
KeyValueConfig build_config(const Flags& f) {
  KeyValueConfig kv;
  if (!f.config.empty()) {
    kv = KeyValueConfig::load(f.config);
    const std::string base = fs::path(f.config).parent_path().generic_string();
    for (const auto& key : kPathKeys) {
      if (kv.has(key)) kv.set(key, rebase(base, *kv.raw(key)));
    }
    for (const auto& key : kPathListKeys) {
      if (!kv.has(key)) continue;
      std::vector<std::string> items;
      for (const auto& p : kv.get_list(key)) items.push_back(rebase(base, p));
      std::string joined;
      for (std::size_t i = 0; i < items.size(); ++i) joined += (i ? "," : "") + items[i];
      kv.set(key, joined);
    }
  }
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got \"" + s + "\"");
    const std::string key(detail::trim(std::string_view(s).substr(0, eq)));
    if (!KeyValueConfig::valid_key(key)) throw ConfigError("--set: invalid key \"" + key + "\"");
    kv.set(key, std::string(detail::trim(std::string_view(s).substr(eq + 1))));
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  };
  if (f.seed) kv.set("seed", std::to_string(*f.seed));
  if (f.out) kv.set("out", *f.out);
  if (f.profile) kv.set("profile", *f.profile);
  if (f.k) kv.set("k", format_double(*f.k));
  if (f.passes) kv.set("passes", std::to_string(*f.passes));
  if (f.window) kv.set("window", std::to_string(*f.window));
  if (f.horizon) kv.set("horizon", std::to_string(*f.horizon));
  if (f.epochs) kv.set("epochs", std::to_string(*f.epochs));
  if (!f.train_data.empty()) kv.set("train_data", join(f.train_data));
  if (!f.val_data.empty()) kv.set("val_data", join(f.val_data));
  if (!f.data.empty()) kv.set("data", join(f.data));
  if (f.checkpoint) kv.set("checkpoint", *f.checkpoint);
  if (f.thresholds) kv.set("thresholds", *f.thresholds);
  if (f.baseline) kv.set("baseline", *f.baseline);
  if (f.force_attribution) kv.set("force_attribution", "true");
  return kv;
}

void reject_unknown(const KeyValueConfig& kv) {
  const auto unused = kv.unused_keys();
  if (!unused.empty()) throw ConfigError("unknown configuration key \"" + unused.front() + "\"");
}

std::string in_dir(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).generic_string();
}

/// Creates the output directory and records the resolved configuration.
void echo(const std::string& out, const std::string& command, const std::string& text) {
  fs::create_directories(out);
  write_text(in_dir(out, command + ".config"), text);
}

std::string or_default(const std::string& value, const std::string& dir, const std::string& file) {
  return value.empty() ? in_dir(dir, file) : value;
}

// --- commands -----------------------------------------------------------------

int cmd_gen_data(const KeyValueConfig& kv) {
  const bool suite = kv.get_bool("suite", false);
  const std::string kind = kv.get_string("kind", "vessel");
  const std::string maneuver = kv.get_string("maneuver", "zigzag");
  const std::string variant = kv.get_string("variant", "20");
  const std::string disturbance = kv.get_string("disturbance", "none");
  const double duration = kv.get_double("duration_s", 1200.0);
  const long waypoints = kv.get_long("waypoints", 5);
  const double noise_position = kv.get_double("noise_position", 0.12);
  const double noise_orientation = kv.get_double("noise_orientation", 0.08);
  const double noise_duration = kv.get_double("noise_duration_s", 80.0);
  const bool noisy = kv.get_bool("inject_noise", true);
  const std::string name = kv.get_string("name", "");
  const auto run = resolve_run_config(kv);
  reject_unknown(kv);

  std::ostringstream cfg;
  cfg << run.echo() << "suite = " << (suite ? "true" : "false") << '\n'
      << "kind = " << kind << '\n'
      << "maneuver = " << maneuver << '\n'
      << "variant = " << variant << '\n'
      << "disturbance = " << disturbance << '\n'
      << "duration_s = " << format_double(duration) << '\n'
      << "waypoints = " << waypoints << '\n'
      << "noise_position = " << format_double(noise_position) << '\n'
      << "noise_orientation = " << format_double(noise_orientation) << '\n'
      << "noise_duration_s = " << format_double(noise_duration) << '\n'
      << "inject_noise = " << (noisy ? "true" : "false") << '\n'
      << "name = " << name << '\n';
  echo(run.out, "gen-data", cfg.str());

  if (suite) {
    SuiteOptions o;
    o.seed = run.seed;
    o.passes = run.passes;
    o.k = run.k;
    write_suite(run.out, o);
    std::cout << "wrote experiment suite to " << run.out << '\n';
    return 0;
  }
  LabeledTrace trace;
  if (kind == "vessel") {
    VesselScenario sc;
    sc.maneuver = parse_maneuver(maneuver);
    sc.variant = variant;
    sc.disturbance = parse_disturbance(disturbance);
    sc.duration_s = duration;
    sc.seed = run.data_seed();
    trace = gen_vessel(sc);
  } else if (kind == "robot") {
    if (waypoints < 2) throw ConfigError("waypoints must be >= 2");
    RobotScenario sc = suite_robot_scenario(run.data_seed(), waypoints, noisy);
    sc.noise_position = noise_position;
    sc.noise_orientation = noise_orientation;
    sc.noise_duration_s = noise_duration;
    trace = gen_robot(sc);
  } else {
    throw ConfigError("kind must be vessel or robot, got \"" + kind + "\"");
  }
  std::string file = name;
  if (file.empty()) {
    file = trace.scenario;
    for (auto& c : file) if (c == '/') c = '_';
  }
  const std::string path = in_dir(run.out, file + ".csv");
  export_trace(trace, path);
  std::cout << "wrote " << path << " (" << trace.series.steps() << " steps)\n";
  return 0;
}

int cmd_train(const KeyValueConfig& kv) {
  const auto run = resolve_run_config(kv);
  reject_unknown(kv);
  echo(run.out, "train", run.echo());
  if (run.train_data.empty()) throw ConfigError("train needs train_data");
  const auto train_traces = read_traces(run.train_data, run.schema, run.sample_rate_hz);
  const auto val_traces = read_traces(run.val_data, run.schema, run.sample_rate_hz);
  const auto trained = train_from_traces(run, train_traces, val_traces, [](const EpochRecord& r) {
    if (r.epoch == 1 || r.epoch % 10 == 0) {
      std::printf("epoch %4ld  train %.6f  val %.6f\n", r.epoch, r.train.total, r.val.total);
      std::fflush(stdout);
    }
  });
  save_checkpoint(in_dir(run.out, "checkpoint.json"), trained.model, trained.normalizer, run.schema);
  write_text(in_dir(run.out, "history.csv"), history_csv(trained.history));
  std::cout << "trained " << trained.history.size() << " epochs on " << trained.train_windows
            << " windows (" << trained.val_windows << " validation); checkpoint in " << run.out
            << '\n';
  return 0;
}

int cmd_calibrate(const KeyValueConfig& kv) {
  const auto run = resolve_run_config(kv);
  reject_unknown(kv);
  echo(run.out, "calibrate", run.echo());
  if (run.val_data.empty()) throw ConfigError("calibrate needs val_data");
  const auto ck = load_checkpoint(or_default(run.checkpoint, run.out, "checkpoint.json"));
  const auto val = read_traces(run.val_data, ck.schema, run.sample_rate_hz);
  const auto cal = calibrate_from_traces(ck.model, ck.normalizer, val, run.k, run.passes, run.mc_seed());
  save_thresholds(or_default(run.thresholds, run.out, "thresholds.json"), cal.odisar.thresholds);
  write_text(or_default(run.baseline, run.out, "baseline.json"), to_json(cal.baseline).dump(2) + "\n");
  std::ostringstream scores;
  scores << "window,recon_error,variance_score,baseline_rmse\n";
  for (std::size_t i = 0; i < cal.odisar.scores.size(); ++i) {
    scores << i << ',' << format_double(cal.odisar.scores[i].recon_error) << ','
           << format_double(cal.odisar.scores[i].variance_score) << ','
           << format_double(cal.baseline_scores[i]) << '\n';
  }
  write_text(in_dir(run.out, "calibration_scores.csv"), scores.str());
  const auto& t = cal.odisar.thresholds;
  std::printf("tau_recon %.6g (mu %.6g, sigma %.6g)  tau_var %.6g (mu %.6g, sigma %.6g)  k %g\n",
              t.tau_recon, t.mu_recon, t.sigma_recon, t.tau_var, t.mu_var, t.sigma_var, t.k);
  return 0;
}

int cmd_detect(const KeyValueConfig& kv) {
  const auto run = resolve_run_config(kv);
  reject_unknown(kv);
  echo(run.out, "detect", run.echo());
  if (run.data.size() != 1) throw ConfigError("detect needs exactly one data trace");
  const auto ck = load_checkpoint(or_default(run.checkpoint, run.out, "checkpoint.json"));
  const auto thr = load_thresholds(or_default(run.thresholds, run.out, "thresholds.json"));
  const auto trace = read_trace(run.data.front(), ck.schema, run.sample_rate_hz);
  const auto series = ck.normalizer.normalize(trace.series);
  const auto windows =
      score_series(ck.model, thr, series, ck.config.w, ck.config.h, run.passes, run.mc_seed());
  const auto records = build_records(windows, ck.schema, run.force_attribution);
  emit_json(records, in_dir(run.out, "detections.json"));
  std::vector<WindowVerdict> verdicts;
  long ood = 0;
  for (const auto& w : windows) {
    verdicts.push_back(w.verdict);
    ood += w.verdict.is_ood ? 1 : 0;
  }
  save_score_csv(in_dir(run.out, "scores.csv"), verdicts);
  std::cout << verdicts.size() << " windows, " << ood << " flagged OOD; records in "
            << in_dir(run.out, "detections.json") << '\n';
  return 0;
}

int cmd_evaluate(const KeyValueConfig& kv, const std::string& config_path) {
  GridSpec grid;
  const std::string base = fs::path(config_path).parent_path().generic_string();
  grid.cells = parse_cells(kv, base);
  const auto run = resolve_run_config(kv);
  reject_unknown(kv);
  grid.passes = run.passes;
  grid.seed = run.mc_seed();
  grid.ranking = run.ranking == "combined" ? RankingScore::Combined : RankingScore::Recon;
  std::ostringstream cfg;
  cfg << run.echo();
  for (const auto& c : grid.cells) {
    cfg << "cell." << c.name << ".checkpoint = " << c.checkpoint << '\n'
        << "cell." << c.name << ".thresholds = " << c.thresholds << '\n'
        << "cell." << c.name << ".baseline = " << c.baseline << '\n'
        << "cell." << c.name << ".traces = " << detail::join(c.traces) << '\n';
  }
  echo(run.out, "evaluate", cfg.str());
  const auto results = run_experiment(grid, run.out);
  std::cout << report_text(results);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"odisar: transformer digital-twin OOD detection"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic trace or the full experiment suite");
  add_common(gen, f);
  bool suite = false;
  gen->add_flag("--suite", suite, "write every dataset and config of the experiment grid");

  auto* tr = app.add_subcommand("train", "train a model and write checkpoint + loss history");
  add_common(tr, f);
  tr->add_option("--train-data", f.train_data, "training traces (CSV)");
  tr->add_option("--val-data", f.val_data, "validation traces (CSV)");
  tr->add_option("--epochs", f.epochs, "training epochs");

  auto* cal = app.add_subcommand("calibrate", "fit 3-sigma thresholds on validation traces");
  add_common(cal, f);
  cal->add_option("--checkpoint", f.checkpoint, "checkpoint file");
  cal->add_option("--val-data", f.val_data, "validation traces (CSV)");

  auto* det = app.add_subcommand("detect", "score a trace and write detection records");
  add_common(det, f);
  det->add_option("--checkpoint", f.checkpoint, "checkpoint file");
  det->add_option("--thresholds", f.thresholds, "thresholds file");
  det->add_option("--data", f.data, "trace to score (CSV)");
  det->add_flag("--force-attribution", f.force_attribution, "attach attribution to every window");

  auto* ev = app.add_subcommand("evaluate", "run the evaluation grid and write report + ROC CSVs");
  add_common(ev, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    auto kv = build_config(f);
    if (suite) kv.set("suite", "true");
    if (*gen) return cmd_gen_data(kv);
    if (*tr) return cmd_train(kv);
    if (*cal) return cmd_calibrate(kv);
    if (*det) return cmd_detect(kv);
    if (*ev) return cmd_evaluate(kv, f.config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
