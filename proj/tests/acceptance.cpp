// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails.
//
//   acceptance <odisar-cli> <work-dir>

#include "gradient_oracle.hpp"
#include "metric_oracles.hpp"

#include "odisar/explain.hpp"
#include "odisar/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace odisar;
using namespace odisar::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::map<int, Outcome> g_results;

const std::string kVesselModel =
    "--checkpoint models/vessel/checkpoint.json --thresholds models/vessel/thresholds.json";

void report(int id, const char* title, const Outcome& o) {
  g_results[id] = o;
  std::printf("criterion %d [%s]: %s  %s\n", id, title, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Runs the CLI inside `dir` with output appended to dir/cli.log.
bool run_cli(const std::string& cli, const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + cli + "' " + args + " >> cli.log 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) std::fprintf(stderr, "command failed (%d): %s\n", rc, cmd.c_str());
  return rc == 0;
}

std::vector<std::map<std::string, std::string>> read_csv_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  for (auto c : detail::split_commas(line)) header.emplace_back(c);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_commas(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = std::string(cells[i]);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 1. Metric oracles on randomized labeled-score sets.
Outcome metric_oracles() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_set(rng);
    worst = std::max(worst, std::abs(auroc(s) - auroc_oracle(s)));
    worst = std::max(worst, std::abs(tnr_at_tpr95(s) - tnr_oracle(s)));
    std::vector<bool> pred, truth;
    for (const auto& x : s) {
      pred.push_back(x.score > 2.5);
      truth.push_back(x.is_ood);
    }
    const auto f1 = f1_per_class(pred, truth);
    worst = std::max(worst, std::abs(f1.f1_ood - f1_oracle(pred, truth, true)));
    worst = std::max(worst, std::abs(f1.f1_ind - f1_oracle(pred, truth, false)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 10.0,
          "max |diff| " + fmt("%.3g", worst) + " over 100 sets, " + fmt("%.2f", secs) + " s"};
}

// 2. Finite-difference gradient check on the tiny model.
Outcome gradient() {
  const auto t0 = Clock::now();
  Rng rng(7);
  const auto cfg = tiny_config();
  const DTModel model(cfg, 3);
  const Matrix x = random_matrix(cfg.w, cfg.d_features, rng);
  const Matrix y = random_matrix(cfg.h, cfg.d_features, rng);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, e] : gradient_check(model, x, y)) {
    if (e.relative > worst) {
      worst = e.relative;
      worst_name = name;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 30.0, "max relative error " + fmt("%.3g", worst) + " (" +
                                            worst_name + "), " + fmt("%.2f", secs) + " s"};
}

// 3. MC variance against a two-pass computation; zero dropout gives zero variance.
Outcome mc_variance() {
  Rng rng(11);
  auto cfg = tiny_config();
  cfg.dropout = 0.2;
  const DTModel noisy(cfg, 5);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(cfg.w, cfg.d_features, rng);
    const auto ens = mc_forecast(noisy, x, 30, static_cast<std::uint64_t>(trial));
    Matrix mean = Matrix::Zero(cfg.h, cfg.d_features);
    for (const auto& p : ens.passes) mean += p;
    mean /= static_cast<double>(ens.passes.size());
    Matrix var = Matrix::Zero(cfg.h, cfg.d_features);
    for (const auto& p : ens.passes) var += (p - mean).cwiseAbs2();
    var /= static_cast<double>(ens.passes.size());
    worst = std::max(worst, (ens.variance - var).cwiseAbs().maxCoeff());
  }
  cfg.dropout = 0.0;
  const DTModel still(cfg, 5);
  const auto ens = mc_forecast(still, random_matrix(cfg.w, cfg.d_features, rng), 30, 1);
  const double zero = ens.variance.cwiseAbs().maxCoeff();
  return {worst <= 1e-12 && zero == 0.0,
          "max |diff| " + fmt("%.3g", worst) + ", dropout 0 variance " + fmt("%.3g", zero)};
}

// 4. Per-feature RMSE against the window reconstruction error. The window error sums
// squared residuals over features and averages over steps, so it equals the sum over
// features of the squared RMSE (equivalently D times their mean).
Outcome attribution_identity() {
  Rng rng(99);
  double worst = 0.0, mean_form_gap = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const long h = 1 + static_cast<long>(rng.below(60));
    const long d = 1 + static_cast<long>(rng.below(8));
    const Matrix f = random_matrix(h, d, rng);
    const Matrix r = random_matrix(h, d, rng);
    std::vector<std::string> names;
    for (long j = 0; j < d; ++j) names.push_back("s" + std::to_string(j));
    const auto a = attribute(f, r, FeatureSchema(names), static_cast<std::size_t>(d));
    double sum_sq = 0.0;
    for (const auto& [name, v] : a.per_feature) sum_sq += v * v;
    const double mean_sq = sum_sq / static_cast<double>(d);
    ForecastEnsemble ens;
    ens.forecast = f;
    ens.recon = r;
    ens.variance = Matrix::Zero(h, d);
    const double window = window_scores(ens).recon_error;
    worst = std::max(worst, std::abs(mean_sq * static_cast<double>(d) - window));
    mean_form_gap = std::max(mean_form_gap, std::abs(mean_sq - window));
  }
  return {worst <= 1e-9, "max |sum_f RMSE_f^2 - recon_error| " + fmt("%.3g", worst) +
                             " over 1000 pairs (mean_f form differs by up to " +
                             fmt("%.3g", mean_form_gap) + ", a factor of D)"};
}

// 5. Calibration sanity on the trained vessel model.
Outcome calibration(const fs::path& model_dir) {
  const auto rows = read_csv_rows(model_dir / "calibration_scores.csv");
  const auto t = load_thresholds((model_dir / "thresholds.json").string());
  std::vector<double> recon, var;
  std::size_t above = 0;
  for (const auto& r : rows) {
    recon.push_back(std::stod(r.at("recon_error")));
    var.push_back(std::stod(r.at("variance_score")));
    if (recon.back() > t.tau_recon) ++above;
  }
  const double frac = static_cast<double>(above) / static_cast<double>(rows.size());
  bool monotone = true;
  double prev_r = -1.0, prev_v = -1.0;
  for (double k = 0.25; k <= 6.0; k += 0.25) {
    const auto th = thresholds_from_scores(recon, var, k);
    monotone = monotone && th.tau_recon >= prev_r && th.tau_var >= prev_v;
    prev_r = th.tau_recon;
    prev_v = th.tau_var;
  }
  return {frac <= 0.05 && monotone && t.k == 3.0,
          fmt("%.4f", frac) + " of " + std::to_string(rows.size()) +
              " calibration windows above tau_recon; tau non-decreasing in k: " +
              (monotone ? "yes" : "no")};
}

// 6. Validation loss of the vessel model.
Outcome convergence(const fs::path& model_dir) {
  const auto rows = read_csv_rows(model_dir / "history.csv");
  const double first = std::stod(rows.front().at("val_total"));
  const double last = std::stod(rows.back().at("val_total"));
  return {last <= 0.5 * first, "val total " + fmt("%.4f", first) + " at epoch 1, " +
                                   fmt("%.4f", last) + " at epoch " + rows.back().at("epoch") +
                                   " (ratio " + fmt("%.3f", last / first) + ")"};
}

// 7. Grid report: AUROC >= 0.90 and OOD F1 at least the baseline's in every cell.
Outcome detection(const fs::path& report) {
  const auto rows = read_csv_rows(report);
  std::ostringstream detail;
  bool all = true;
  int failing = 0;
  for (const auto& r : rows) {
    const double au = std::stod(r.at("odisar_auroc"));
    const double f1 = std::stod(r.at("odisar_f1_ood"));
    const double bf1 = std::stod(r.at("baseline_f1_ood"));
    const bool ok = au >= 0.90 && f1 >= bf1;
    all = all && ok;
    failing += ok ? 0 : 1;
    detail << "\n    " << r.at("cell") << ": AUROC " << fmt("%.4f", au) << (au >= 0.90 ? "" : " (<0.90)")
           << ", OOD F1 " << fmt("%.4f", f1) << " vs baseline " << fmt("%.4f", bf1)
           << (f1 >= bf1 ? "" : " (below)") << (ok ? "  ok" : "  FAIL");
  }
  return {all && !rows.empty(), std::to_string(rows.size() - static_cast<std::size_t>(failing)) + "/" +
                                    std::to_string(rows.size()) + " cells pass" + detail.str()};
}

// 8. Emitted records validate; the reference record round-trips.
Outcome json_conformance(const fs::path& detections) {
  const char* example = R"({
  "sequence_index": 3,
  "start_time_step": 420,
  "end_time_step": 479,
  "is_OOD": true,
  "reconstruction_error": 0.17066404223442078,
  "uncertainty_variance": 0.018417222425341606,
  "recon_exceeds_threshold": true,
  "uncertainty_exceeds_threshold": false,
  "category": "red",
  "state_attribution": {
    "Surge Speed": 0.26233699917793274,
    "Sway Speed": 0.21531985700130463,
    "Yaw Rate": 0.13875150680541992
  }
})";
  const auto ex = nlohmann::ordered_json::parse(example);
  const bool round_trip = to_json(record_from_json(ex)) == ex && validate_record(ex).empty();
  std::ifstream in(detections);
  const auto arr = nlohmann::ordered_json::parse(in);
  std::size_t invalid = 0, with_attr = 0;
  for (const auto& r : arr) {
    if (!validate_record(r).empty()) ++invalid;
    if (r.contains("state_attribution")) ++with_attr;
  }
  return {round_trip && invalid == 0 && !arr.empty(),
          std::to_string(arr.size()) + " emitted records (" + std::to_string(with_attr) +
              " with attribution), " + std::to_string(invalid) +
              " invalid; example round-trip: " + (round_trip ? "identical" : "changed")};
}

// 9. Two scripted runs of the whole pipeline in separate directories compare byte for byte.
bool scripted_pipeline(const std::string& cli, const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string small = " --set epochs=3 --passes 5";
  return run_cli(cli, dir, "gen-data --suite --out .") &&
         run_cli(cli, dir, "train --config vessel.conf" + small) &&
         run_cli(cli, dir, "calibrate --config vessel.conf --passes 5") &&
         run_cli(cli, dir, "train --config robot.conf" + small) &&
         run_cli(cli, dir, "calibrate --config robot.conf --passes 5") &&
         run_cli(cli, dir,
                 "detect --config vessel.conf --passes 5 " + kVesselModel +
                     " --data vessel/test/turning_20_case2.csv --out detect") &&
         run_cli(cli, dir, "evaluate --config grid.conf --passes 5");
}

Outcome determinism(const std::string& cli, const fs::path& work) {
  const fs::path a = work / "determinism_a", b = work / "determinism_b";
  if (!scripted_pipeline(cli, a) || !scripted_pipeline(cli, b)) return {false, "pipeline run failed"};
  std::size_t files = 0, differ = 0;
  std::string first_diff;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || e.path().filename() == "cli.log") continue;
    const auto rel = fs::relative(e.path(), a);
    ++files;
    if (!fs::exists(b / rel) || read_file(e.path()) != read_file(b / rel)) {
      ++differ;
      if (first_diff.empty()) first_diff = rel.generic_string();
    }
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file() && e.path().filename() != "cli.log") ++files_b;
  }
  const bool same_logs = read_file(a / "cli.log") == read_file(b / "cli.log");
  return {differ == 0 && files == files_b && files > 0 && same_logs,
          std::to_string(files) + " output files compared, " + std::to_string(differ) + " differ" +
              (first_diff.empty() ? "" : " (first: " + first_diff + ")") +
              (same_logs ? "" : "; console output differs")};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: acceptance <odisar-cli> <work-dir>\n");
    return 2;
  }
  const std::string cli = fs::absolute(argv[1]).string();
  const fs::path work = fs::absolute(argv[2]);
  fs::create_directories(work);

  report(1, "metric oracles", metric_oracles());
  report(2, "gradient check", gradient());
  report(3, "MC variance", mc_variance());
  report(4, "attribution vs reconstruction error", attribution_identity());

  // Full-size suite: trains the vessel and robot models, calibrates them and runs the grid.
  const fs::path suite = work / "suite";
  fs::remove_all(suite);
  fs::create_directories(suite);
  const auto t0 = Clock::now();
  const bool vessel_ok = run_cli(cli, suite, "gen-data --suite --out .") &&
                         run_cli(cli, suite, "train --config vessel.conf") &&
                         run_cli(cli, suite, "calibrate --config vessel.conf");
  std::printf("    (vessel model trained and calibrated in %.0f s)\n", seconds_since(t0));
  if (vessel_ok) {
    report(5, "calibration sanity", calibration(suite / "models" / "vessel"));
    report(6, "training convergence", convergence(suite / "models" / "vessel"));
  } else {
    report(5, "calibration sanity", {false, "vessel pipeline failed; see " + (suite / "cli.log").string()});
    report(6, "training convergence", {false, "vessel pipeline failed"});
  }
  const auto t1 = Clock::now();
  const bool grid_ok = vessel_ok && run_cli(cli, suite, "train --config robot.conf") &&
                       run_cli(cli, suite, "calibrate --config robot.conf") &&
                       run_cli(cli, suite, "evaluate --config grid.conf");
  std::printf("    (robot model and grid evaluation in %.0f s)\n", seconds_since(t1));
  report(7, "end-to-end detection",
         grid_ok ? detection(suite / "report" / "report.csv") : Outcome{false, "grid run failed"});

  const bool detect_ok =
      vessel_ok && run_cli(cli, suite, "detect --config vessel.conf " + kVesselModel +
                                       " --data vessel/test/turning_20_case1.csv --out detect");
  report(8, "JSON conformance",
         detect_ok ? json_conformance(suite / "detect" / "detections.json") : Outcome{false, "detect failed"});

  report(9, "determinism", determinism(cli, work));

  int failed = 0;
  for (const auto& [id, o] : g_results) failed += o.pass ? 0 : 1;
  std::printf("%d/%zu criteria pass\n", static_cast<int>(g_results.size()) - failed, g_results.size());
  return failed == 0 ? 0 : 1;
}
