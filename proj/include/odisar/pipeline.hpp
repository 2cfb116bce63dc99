// End-to-end steps shared by the command-line tool: trace IO, training from traces,
// calibration, detection and the evaluation grid.

#ifndef ODISAR_PIPELINE_HPP
#define ODISAR_PIPELINE_HPP

#include "odisar/checkpoint.hpp"
#include "odisar/config.hpp"
#include "odisar/dtc.hpp"
#include "odisar/dtm.hpp"
#include "odisar/eval.hpp"
#include "odisar/explain.hpp"
#include "odisar/synth.hpp"
#include "odisar/timeseries.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace odisar {

namespace fs = std::filesystem;

/// Reads a CSV trace; the label sidecar is used when present.
inline LabeledTrace read_trace(const std::string& path, const FeatureSchema& schema,
                               double sample_rate_hz) {
  if (!fs::exists(path)) throw ParseError("missing trace " + path);
  if (fs::exists(label_path_for(path))) return import_trace(path, schema);
  LabeledTrace t;
  t.series = load_csv(path, schema, sample_rate_hz);
  return t;
}

inline std::vector<LabeledTrace> read_traces(const std::vector<std::string>& paths,
                                             const FeatureSchema& schema, double sample_rate_hz) {
  std::vector<LabeledTrace> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(read_trace(p, schema, sample_rate_hz));
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed: " + path);
}

// --- training ---------------------------------------------------------------

struct TrainedModel {
  DTModel model;
  Normalizer normalizer;
  std::vector<EpochRecord> history;
  std::size_t train_windows = 0;
  std::size_t val_windows = 0;
};

/// Trains on `train_traces`. Without `val_traces`, every training trace is split
/// chronologically by window and the normalizer sees only the rows of the training windows.
inline TrainedModel train_from_traces(const RunConfig& cfg, const std::vector<LabeledTrace>& train_traces,
                                      const std::vector<LabeledTrace>& val_traces,
                                      const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (train_traces.empty()) throw ConfigError("no training traces given");
  const long w = cfg.model.w, h = cfg.model.h;
  std::vector<MultivariateSeries> fit_rows;
  std::vector<std::pair<const MultivariateSeries*, std::vector<WindowPair>>> tr_raw, va_raw;

  if (val_traces.empty()) {
    for (const auto& t : train_traces) {
      auto split = split_chrono(make_windows(t.series, w, h, cfg.train_stride), cfg.train_frac,
                                cfg.val_frac);
      if (split.train.empty() || split.val.empty()) {
        throw ConfigError("trace too short to split into training and validation windows");
      }
      MultivariateSeries head = t.series;
      head.values = t.series.values.topRows(split.train.back().end_step + 1);
      fit_rows.push_back(std::move(head));
      tr_raw.emplace_back(&t.series, std::move(split.train));
      va_raw.emplace_back(&t.series, std::move(split.val));
    }
  } else {
    for (const auto& t : train_traces) {
      fit_rows.push_back(t.series);
      tr_raw.emplace_back(&t.series, make_windows(t.series, w, h, cfg.train_stride));
    }
    for (const auto& t : val_traces) va_raw.emplace_back(&t.series, make_windows(t.series, w, h, h));
  }

  TrainedModel out;
  out.normalizer = fit_normalizer(fit_rows);
  auto normalize = [&](const std::vector<std::pair<const MultivariateSeries*, std::vector<WindowPair>>>& raw) {
    std::vector<WindowPair> all;
    for (const auto& [series, windows] : raw) {
      for (auto wp : windows) {
        wp.input = out.normalizer.normalize(wp.input);
        wp.target = out.normalizer.normalize(wp.target);
        all.push_back(std::move(wp));
      }
    }
    return all;
  };
  const auto train_windows = normalize(tr_raw);
  const auto val_windows = normalize(va_raw);
  out.train_windows = train_windows.size();
  out.val_windows = val_windows.size();

  auto result = train(DTModel(cfg.model, cfg.init_seed()), train_windows, val_windows, cfg.train,
                      on_epoch);
  out.model = std::move(result.model);
  out.history = std::move(result.history);
  return out;
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream o;
  o << "epoch,train_forecast,train_recon,train_total,val_forecast,val_recon,val_total\n";
  for (const auto& r : history) {
    o << r.epoch << ',' << format_double(r.train.forecast) << ',' << format_double(r.train.recon)
      << ',' << format_double(r.train.total) << ',' << format_double(r.val.forecast) << ','
      << format_double(r.val.recon) << ',' << format_double(r.val.total) << '\n';
  }
  return o.str();
}

// --- calibration --------------------------------------------------------------

inline nlohmann::ordered_json to_json(const BaselineThreshold& b) {
  nlohmann::ordered_json j;
  j["mu"] = b.mu;
  j["sigma"] = b.sigma;
  j["tau"] = b.tau;
  j["k"] = b.k;
  return j;
}

inline BaselineThreshold load_baseline_threshold(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  try {
    const auto j = nlohmann::json::parse(in);
    return {j.at("mu").get<double>(), j.at("sigma").get<double>(), j.at("tau").get<double>(),
            j.at("k").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

/// Normalized detection windows (stride h) of the given traces.
inline std::vector<WindowPair> detection_windows(const std::vector<LabeledTrace>& traces,
                                                 const Normalizer& norm, long w, long h) {
  std::vector<WindowPair> out;
  for (const auto& t : traces) {
    for (auto& wp : make_windows(norm.normalize(t.series), w, h, h)) out.push_back(std::move(wp));
  }
  return out;
}

struct Calibration {
  CalibrationResult odisar;
  BaselineThreshold baseline;
  std::vector<double> baseline_scores;
};

/// Calibrates both detectors on in-distribution validation traces.
inline Calibration calibrate_from_traces(const DTModel& model, const Normalizer& norm,
                                         const std::vector<LabeledTrace>& val, double k,
                                         long passes, std::uint64_t seed) {
  const auto& mc = model.config();
  const auto windows = detection_windows(val, norm, mc.w, mc.h);
  Calibration c;
  c.odisar = calibrate_with_scores(model, windows, k, passes, seed);
  for (const auto& wp : windows) {
    c.baseline_scores.push_back(
        baseline_rmse(model.forward(wp.input, nn::Mode::Eval).forecast, wp.target));
  }
  c.baseline = calibrate_baseline(c.baseline_scores, k);
  return c;
}

// --- evaluation grid ------------------------------------------------------------

struct CellSpec {
  std::string name;
  std::string checkpoint;
  std::string thresholds;
  std::string baseline;
  std::vector<std::string> traces;
};

struct GridSpec {
  std::vector<CellSpec> cells;
  long passes = 30;
  std::uint64_t seed = 0;
  RankingScore ranking = RankingScore::Recon;
};

/// Collects cells from keys cell.<name>.{checkpoint,thresholds,baseline,traces}, in order
/// of first appearance. Relative paths are taken relative to `base_dir`.
inline std::vector<CellSpec> parse_cells(const KeyValueConfig& kv, const std::string& base_dir = "") {
  std::vector<CellSpec> cells;
  std::map<std::string, std::size_t> index;
  auto rebase = [&](const std::string& p) {
    if (p.empty() || base_dir.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(base_dir) / p).lexically_normal().generic_string();
  };
  for (const auto& key : kv.keys()) {
    if (key.rfind("cell.", 0) != 0) continue;
    const auto dot = key.rfind('.');
    const std::string name = key.substr(5, dot - 5);
    const std::string field = key.substr(dot + 1);
    if (name.empty() || dot <= 5) throw ConfigError("malformed cell key " + key);
    if (!index.count(name)) {
      index[name] = cells.size();
      cells.push_back(CellSpec{name, {}, {}, {}, {}});
    }
    auto& c = cells[index[name]];
    if (field == "checkpoint") {
      c.checkpoint = rebase(kv.get_string(key, ""));
    } else if (field == "thresholds") {
      c.thresholds = rebase(kv.get_string(key, ""));
    } else if (field == "baseline") {
      c.baseline = rebase(kv.get_string(key, ""));
    } else if (field == "traces") {
      for (const auto& t : kv.get_list(key)) c.traces.push_back(rebase(t));
    } else {
      throw ConfigError("unknown cell field " + key);
    }
  }
  return cells;
}

struct CellResult {
  std::string name;
  std::size_t windows = 0;
  std::size_t ood_windows = 0;
  MetricsReport odisar;
  MetricsReport baseline;
  std::vector<RocPoint> roc_odisar;
  std::vector<RocPoint> roc_baseline;
  std::vector<WindowVerdict> verdicts;
};

inline void require_cell_file(const CellSpec& cell, const std::string& what, const std::string& path) {
  if (path.empty()) throw ConfigError("cell " + cell.name + ": no " + what + " given");
  if (!fs::exists(path)) throw ConfigError("cell " + cell.name + ": missing " + what + " " + path);
}

/// Scores every trace of the cell with both detectors and pools the windows.
inline CellResult evaluate_cell(const CellSpec& cell, long passes, std::uint64_t seed,
                                RankingScore ranking = RankingScore::Recon) {
  require_cell_file(cell, "checkpoint", cell.checkpoint);
  require_cell_file(cell, "thresholds", cell.thresholds);
  require_cell_file(cell, "baseline thresholds", cell.baseline);
  if (cell.traces.empty()) throw ConfigError("cell " + cell.name + ": no traces given");
  for (const auto& t : cell.traces) {
    require_cell_file(cell, "dataset", t);
    require_cell_file(cell, "label sidecar", label_path_for(t));
  }

  const auto ck = load_checkpoint(cell.checkpoint);
  const auto thr = load_thresholds(cell.thresholds);
  const auto base = load_baseline_threshold(cell.baseline);
  const long w = ck.config.w, h = ck.config.h;

  CellResult r;
  r.name = cell.name;
  std::vector<LabeledScore> ours, theirs;
  std::vector<bool> ours_pred, theirs_pred;
  for (std::size_t i = 0; i < cell.traces.size(); ++i) {
    const auto trace = import_trace(cell.traces[i], ck.schema);
    const auto series = ck.normalizer.normalize(trace.series);
    const auto window_seed = derive_seed(derive_seed(seed, cell.name), {static_cast<std::uint64_t>(i)});
    const auto verdicts = detect_series(ck.model, thr, series, w, h, passes, window_seed);
    const auto labels = label_windows(verdicts, trace.ood_interval);
    for (std::size_t j = 0; j < verdicts.size(); ++j) {
      const auto& v = verdicts[j];
      ours.push_back({ranking_score(v, thr, ranking), labels[j], v.start_time_step, v.end_time_step});
      ours_pred.push_back(v.is_ood);
      r.verdicts.push_back(v);
    }
    for (const auto& b : baseline_rmse_scores(ck.model, series, trace.ood_interval, w, h)) {
      theirs.push_back(b);
      theirs_pred.push_back(b.score > base.tau);
    }
  }
  r.windows = ours.size();
  for (const auto& s : ours) r.ood_windows += s.is_ood ? 1 : 0;
  r.odisar = compute_metrics(ours, ours_pred);
  r.baseline = compute_metrics(theirs, theirs_pred);
  r.roc_odisar = roc_curve(ours);
  r.roc_baseline = roc_curve(theirs);
  return r;
}

inline std::string report_csv(const std::vector<CellResult>& results) {
  std::ostringstream o;
  o << "cell,windows,ood_windows,odisar_auroc,odisar_tnr_at_tpr95,odisar_f1_ind,odisar_f1_ood,"
       "baseline_auroc,baseline_tnr_at_tpr95,baseline_f1_ind,baseline_f1_ood\n";
  for (const auto& r : results) {
    o << r.name << ',' << r.windows << ',' << r.ood_windows;
    for (const auto* m : {&r.odisar, &r.baseline}) {
      o << ',' << format_double(m->auroc) << ',' << format_double(m->tnr_at_tpr95) << ','
        << format_double(m->f1_ind) << ',' << format_double(m->f1_ood);
    }
    o << '\n';
  }
  return o.str();
}

inline std::string report_text(const std::vector<CellResult>& results) {
  std::ostringstream o;
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %7s | %7s %7s %7s %7s | %7s %7s %7s %7s\n", "cell",
                "windows", "AUROC", "TNR95", "F1 IND", "F1 OOD", "AUROC", "TNR95", "F1 IND",
                "F1 OOD");
  o << std::string(34, ' ') << "ODiSAR" << std::string(29, ' ') << "RMSE baseline\n" << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line,
                  "%-24s %7zu | %7.4f %7.4f %7.4f %7.4f | %7.4f %7.4f %7.4f %7.4f\n",
                  r.name.c_str(), r.windows, r.odisar.auroc, r.odisar.tnr_at_tpr95, r.odisar.f1_ind,
                  r.odisar.f1_ood, r.baseline.auroc, r.baseline.tnr_at_tpr95, r.baseline.f1_ind,
                  r.baseline.f1_ood);
    o << line;
  }
  o << "\nconfusion at the operating threshold (TP FP TN FN)\n";
  for (const auto& r : results) {
    const auto& a = r.odisar.confusion;
    const auto& b = r.baseline.confusion;
    std::snprintf(line, sizeof line, "%-24s ODiSAR %zu %zu %zu %zu | baseline %zu %zu %zu %zu\n",
                  r.name.c_str(), a.tp, a.fp, a.tn, a.fn, b.tp, b.fp, b.tn, b.fn);
    o << line;
  }
  return o.str();
}

inline std::string roc_csv(const std::vector<CellResult>& results) {
  std::ostringstream o;
  o << "cell,detector,threshold,fpr,tpr\n";
  for (const auto& r : results) {
    write_roc_csv(o, r.name, "odisar", r.roc_odisar);
    write_roc_csv(o, r.name, "baseline", r.roc_baseline);
  }
  return o.str();
}

/// Evaluates every cell and writes report.csv, report.txt and roc.csv into `out_dir`.
inline std::vector<CellResult> run_experiment(const GridSpec& grid, const std::string& out_dir) {
  if (grid.cells.empty()) throw ConfigError("evaluation grid has no cells");
  std::vector<CellResult> results;
  for (const auto& cell : grid.cells) {
    results.push_back(evaluate_cell(cell, grid.passes, grid.seed, grid.ranking));
  }
  fs::create_directories(out_dir);
  write_text((fs::path(out_dir) / "report.csv").string(), report_csv(results));
  write_text((fs::path(out_dir) / "report.txt").string(), report_text(results));
  write_text((fs::path(out_dir) / "roc.csv").string(), roc_csv(results));
  return results;
}

}  // namespace odisar

#endif  // ODISAR_PIPELINE_HPP
