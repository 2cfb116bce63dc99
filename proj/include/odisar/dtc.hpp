// Digital twin capability: Monte Carlo dropout ensembles, per-window scores,
// 3-sigma threshold calibration and the four-quadrant verdict.
//
// The reconstruction error of a window comes from one dropout-free pass; the
// MC passes only feed the variance score. Each window's passes draw from a
// private stream derived from (seed, window index, pass index), so the result
// does not depend on evaluation order.

#ifndef ODISAR_DTC_HPP
#define ODISAR_DTC_HPP

#include "odisar/core.hpp"
#include "odisar/dtm.hpp"
#include "odisar/rng.hpp"
#include "odisar/timeseries.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace odisar {

struct ForecastEnsemble {
  std::vector<Matrix> passes;  // N stochastic forecasts, each h x D
  Matrix mean;                 // h x D
  Matrix variance;             // h x D, population variance over the N passes
  Matrix forecast;             // dropout-free forecast
  Matrix recon;                // dropout-free reconstruction
};

/// Per-element mean and population variance (divide by N) of the passes, one-pass
/// Welford accumulation.
inline void summarize_passes(ForecastEnsemble& ens) {
  if (ens.passes.size() < 2) throw ConfigError("variance needs at least 2 passes");
  const Matrix& first = ens.passes.front();
  Matrix mean = Matrix::Zero(first.rows(), first.cols());
  Matrix m2 = Matrix::Zero(first.rows(), first.cols());
  double n = 0.0;
  for (const auto& p : ens.passes) {
    require_same_shape(first, p, "MC pass");
    n += 1.0;
    const Matrix delta = p - mean;
    mean += delta / n;
    m2 += delta.cwiseProduct(p - mean);
  }
  ens.mean = std::move(mean);
  ens.variance = (m2 / n).cwiseMax(0.0);
}

/// N dropout-enabled passes plus one dropout-free pass. Pass n draws from derive_seed(seed, n).
inline ForecastEnsemble mc_forecast(const DTModel& model, const Matrix& x, long n_passes,
                                    std::uint64_t seed) {
  if (n_passes < 2) {
    throw ConfigError("MC dropout needs at least 2 passes, got " + std::to_string(n_passes));
  }
  ForecastEnsemble ens;
  const auto det = model.forward(x, nn::Mode::Eval);
  ens.forecast = det.forecast;
  ens.recon = det.recon;
  ens.passes.reserve(static_cast<std::size_t>(n_passes));
  for (long n = 0; n < n_passes; ++n) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(n)}));
    ens.passes.push_back(model.forward(x, nn::Mode::MC, &rng).forecast);
  }
  summarize_passes(ens);
  return ens;
}

struct WindowScores {
  double recon_error = 0.0;
  double variance_score = 0.0;
};

/// Reconstruction error of the dropout-free pass and the mean MC variance over all h x D
/// elements.
inline WindowScores window_scores(const ForecastEnsemble& ens) {
  WindowScores s;
  s.recon_error = loss_recon(ens.recon, ens.forecast);
  if (ens.variance.size() == 0) throw ConfigError("ensemble has no variance");
  s.variance_score = ens.variance.mean();
  return s;
}

struct Thresholds {
  double mu_recon = 0.0;
  double sigma_recon = 0.0;
  double tau_recon = 0.0;
  double mu_var = 0.0;
  double sigma_var = 0.0;
  double tau_var = 0.0;
  double k = 3.0;
};

inline double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (ddof = 1).
inline double sample_stddev(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// tau = mu + k * sigma for each score, from in-distribution validation scores.
inline Thresholds thresholds_from_scores(const std::vector<double>& recon,
                                         const std::vector<double>& variance, double k) {
  if (!(k > 0.0)) throw ConfigError("sensitivity k must be positive");
  if (recon.size() < 2 || variance.size() != recon.size()) {
    throw ConfigError("calibration needs at least 2 validation windows, got " +
                      std::to_string(recon.size()));
  }
  Thresholds t;
  t.k = k;
  t.mu_recon = sample_mean(recon);
  t.sigma_recon = sample_stddev(recon, t.mu_recon);
  t.tau_recon = t.mu_recon + k * t.sigma_recon;
  t.mu_var = sample_mean(variance);
  t.sigma_var = sample_stddev(variance, t.mu_var);
  t.tau_var = t.mu_var + k * t.sigma_var;
  return t;
}

struct CalibrationResult {
  Thresholds thresholds;
  std::vector<WindowScores> scores;  // one per validation window
};

inline CalibrationResult calibrate_with_scores(const DTModel& model,
                                               const std::vector<WindowPair>& validation,
                                               double k, long n_passes, std::uint64_t seed) {
  if (validation.size() < 2) {
    throw ConfigError("calibration needs at least 2 validation windows, got " +
                      std::to_string(validation.size()));
  }
  CalibrationResult r;
  std::vector<double> recon, var;
  for (std::size_t i = 0; i < validation.size(); ++i) {
    const auto ens = mc_forecast(model, validation[i].input, n_passes,
                                 derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    const auto s = window_scores(ens);
    r.scores.push_back(s);
    recon.push_back(s.recon_error);
    var.push_back(s.variance_score);
  }
  r.thresholds = thresholds_from_scores(recon, var, k);
  return r;
}

inline Thresholds calibrate(const DTModel& model, const std::vector<WindowPair>& validation,
                            double k = 3.0, long n_passes = 30, std::uint64_t seed = 0) {
  return calibrate_with_scores(model, validation, k, n_passes, seed).thresholds;
}

inline nlohmann::ordered_json to_json(const Thresholds& t) {
  nlohmann::ordered_json j;
  j["mu_recon"] = t.mu_recon;
  j["sigma_recon"] = t.sigma_recon;
  j["tau_recon"] = t.tau_recon;
  j["mu_var"] = t.mu_var;
  j["sigma_var"] = t.sigma_var;
  j["tau_var"] = t.tau_var;
  j["k"] = t.k;
  return j;
}

inline Thresholds thresholds_from_json(const nlohmann::json& j) {
  Thresholds t;
  try {
    t.mu_recon = j.at("mu_recon").get<double>();
    t.sigma_recon = j.at("sigma_recon").get<double>();
    t.tau_recon = j.at("tau_recon").get<double>();
    t.mu_var = j.at("mu_var").get<double>();
    t.sigma_var = j.at("sigma_var").get<double>();
    t.tau_var = j.at("tau_var").get<double>();
    t.k = j.at("k").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("thresholds: ") + e.what());
  }
  if (t.sigma_recon < 0.0 || t.sigma_var < 0.0) throw ParseError("thresholds: negative sigma");
  return t;
}

inline void save_thresholds(const std::string& path, const Thresholds& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << to_json(t).dump(2) << '\n';
}

inline Thresholds load_thresholds(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  try {
    return thresholds_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

enum class Category { IndConfident, IndUncertain, OodUncertain, OodConfident };

inline std::string to_string(Category c) {
  switch (c) {
    case Category::IndConfident: return "IND_Confident";
    case Category::IndUncertain: return "IND_Uncertain";
    case Category::OodUncertain: return "OOD_Uncertain";
    case Category::OodConfident: return "OOD_Confident";
  }
  return "?";
}

inline Category quadrant(bool recon_exceeds, bool var_exceeds) {
  if (recon_exceeds) return var_exceeds ? Category::OodUncertain : Category::OodConfident;
  return var_exceeds ? Category::IndUncertain : Category::IndConfident;
}

struct WindowVerdict {
  long sequence_index = 0;
  long start_time_step = 0;  // first forecast step
  long end_time_step = 0;    // last forecast step
  double recon_error = 0.0;
  double variance_score = 0.0;
  bool recon_exceeds = false;
  bool var_exceeds = false;
  bool is_ood = false;
  Category category = Category::IndConfident;
};

/// Strict comparison: a score equal to its threshold does not exceed it.
inline WindowVerdict classify(const WindowScores& s, const Thresholds& t) {
  WindowVerdict v;
  v.recon_error = s.recon_error;
  v.variance_score = s.variance_score;
  v.recon_exceeds = s.recon_error > t.tau_recon;
  v.var_exceeds = s.variance_score > t.tau_var;
  v.is_ood = v.recon_exceeds;
  v.category = quadrant(v.recon_exceeds, v.var_exceeds);
  return v;
}

/// Scalar used to rank windows for ROC analysis.
enum class RankingScore {
  Recon,     // reconstruction error
  Combined,  // max(recon / tau_recon, variance / tau_var)
};

inline double ranking_score(const WindowVerdict& v, const Thresholds& t, RankingScore kind) {
  if (kind == RankingScore::Recon) return v.recon_error;
  auto ratio = [](double score, double tau) {
    if (tau > 0.0) return score / tau;
    return score > 0.0 ? std::numeric_limits<double>::max() : 0.0;
  };
  return std::max(ratio(v.recon_error, t.tau_recon), ratio(v.variance_score, t.tau_var));
}

/// A verdict together with the matrices it was computed from.
struct ScoredWindow {
  WindowVerdict verdict;
  Matrix forecast;  // dropout-free, normalized scale
  Matrix recon;
  Matrix truth;     // observed future
};

/// Scores every window of a (normalized) series at stride h. Window i uses MC seed
/// derive_seed(seed, i).
inline std::vector<ScoredWindow> score_series(const DTModel& model, const Thresholds& thresholds,
                                              const MultivariateSeries& series, long w, long h,
                                              long n_passes, std::uint64_t seed) {
  const auto& cfg = model.config();
  if (w != cfg.w || h != cfg.h) {
    throw ShapeError("model expects w=" + std::to_string(cfg.w) + ", h=" + std::to_string(cfg.h) +
                     "; got w=" + std::to_string(w) + ", h=" + std::to_string(h));
  }
  if (series.features() != cfg.d_features) {
    throw ShapeError("model expects " + std::to_string(cfg.d_features) + " features, series has " +
                     std::to_string(series.features()));
  }
  const auto windows = make_windows(series, w, h, h);
  std::vector<ScoredWindow> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto ens = mc_forecast(model, windows[i].input, n_passes,
                                 derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    ScoredWindow sw;
    sw.verdict = classify(window_scores(ens), thresholds);
    sw.verdict.sequence_index = static_cast<long>(i);
    sw.verdict.start_time_step = windows[i].forecast_start();
    sw.verdict.end_time_step = windows[i].end_step;
    sw.forecast = ens.forecast;
    sw.recon = ens.recon;
    sw.truth = windows[i].target;
    out.push_back(std::move(sw));
  }
  return out;
}

inline std::vector<WindowVerdict> detect_series(const DTModel& model, const Thresholds& thresholds,
                                                const MultivariateSeries& series, long w, long h,
                                                long n_passes, std::uint64_t seed) {
  std::vector<WindowVerdict> out;
  for (auto& sw : score_series(model, thresholds, series, w, h, n_passes, seed)) {
    out.push_back(sw.verdict);
  }
  return out;
}

inline void write_score_csv(std::ostream& out, const std::vector<WindowVerdict>& verdicts) {
  out << "sequence_index,start,end,recon_error,variance_score,category\n";
  for (const auto& v : verdicts) {
    out << v.sequence_index << ',' << v.start_time_step << ',' << v.end_time_step << ','
        << format_double(v.recon_error) << ',' << format_double(v.variance_score) << ','
        << to_string(v.category) << '\n';
  }
}

inline void save_score_csv(const std::string& path, const std::vector<WindowVerdict>& verdicts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  write_score_csv(out, verdicts);
}

}  // namespace odisar

#endif  // ODISAR_DTC_HPP
