// Window labelling, detection metrics (AUROC, TNR@TPR95, per-class F1), ROC points and
// the forecast-error RMSE baseline.

#ifndef ODISAR_EVAL_HPP
#define ODISAR_EVAL_HPP

#include "odisar/core.hpp"
#include "odisar/dtc.hpp"
#include "odisar/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace odisar {

struct LabeledScore {
  double score = 0.0;
  bool is_ood = false;
  long start_step = 0;
  long end_step = 0;
};

/// OOD truth for the forecast steps [start, end]: at least half of them inside the interval.
inline bool label_window(long start, long end, const std::optional<StepInterval>& interval) {
  if (!interval || end < start) return false;
  const long lo = std::max(start, interval->start);
  const long hi = std::min(end + 1, interval->end);
  const long inside = std::max(0L, hi - lo);
  return 2 * inside >= end - start + 1;
}

inline std::vector<bool> label_windows(const std::vector<WindowVerdict>& verdicts,
                                       const std::optional<StepInterval>& interval) {
  std::vector<bool> out;
  out.reserve(verdicts.size());
  for (const auto& v : verdicts) out.push_back(label_window(v.start_time_step, v.end_time_step, interval));
  return out;
}

namespace detail {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

inline ClassCounts count_classes(const std::vector<LabeledScore>& scores, const char* what) {
  ClassCounts c;
  for (const auto& s : scores) {
    if (!std::isfinite(s.score)) throw ConfigError(std::string(what) + ": non-finite score");
    (s.is_ood ? c.pos : c.neg) += 1;
  }
  if (c.pos == 0 || c.neg == 0) {
    throw ConfigError(std::string(what) + " needs at least one OOD and one IND window");
  }
  return c;
}

/// Scores sorted descending; equal scores form one group.
inline std::vector<LabeledScore> sorted_desc(std::vector<LabeledScore> scores) {
  std::sort(scores.begin(), scores.end(),
            [](const LabeledScore& a, const LabeledScore& b) { return a.score > b.score; });
  return scores;
}

}  // namespace detail

/// Mann-Whitney statistic: P(score_ood > score_ind) with ties counted one half.
inline double auroc(const std::vector<LabeledScore>& scores) {
  const auto c = detail::count_classes(scores, "AUROC");
  const auto sorted = detail::sorted_desc(scores);
  // Walk groups of equal score from the top; every negative in a group beats nothing
  // above it and ties with the positives of its own group.
  double wins = 0.0;
  std::size_t pos_above = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::size_t gp = 0, gn = 0;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      (sorted[j].is_ood ? gp : gn) += 1;
      ++j;
    }
    wins += static_cast<double>(gn) * (static_cast<double>(pos_above) + 0.5 * static_cast<double>(gp));
    pos_above += gp;
    i = j;
  }
  return wins / (static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

struct RocPoint {
  double threshold = 0.0;  // predicted OOD iff score > threshold
  double fpr = 0.0;
  double tpr = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
};

/// One point per candidate threshold: -inf followed by every distinct score, ascending.
inline std::vector<RocPoint> roc_curve(const std::vector<LabeledScore>& scores) {
  const auto c = detail::count_classes(scores, "ROC");
  const auto sorted = detail::sorted_desc(scores);
  std::vector<RocPoint> desc;  // built from the highest threshold down
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double t = sorted[i].score;
    desc.push_back({t, static_cast<double>(fp) / static_cast<double>(c.neg),
                    static_cast<double>(tp) / static_cast<double>(c.pos), tp, fp});
    while (i < sorted.size() && sorted[i].score == t) {
      (sorted[i].is_ood ? tp : fp) += 1;
      ++i;
    }
  }
  desc.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0, tp, fp});
  return {desc.rbegin(), desc.rend()};
}

/// TNR at the threshold whose TPR is closest to 0.95. Ties go to the higher TPR, then
/// to the lower FPR.
inline double tnr_at_tpr95(const std::vector<LabeledScore>& scores) {
  const auto c = detail::count_classes(scores, "TNR@TPR95");
  const auto points = roc_curve(scores);
  // |tp/P - 0.95| compared exactly as |20 tp - 19 P|.
  auto gap = [&](const RocPoint& p) {
    const auto a = static_cast<std::int64_t>(20 * p.tp);
    const auto b = static_cast<std::int64_t>(19 * c.pos);
    return a > b ? a - b : b - a;
  };
  const RocPoint* best = &points.front();
  for (const auto& p : points) {
    const auto g = gap(p), gb = gap(*best);
    if (g < gb || (g == gb && (p.tp > best->tp || (p.tp == best->tp && p.fp < best->fp)))) {
      best = &p;
    }
  }
  return 1.0 - static_cast<double>(best->fp) / static_cast<double>(c.neg);
}

struct Confusion {
  std::size_t tp = 0;  // OOD predicted OOD
  std::size_t fp = 0;  // IND predicted OOD
  std::size_t tn = 0;
  std::size_t fn = 0;
};

struct F1Result {
  double f1_ind = 0.0;
  double f1_ood = 0.0;
  Confusion confusion;
};

/// F1 = 2PR / (P + R), and 0 when P + R = 0 (including undefined P or R).
inline double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double p = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double r = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

inline F1Result f1_per_class(const std::vector<bool>& predicted_ood, const std::vector<bool>& truth_ood) {
  if (predicted_ood.size() != truth_ood.size()) {
    throw ShapeError("F1: " + std::to_string(predicted_ood.size()) + " predictions for " +
                     std::to_string(truth_ood.size()) + " labels");
  }
  F1Result r;
  auto& c = r.confusion;
  for (std::size_t i = 0; i < truth_ood.size(); ++i) {
    if (truth_ood[i]) {
      (predicted_ood[i] ? c.tp : c.fn) += 1;
    } else {
      (predicted_ood[i] ? c.fp : c.tn) += 1;
    }
  }
  r.f1_ood = f1_score(c.tp, c.fp, c.fn);
  r.f1_ind = f1_score(c.tn, c.fn, c.fp);
  return r;
}

struct MetricsReport {
  double auroc = 0.0;
  double tnr_at_tpr95 = 0.0;
  double f1_ind = 0.0;
  double f1_ood = 0.0;
  Confusion confusion;
};

/// Threshold-free metrics from the scores, F1 from the operating-point predictions.
inline MetricsReport compute_metrics(const std::vector<LabeledScore>& scores,
                                     const std::vector<bool>& predicted_ood) {
  std::vector<bool> truth;
  truth.reserve(scores.size());
  for (const auto& s : scores) truth.push_back(s.is_ood);
  MetricsReport m;
  m.auroc = auroc(scores);
  m.tnr_at_tpr95 = tnr_at_tpr95(scores);
  const auto f1 = f1_per_class(predicted_ood, truth);
  m.f1_ind = f1.f1_ind;
  m.f1_ood = f1.f1_ood;
  m.confusion = f1.confusion;
  return m;
}

/// Root mean squared forecast error over all h x D entries.
inline double baseline_rmse(const Matrix& forecast, const Matrix& truth) {
  require_same_shape(forecast, truth, "baseline RMSE");
  return std::sqrt((forecast - truth).squaredNorm() / static_cast<double>(forecast.size()));
}

/// Baseline scores for windows of a normalized series at stride h, using the
/// dropout-free forecast. Windows coincide with those of score_series.
inline std::vector<LabeledScore> baseline_rmse_scores(const DTModel& model,
                                                      const MultivariateSeries& series,
                                                      const std::optional<StepInterval>& interval,
                                                      long w, long h) {
  std::vector<LabeledScore> out;
  for (const auto& wp : make_windows(series, w, h, h)) {
    const auto f = model.forward(wp.input, nn::Mode::Eval).forecast;
    const long start = wp.forecast_start();
    out.push_back({baseline_rmse(f, wp.target), label_window(start, wp.end_step, interval), start,
                   wp.end_step});
  }
  return out;
}

/// mu + k sigma of baseline scores on validation data.
struct BaselineThreshold {
  double mu = 0.0;
  double sigma = 0.0;
  double tau = 0.0;
  double k = 3.0;
};

inline BaselineThreshold calibrate_baseline(const std::vector<double>& validation_scores, double k) {
  if (validation_scores.size() < 2) {
    throw ConfigError("baseline calibration needs at least 2 validation windows");
  }
  BaselineThreshold b;
  b.k = k;
  b.mu = sample_mean(validation_scores);
  b.sigma = sample_stddev(validation_scores, b.mu);
  b.tau = b.mu + k * b.sigma;
  return b;
}

inline void write_roc_csv(std::ostream& out, const std::string& cell, const std::string& detector,
                          const std::vector<RocPoint>& points) {
  for (const auto& p : points) {
    out << cell << ',' << detector << ',' << format_double(p.threshold) << ','
        << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
  }
}

}  // namespace odisar

#endif  // ODISAR_EVAL_HPP
