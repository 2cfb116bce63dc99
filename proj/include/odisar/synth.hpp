// Synthetic scenario generators.
//
// Vessel: first-order Nomoto yaw response to a commanded steering angle, with
// surge/sway lags and a damped roll oscillator coupled to the turn rate.
// Environmental disturbances (current, wind gusts, waves) enter as a forcing
// vector ramped in over 60 s from minute 7 and removed or reduced after minute 14.
//
// Robot: a proportional-heading controller drives a planar base through a list
// of waypoints; zero-mean Gaussian noise is added to the recorded pose for a
// fixed period after the first waypoint is reached.

#ifndef ODISAR_SYNTH_HPP
#define ODISAR_SYNTH_HPP

#include "odisar/core.hpp"
#include "odisar/rng.hpp"
#include "odisar/timeseries.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace odisar {

/// Half-open step interval [start, end).
struct StepInterval {
  long start = 0;
  long end = 0;

  long length() const { return end - start; }
  bool contains(long step) const { return step >= start && step < end; }
  friend bool operator==(const StepInterval&, const StepInterval&) = default;
};

struct LabeledTrace {
  MultivariateSeries series;
  std::optional<StepInterval> ood_interval;
  std::string scenario;  // human-readable scenario tag
};

enum class Maneuver { Zigzag, Turning, Random };
enum class DisturbanceCase { None, Case1, Case2, Case3 };

inline std::string to_string(Maneuver m) {
  switch (m) {
    case Maneuver::Zigzag: return "zigzag";
    case Maneuver::Turning: return "turning";
    case Maneuver::Random: return "random";
  }
  return "?";
}

inline std::string to_string(DisturbanceCase c) {
  switch (c) {
    case DisturbanceCase::None: return "none";
    case DisturbanceCase::Case1: return "case1";
    case DisturbanceCase::Case2: return "case2";
    case DisturbanceCase::Case3: return "case3";
  }
  return "?";
}

inline Maneuver parse_maneuver(const std::string& s) {
  if (s == "zigzag") return Maneuver::Zigzag;
  if (s == "turning") return Maneuver::Turning;
  if (s == "random") return Maneuver::Random;
  throw ConfigError("unknown maneuver \"" + s + "\" (expected zigzag, turning or random)");
}

inline DisturbanceCase parse_disturbance(const std::string& s) {
  if (s == "none") return DisturbanceCase::None;
  if (s == "case1") return DisturbanceCase::Case1;
  if (s == "case2") return DisturbanceCase::Case2;
  if (s == "case3") return DisturbanceCase::Case3;
  throw ConfigError("unknown disturbance case \"" + s + "\" (expected none, case1, case2, case3)");
}

/// Random maneuver intensities "1", "low", "high" map to random-walk step scales.
inline double random_intensity_scale(const std::string& variant) {
  if (variant == "1") return 0.5;
  if (variant == "low") return 1.0;
  if (variant == "high") return 2.0;
  throw ConfigError("random maneuver variant must be one of 1, low, high; got \"" + variant + "\"");
}

struct VesselScenario {
  Maneuver maneuver = Maneuver::Zigzag;
  std::string variant = "20";  // degrees for zigzag/turning; 1|low|high for random
  DisturbanceCase disturbance = DisturbanceCase::None;
  double duration_s = 1200.0;
  double sample_rate_hz = 1.0;
  std::uint64_t seed = 0;

  /// Steering amplitude in degrees for zigzag/turning.
  double angle_deg() const {
    if (maneuver == Maneuver::Random) throw ConfigError("random maneuver has no angle variant");
    if (variant == "10") return 10.0;
    if (variant == "15") return 15.0;
    if (variant == "20") return 20.0;
    if (variant == "30") return 30.0;
    throw ConfigError(to_string(maneuver) + " variant must be one of 10, 15, 20, 30; got \"" +
                      variant + "\"");
  }

  void validate() const {
    if (!(duration_s >= 60.0)) throw ConfigError("vessel scenario duration must be >= 60 s");
    if (!(sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
    if (maneuver == Maneuver::Random) {
      (void)random_intensity_scale(variant);
    } else {
      (void)angle_deg();
    }
  }

  std::string tag() const {
    return "vessel/" + to_string(maneuver) + "/" + variant + "/" + to_string(disturbance);
  }
};

/// Plant and disturbance constants of the vessel generator.
struct VesselPlant {
  double nomoto_gain = 0.08;        // (deg/s) per deg of steering
  double nomoto_time = 12.0;        // s
  double cruise_speed = 7.0;        // m/s
  double surge_time = 10.0;         // s
  double surge_turn_loss = 0.06;    // fraction of speed lost per deg/s of yaw rate
  double sway_time = 6.0;           // s
  double sway_per_yaw = -0.18;      // (m/s) per deg/s
  double roll_period = 12.0;        // s
  double roll_damping = 0.25;
  double roll_per_yaw = 1.5;        // deg per deg/s
  double max_steering = 35.0;       // deg
  double random_step = 1.2;         // deg per sqrt(s), scaled by intensity
  double random_reversion = 0.02;   // 1/s

  // Measurement noise floor (same units as the recorded states).
  double noise_surge = 0.02;
  double noise_sway = 0.01;
  double noise_yaw = 0.02;
  double noise_roll = 0.05;
  double noise_roll_rate = 0.03;

  // Forcing at unit disturbance intensity.
  double current_surge = -1.4;      // m/s
  double current_sway = 0.9;        // m/s
  double wind_yaw = 0.5;            // deg/s of equivalent yaw bias
  double gust_yaw = 0.6;            // deg/s, OU gust amplitude
  double gust_sway = 0.35;          // m/s
  double gust_time = 6.0;           // s, OU correlation time
  double wave_roll = 5.0;           // deg, wave-induced roll amplitude
  double wave_period = 7.0;         // s
  double wave_yaw = 0.25;           // deg/s

  double onset_s = 420.0;           // minute 7
  double ramp_s = 60.0;
  double offset_s = 840.0;          // minute 14
  double case1_gust_residual = 0.35;  // gust level kept after minute 14
  double case2_base = 0.12;         // light wind and waves before and after
};

namespace detail {

inline double ramp(double t, double start, double len) {
  if (t <= start) return 0.0;
  if (t >= start + len) return 1.0;
  return (t - start) / len;
}

struct DisturbanceLevels {
  double current = 0.0;
  double wind_waves = 0.0;
  double gusts = 0.0;
};

/// Forcing intensities at time t. Case 2 starts and ends with light wind and waves
/// but no current.
inline DisturbanceLevels disturbance_levels(DisturbanceCase c, double t, const VesselPlant& p) {
  const double r = ramp(t, p.onset_s, p.ramp_s);
  const bool after = t >= p.offset_s;
  switch (c) {
    case DisturbanceCase::None:
      return {};
    case DisturbanceCase::Case1:
      return after ? DisturbanceLevels{0.0, 0.0, p.case1_gust_residual} : DisturbanceLevels{r, r, r};
    case DisturbanceCase::Case2: {
      if (after) return {0.0, p.case2_base, p.case2_base};
      const double level = p.case2_base + (1.0 - p.case2_base) * r;
      return {r, level, level};
    }
    case DisturbanceCase::Case3:
      return after ? DisturbanceLevels{} : DisturbanceLevels{r, r, r};
  }
  return {};
}

}  // namespace detail

inline LabeledTrace gen_vessel(const VesselScenario& sc, const VesselPlant& p = {}) {
  sc.validate();
  enum Stream : std::uint64_t {
    kSurgeNoise, kSwayNoise, kYawNoise, kRollNoise, kRollRateNoise,
    kSteering, kGustYaw, kGustSway, kWavePhase
  };
  auto stream = [&](Stream s) { return Rng(derive_seed(sc.seed, {s})); };
  Rng meas[5] = {stream(kSurgeNoise), stream(kSwayNoise), stream(kYawNoise),
                 stream(kRollNoise), stream(kRollRateNoise)};
  Rng steer_rng = stream(kSteering);
  Rng gust_yaw_rng = stream(kGustYaw);
  Rng gust_sway_rng = stream(kGustSway);
  Rng wave_rng = stream(kWavePhase);

  const double dt_sample = 1.0 / sc.sample_rate_hz;
  const int substeps = std::max(1, static_cast<int>(std::ceil(dt_sample / 0.1)));
  const double dt = dt_sample / substeps;
  const auto n = static_cast<long>(std::floor(sc.duration_s * sc.sample_rate_hz + 1e-9));

  const double omega = 2.0 * std::numbers::pi / p.roll_period;
  const double wave_omega = 2.0 * std::numbers::pi / p.wave_period;
  const double wave_phase = wave_rng.uniform(0.0, 2.0 * std::numbers::pi);

  const bool random = sc.maneuver == Maneuver::Random;
  const double amplitude = random ? 0.0 : sc.angle_deg();
  const double walk_scale = random ? random_intensity_scale(sc.variant) : 0.0;

  double u = p.cruise_speed, v = 0.0, r = 0.0, phi = 0.0, pr = 0.0, psi = 0.0;
  double delta = amplitude;
  double gust_r = 0.0, gust_v = 0.0;

  MultivariateSeries s;
  s.schema = FeatureSchema::vessel();
  s.sample_rate_hz = sc.sample_rate_hz;
  s.values.resize(n, 5);

  for (long k = 0; k < n; ++k) {
    const double t_sample = static_cast<double>(k) * dt_sample;
    const double noise[5] = {p.noise_surge, p.noise_sway, p.noise_yaw, p.noise_roll,
                             p.noise_roll_rate};
    const double state[5] = {u, v, r, phi, pr};
    for (int f = 0; f < 5; ++f) s.values(k, f) = state[f] + noise[f] * meas[f].normal();

    // Steering decision is taken once per recorded sample.
    switch (sc.maneuver) {
      case Maneuver::Zigzag:
        if (psi > amplitude) delta = -amplitude;
        else if (psi < -amplitude) delta = amplitude;
        break;
      case Maneuver::Turning:
        delta = amplitude;
        break;
      case Maneuver::Random:
        delta += walk_scale * p.random_step * std::sqrt(dt_sample) * steer_rng.normal() -
                 p.random_reversion * dt_sample * delta;
        delta = std::clamp(delta, -p.max_steering, p.max_steering);
        break;
    }

    for (int j = 0; j < substeps; ++j) {
      const double t = t_sample + j * dt;
      const auto level = detail::disturbance_levels(sc.disturbance, t, p);
      // Ornstein-Uhlenbeck gusts, always integrated so the streams stay aligned.
      const double ou = std::sqrt(2.0 * dt / p.gust_time);
      gust_r += -gust_r * dt / p.gust_time + ou * gust_yaw_rng.normal();
      gust_v += -gust_v * dt / p.gust_time + ou * gust_sway_rng.normal();
      const double wave = std::sin(wave_omega * t + wave_phase);

      const double yaw_forcing =
          level.wind_waves * (p.wind_yaw + p.wave_yaw * wave) + level.gusts * p.gust_yaw * gust_r;
      const double dr = (p.nomoto_gain * delta + yaw_forcing - r) / p.nomoto_time;
      const double u_target = p.cruise_speed * (1.0 - p.surge_turn_loss * std::abs(r)) +
                              level.current * p.current_surge;
      const double du = (u_target - u) / p.surge_time;
      const double v_target = p.sway_per_yaw * r * (u / p.cruise_speed) +
                              level.current * p.current_sway + level.gusts * p.gust_sway * gust_v;
      const double dv = (v_target - v) / p.sway_time;
      const double phi_target = p.roll_per_yaw * r + level.wind_waves * p.wave_roll * wave;
      const double dp = omega * omega * (phi_target - phi) - 2.0 * p.roll_damping * omega * pr;

      r += dr * dt;
      u += du * dt;
      v += dv * dt;
      pr += dp * dt;
      phi += pr * dt;
      psi += r * dt;
    }
  }

  LabeledTrace out;
  out.series = std::move(s);
  out.scenario = sc.tag();
  if (sc.disturbance != DisturbanceCase::None) {
    const auto a = static_cast<long>(std::lround(p.onset_s * sc.sample_rate_hz));
    const auto b = static_cast<long>(std::lround(p.offset_s * sc.sample_rate_hz));
    out.ood_interval = StepInterval{std::min(a, n), std::min(b, n)};
  }
  return out;
}

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct RobotScenario {
  std::vector<Point2> waypoints;
  Point2 start{};
  double noise_position = 0.12;     // m, applied to x and y
  double noise_orientation = 0.08;  // rad, applied to theta
  std::optional<double> noise_start_s;  // default: arrival at the first waypoint
  double noise_duration_s = 80.0;
  bool inject_noise = true;         // false: clean run with no OOD interval
  double sample_rate_hz = 10.0;
  std::uint64_t seed = 0;

  double max_speed = 0.35;          // m/s
  double max_turn_rate = 0.8;       // rad/s
  double heading_gain = 1.5;
  double distance_gain = 0.8;
  double arrival_radius = 0.05;     // m
  double settle_s = 10.0;           // recorded after the last arrival
  double max_duration_s = 3600.0;

  void validate() const {
    if (waypoints.size() < 2) throw ConfigError("robot scenario needs at least 2 waypoints");
    if (!(noise_duration_s > 0.0)) throw ConfigError("noise duration must be positive");
    if (!(sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
    if (noise_position < 0.0 || noise_orientation < 0.0) {
      throw ConfigError("noise standard deviations must be non-negative");
    }
    for (std::size_t i = 0; i < waypoints.size(); ++i) {
      for (std::size_t j = i + 1; j < waypoints.size(); ++j) {
        if (std::hypot(waypoints[i].x - waypoints[j].x, waypoints[i].y - waypoints[j].y) < 1e-9) {
          throw ConfigError("waypoints " + std::to_string(i) + " and " + std::to_string(j) +
                            " coincide");
        }
      }
    }
  }

  std::string tag() const { return "robot/waypoint/" + std::to_string(waypoints.size()); }
};

/// Draws n waypoints in a width x height area, at least min_gap apart from each other and
/// from the start point.
inline std::vector<Point2> random_waypoints(std::uint64_t seed, std::size_t n,
                                            double width = 24.0, double height = 16.0,
                                            double min_gap = 6.0) {
  Rng rng(derive_seed(seed, "waypoints"));
  std::vector<Point2> pts;
  std::vector<Point2> taken{{0.0, 0.0}};
  while (pts.size() < n) {
    Point2 p{rng.uniform(-width / 2, width / 2), rng.uniform(-height / 2, height / 2)};
    bool ok = true;
    for (const auto& q : taken) ok = ok && std::hypot(p.x - q.x, p.y - q.y) >= min_gap;
    if (!ok) continue;
    pts.push_back(p);
    taken.push_back(p);
  }
  return pts;
}

inline LabeledTrace gen_robot(const RobotScenario& sc) {
  sc.validate();
  const double dt = 1.0 / sc.sample_rate_hz;
  Rng noise_x(derive_seed(sc.seed, {0}));
  Rng noise_y(derive_seed(sc.seed, {1}));
  Rng noise_th(derive_seed(sc.seed, {2}));

  double x = sc.start.x, y = sc.start.y;
  double th = std::atan2(sc.waypoints[0].y - y, sc.waypoints[0].x - x);
  std::size_t target = 0;
  std::optional<long> first_arrival;
  std::optional<long> done_at;
  std::vector<double> clean;

  const auto max_steps = static_cast<long>(sc.max_duration_s * sc.sample_rate_hz);
  const auto settle_steps = static_cast<long>(std::lround(sc.settle_s * sc.sample_rate_hz));
  long k = 0;
  for (; k < max_steps; ++k) {
    clean.insert(clean.end(), {x, y, th});
    if (done_at && k >= *done_at + settle_steps) break;

    const Point2 goal = sc.waypoints[target];
    const double dx = goal.x - x, dy = goal.y - y;
    const double dist = std::hypot(dx, dy);
    if (dist < sc.arrival_radius && !done_at) {
      if (!first_arrival) first_arrival = k;
      if (target + 1 < sc.waypoints.size()) {
        ++target;
      } else {
        done_at = k;
      }
      continue;
    }
    if (done_at) continue;
    double err = std::atan2(dy, dx) - th;
    err = std::remainder(err, 2.0 * std::numbers::pi);
    const double omega = std::clamp(sc.heading_gain * err, -sc.max_turn_rate, sc.max_turn_rate);
    const double speed =
        std::min(sc.max_speed, sc.distance_gain * dist) * std::max(0.0, std::cos(err));
    th += omega * dt;
    x += speed * std::cos(th) * dt;
    y += speed * std::sin(th) * dt;
  }
  if (!done_at) throw ConfigError("robot did not reach the last waypoint within max duration");

  const long n = static_cast<long>(clean.size() / 3);
  MultivariateSeries s;
  s.schema = FeatureSchema::robot();
  s.sample_rate_hz = sc.sample_rate_hz;
  s.values = Eigen::Map<const Matrix>(clean.data(), n, 3);

  const long noise_begin = sc.noise_start_s
                               ? static_cast<long>(std::lround(*sc.noise_start_s * sc.sample_rate_hz))
                               : *first_arrival;
  const long noise_len = static_cast<long>(std::lround(sc.noise_duration_s * sc.sample_rate_hz));
  const StepInterval interval{std::clamp(noise_begin, 0L, n), std::clamp(noise_begin + noise_len, 0L, n)};
  for (long t = interval.start; sc.inject_noise && t < interval.end; ++t) {
    // Zero sigma must leave the trace bit-identical, so skip the addition entirely.
    if (sc.noise_position > 0.0) {
      s.values(t, 0) += sc.noise_position * noise_x.normal();
      s.values(t, 1) += sc.noise_position * noise_y.normal();
    }
    if (sc.noise_orientation > 0.0) s.values(t, 2) += sc.noise_orientation * noise_th.normal();
  }

  LabeledTrace out;
  out.series = std::move(s);
  out.scenario = sc.tag();
  if (sc.inject_noise && interval.length() > 0) out.ood_interval = interval;
  return out;
}

inline std::string label_path_for(const std::string& csv_path) {
  const auto dot = csv_path.rfind(".csv");
  const std::string stem = dot == std::string::npos ? csv_path : csv_path.substr(0, dot);
  return stem + ".labels.json";
}

inline nlohmann::ordered_json label_sidecar(const LabeledTrace& trace) {
  nlohmann::ordered_json j;
  if (trace.ood_interval) {
    j["ood_start"] = trace.ood_interval->start;
    j["ood_end"] = trace.ood_interval->end;
  } else {
    j["ood_start"] = nullptr;
    j["ood_end"] = nullptr;
  }
  j["sample_rate_hz"] = trace.series.sample_rate_hz;
  j["scenario"] = trace.scenario;
  return j;
}

/// Writes `path` (CSV) and the `.labels.json` sidecar next to it.
inline void export_trace(const LabeledTrace& trace, const std::string& path) {
  save_csv(path, trace.series);
  const std::string label_path = label_path_for(path);
  std::ofstream out(label_path, std::ios::binary);
  if (!out) throw Error("cannot write " + label_path);
  out << label_sidecar(trace).dump(2) << '\n';
  if (!out) throw Error("write failed: " + label_path);
}

inline LabeledTrace import_trace(const std::string& path, const FeatureSchema& schema) {
  const std::string label_path = label_path_for(path);
  std::ifstream in(label_path, std::ios::binary);
  if (!in) throw ParseError("cannot open label sidecar " + label_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(label_path + ": " + e.what());
  }
  LabeledTrace t;
  try {
    t.series = load_csv(path, schema, j.at("sample_rate_hz").get<double>());
    t.scenario = j.value("scenario", std::string{});
    if (!j.at("ood_start").is_null()) {
      t.ood_interval = StepInterval{j.at("ood_start").get<long>(), j.at("ood_end").get<long>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(label_path + ": " + e.what());
  }
  if (t.ood_interval &&
      (t.ood_interval->start < 0 || t.ood_interval->end > t.series.steps() ||
       t.ood_interval->start > t.ood_interval->end)) {
    throw ParseError(label_path + ": ood interval outside the trace");
  }
  return t;
}

}  // namespace odisar

#endif  // ODISAR_SYNTH_HPP
