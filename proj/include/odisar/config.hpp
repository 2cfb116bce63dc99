// Flat key-value run configuration.
//
// Grammar, one entry per line:
//   key = value        keys are [A-Za-z0-9_.-]+, values are trimmed
//   # comment          blank lines and lines starting with '#' are ignored
// A key may appear once per file. Lists are comma-separated. Command-line flags
// override file entries.

#ifndef ODISAR_CONFIG_HPP
#define ODISAR_CONFIG_HPP

#include "odisar/core.hpp"
#include "odisar/dtm.hpp"
#include "odisar/rng.hpp"
#include "odisar/timeseries.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace odisar {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "config") {
    KeyValueConfig kv;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto t = detail::trim(line);
      if (t.empty() || t.front() == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) {
        throw ParseError(source + ":" + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key(detail::trim(t.substr(0, eq)));
      if (!valid_key(key)) {
        throw ParseError(source + ":" + std::to_string(lineno) + ": invalid key \"" + key + "\"");
      }
      if (kv.values_.count(key)) {
        throw ParseError(source + ":" + std::to_string(lineno) + ": duplicate key \"" + key + "\"");
      }
      kv.set(key, std::string(detail::trim(t.substr(eq + 1))));
    }
    return kv;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open config " + path);
    return parse(in, path);
  }

  static bool valid_key(std::string_view key) {
    if (key.empty()) return false;
    for (char c : key) {
      const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '_' || c == '.' || c == '-';
      if (!ok) return false;
    }
    return true;
  }

  /// Sets or replaces a value; first-insertion order is kept.
  void set(const std::string& key, std::string value) {
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = std::move(value);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::vector<std::string>& keys() const { return order_; }

  std::optional<std::string> raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_.insert(key);
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return raw(key).value_or(fallback);
  }

  double get_double(const std::string& key, double fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    const auto d = detail::parse_double(*v);
    if (!d) throw ConfigError(key + ": expected a number, got \"" + *v + "\"");
    return *d;
  }

  long get_long(const std::string& key, long fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    long out = 0;
    const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || p != v->data() + v->size()) {
      throw ConfigError(key + ": expected an integer, got \"" + *v + "\"");
    }
    return out;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || p != v->data() + v->size()) {
      throw ConfigError(key + ": expected an unsigned integer, got \"" + *v + "\"");
    }
    return out;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError(key + ": expected true or false, got \"" + *v + "\"");
  }

  std::vector<std::string> get_list(const std::string& key) const {
    std::vector<std::string> out;
    const auto v = raw(key);
    if (!v || v->empty()) return out;
    for (auto part : detail::split_commas(*v)) {
      const auto t = detail::trim(part);
      if (!t.empty()) out.emplace_back(t);
    }
    return out;
  }

  /// Keys never read through a getter, in insertion order.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& k : order_) {
      if (!used_.count(k)) out.push_back(k);
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
  mutable std::set<std::string> used_;
};

/// Resolved settings shared by every command. Unset fields take profile defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string profile = "vessel";
  FeatureSchema schema = FeatureSchema::vessel();
  double sample_rate_hz = 1.0;

  ModelConfig model = ModelConfig::vessel();
  TrainConfig train;
  long train_stride = 1;
  double train_frac = 0.7;
  double val_frac = 0.15;

  double k = 3.0;
  long passes = 30;
  bool force_attribution = false;
  std::string ranking = "recon";

  std::vector<std::string> train_data;
  std::vector<std::string> val_data;
  std::vector<std::string> data;
  std::string checkpoint;
  std::string thresholds;
  std::string baseline;

  // Sub-seeds derived from the top-level seed by label.
  std::uint64_t init_seed() const { return derive_seed(seed, "init"); }
  std::uint64_t train_seed() const { return derive_seed(seed, "train"); }
  std::uint64_t mc_seed() const { return derive_seed(seed, "mc"); }
  std::uint64_t data_seed() const { return derive_seed(seed, "data"); }

  /// Fully resolved settings as key = value lines, one per key, in fixed order.
  std::string echo() const {
    std::ostringstream o;
    auto list = [](const std::vector<std::string>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
      return s;
    };
    o << "seed = " << seed << '\n'
      << "out = " << out << '\n'
      << "profile = " << profile << '\n'
      << "features = " << list(schema.names) << '\n'
      << "sample_rate_hz = " << format_double(sample_rate_hz) << '\n'
      << "d_model = " << model.d_model << '\n'
      << "n_heads = " << model.n_heads << '\n'
      << "d_ff = " << model.d_ff << '\n'
      << "dropout = " << format_double(model.dropout) << '\n'
      << "encoder_layers = " << model.n_encoder_layers << '\n'
      << "decoder_layers = " << model.n_decoder_layers << '\n'
      << "window = " << model.w << '\n'
      << "horizon = " << model.h << '\n'
      << "batch_size = " << train.batch_size << '\n'
      << "learning_rate = " << format_double(train.learning_rate) << '\n'
      << "epochs = " << train.epochs << '\n'
      << "patience = " << train.patience << '\n'
      << "min_improvement = " << format_double(train.min_improvement) << '\n'
      << "train_stride = " << train_stride << '\n'
      << "train_frac = " << format_double(train_frac) << '\n'
      << "val_frac = " << format_double(val_frac) << '\n'
      << "k = " << format_double(k) << '\n'
      << "passes = " << passes << '\n'
      << "force_attribution = " << (force_attribution ? "true" : "false") << '\n'
      << "ranking = " << ranking << '\n'
      << "train_data = " << list(train_data) << '\n'
      << "val_data = " << list(val_data) << '\n'
      << "data = " << list(data) << '\n'
      << "checkpoint = " << checkpoint << '\n'
      << "thresholds = " << thresholds << '\n'
      << "baseline = " << baseline << '\n';
    return o.str();
  }
};

/// Reads every RunConfig key from `kv`. The profile selects the model defaults
/// (vessel: dropout 0.1, 1 Hz, five states; robot: dropout 0.2, 10 Hz, planar pose).
inline RunConfig resolve_run_config(const KeyValueConfig& kv) {
  RunConfig c;
  c.seed = kv.get_u64("seed", 0);
  c.out = kv.get_string("out", "out");
  c.profile = kv.get_string("profile", "vessel");
  if (c.profile == "vessel") {
    c.schema = FeatureSchema::vessel();
    c.model = ModelConfig::vessel();
    c.sample_rate_hz = 1.0;
  } else if (c.profile == "robot") {
    c.schema = FeatureSchema::robot();
    c.model = ModelConfig::robot();
    c.sample_rate_hz = 10.0;
  } else if (c.profile == "custom") {
    const auto names = kv.get_list("features");
    if (names.empty()) throw ConfigError("profile custom requires a features list");
    c.schema = FeatureSchema(names);
    c.model = ModelConfig{};
    c.model.d_features = static_cast<long>(names.size());
  } else {
    throw ConfigError("unknown profile \"" + c.profile + "\" (expected vessel, robot or custom)");
  }
  if (c.profile != "custom" && kv.has("features")) {
    const auto names = kv.get_list("features");
    if (names != c.schema.names) {
      throw ConfigError("features conflict with profile " + c.profile +
                        "; use profile = custom to change them");
    }
  }
  c.sample_rate_hz = kv.get_double("sample_rate_hz", c.sample_rate_hz);

  auto& m = c.model;
  m.d_model = kv.get_long("d_model", m.d_model);
  m.n_heads = kv.get_long("n_heads", m.n_heads);
  m.d_ff = kv.get_long("d_ff", m.d_ff);
  m.dropout = kv.get_double("dropout", m.dropout);
  m.n_encoder_layers = kv.get_long("encoder_layers", m.n_encoder_layers);
  m.n_decoder_layers = kv.get_long("decoder_layers", m.n_decoder_layers);
  m.w = kv.get_long("window", m.w);
  m.h = kv.get_long("horizon", m.h);
  m.validate();

  auto& t = c.train;
  t.batch_size = kv.get_long("batch_size", t.batch_size);
  t.learning_rate = kv.get_double("learning_rate", t.learning_rate);
  t.epochs = kv.get_long("epochs", t.epochs);
  t.patience = kv.get_long("patience", t.patience);
  t.min_improvement = kv.get_double("min_improvement", t.min_improvement);
  t.seed = c.train_seed();
  t.validate();
  c.train_stride = kv.get_long("train_stride", c.train_stride);
  if (c.train_stride < 1) throw ConfigError("train_stride must be >= 1");
  c.train_frac = kv.get_double("train_frac", c.train_frac);
  c.val_frac = kv.get_double("val_frac", c.val_frac);

  c.k = kv.get_double("k", c.k);
  if (!(c.k > 0.0)) throw ConfigError("k must be positive");
  c.passes = kv.get_long("passes", c.passes);
  if (c.passes < 2) throw ConfigError("passes must be >= 2");
  c.force_attribution = kv.get_bool("force_attribution", c.force_attribution);
  c.ranking = kv.get_string("ranking", c.ranking);
  if (c.ranking != "recon" && c.ranking != "combined") {
    throw ConfigError("ranking must be recon or combined");
  }

  c.train_data = kv.get_list("train_data");
  c.val_data = kv.get_list("val_data");
  c.data = kv.get_list("data");
  c.checkpoint = kv.get_string("checkpoint", "");
  c.thresholds = kv.get_string("thresholds", "");
  c.baseline = kv.get_string("baseline", "");
  return c;
}

}  // namespace odisar

#endif  // ODISAR_CONFIG_HPP
