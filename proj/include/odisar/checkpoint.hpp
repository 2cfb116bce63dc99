// Checkpoint container: model config, normalizer, feature schema and every parameter
// tensor with its shape, stored as JSON. Doubles are written in shortest round-trip
// form, so a reload reproduces the parameters bit for bit.

#ifndef ODISAR_CHECKPOINT_HPP
#define ODISAR_CHECKPOINT_HPP

#include "odisar/core.hpp"
#include "odisar/dtm.hpp"
#include "odisar/timeseries.hpp"

#include "json.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace odisar {

inline constexpr const char* kCheckpointFormat = "odisar-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  DTModel model;
  ModelConfig config;
  Normalizer normalizer;
  FeatureSchema schema;
};

namespace detail {

inline nlohmann::ordered_json matrix_to_json(const Matrix& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  nlohmann::ordered_json data = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) data.push_back(m.data()[i]);
  j["data"] = std::move(data);
  return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ParseError("checkpoint: tensor " + what + " has inconsistent shape");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = data[static_cast<std::size_t>(i)].get<double>();
  return m;
}

}  // namespace detail

inline nlohmann::ordered_json checkpoint_to_json(const DTModel& model, const Normalizer& normalizer,
                                                 const FeatureSchema& schema) {
  const auto& c = model.config();
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = {{"d_model", c.d_model},   {"n_heads", c.n_heads},
                 {"d_ff", c.d_ff},         {"dropout", c.dropout},
                 {"n_encoder_layers", c.n_encoder_layers},
                 {"n_decoder_layers", c.n_decoder_layers},
                 {"w", c.w},               {"h", c.h},
                 {"d_features", c.d_features}};
  j["schema"] = {{"names", schema.names}, {"units", schema.units}};
  j["normalizer"] = {{"mean", detail::matrix_to_json(normalizer.mean)},
                     {"stddev", detail::matrix_to_json(normalizer.stddev)}};
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  model.visit([&](const std::string& name, const Matrix& value, const Matrix&) {
    params[name] = detail::matrix_to_json(value);
  });
  j["parameters"] = std::move(params);
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    const auto format = j.at("format").get<std::string>();
    if (format != kCheckpointFormat) {
      throw ParseError("checkpoint: expected format \"" + std::string(kCheckpointFormat) +
                       "\", found \"" + format + "\"");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ParseError("checkpoint: expected format version " + std::to_string(kCheckpointVersion) +
                       ", found " + std::to_string(version));
    }
    const auto& jc = j.at("config");
    ModelConfig c;
    c.d_model = jc.at("d_model").get<long>();
    c.n_heads = jc.at("n_heads").get<long>();
    c.d_ff = jc.at("d_ff").get<long>();
    c.dropout = jc.at("dropout").get<double>();
    c.n_encoder_layers = jc.at("n_encoder_layers").get<long>();
    c.n_decoder_layers = jc.at("n_decoder_layers").get<long>();
    c.w = jc.at("w").get<long>();
    c.h = jc.at("h").get<long>();
    c.d_features = jc.at("d_features").get<long>();
    c.validate();

    FeatureSchema schema(j.at("schema").at("names").get<std::vector<std::string>>(),
                         j.at("schema").at("units").get<std::vector<std::string>>());
    if (static_cast<long>(schema.size()) != c.d_features) {
      throw ParseError("checkpoint: schema has " + std::to_string(schema.size()) +
                       " features, config says " + std::to_string(c.d_features));
    }
    Normalizer norm;
    norm.mean = detail::matrix_from_json(j.at("normalizer").at("mean"), "normalizer.mean");
    norm.stddev = detail::matrix_from_json(j.at("normalizer").at("stddev"), "normalizer.stddev");
    if (norm.mean.size() != c.d_features || norm.stddev.size() != c.d_features) {
      throw ParseError("checkpoint: normalizer size does not match d_features");
    }

    DTModel model(c, 0);
    const auto& params = j.at("parameters");
    std::size_t seen = 0;
    model.visit([&](const std::string& name, Matrix& value, Matrix&) {
      if (!params.contains(name)) throw ParseError("checkpoint: missing tensor " + name);
      Matrix m = detail::matrix_from_json(params.at(name), name);
      if (m.rows() != value.rows() || m.cols() != value.cols()) {
        throw ParseError("checkpoint: tensor " + name + " has shape " + std::to_string(m.rows()) +
                         "x" + std::to_string(m.cols()) + ", expected " +
                         std::to_string(value.rows()) + "x" + std::to_string(value.cols()));
      }
      value = std::move(m);
      ++seen;
    });
    if (seen != params.size()) throw ParseError("checkpoint: unexpected extra tensors");
    return Checkpoint{std::move(model), c, std::move(norm), std::move(schema)};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const DTModel& model,
                            const Normalizer& normalizer, const FeatureSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << checkpoint_to_json(model, normalizer, schema).dump() << '\n';
  if (!out) throw Error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": corrupt or truncated checkpoint (" + e.what() + ")");
  }
  return checkpoint_from_json(j);
}

}  // namespace odisar

#endif  // ODISAR_CHECKPOINT_HPP
