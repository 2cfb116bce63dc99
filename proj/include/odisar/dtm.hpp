// Digital twin model: an encoder-decoder transformer that forecasts the next h
// states from the last w states and, through a second MLP head on the decoder
// output, reconstructs its own forecast.
//
// Decoding is non-autoregressive: h learned query embeddings (plus sinusoidal
// positions) attend to each other and to the encoder memory in one pass.

#ifndef ODISAR_DTM_HPP
#define ODISAR_DTM_HPP

#include "odisar/core.hpp"
#include "odisar/nn.hpp"
#include "odisar/rng.hpp"
#include "odisar/timeseries.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace odisar {

struct ModelConfig {
  long d_model = 64;
  long n_heads = 4;
  long d_ff = 128;
  double dropout = 0.1;
  long n_encoder_layers = 2;
  long n_decoder_layers = 2;
  long w = 60;
  long h = 60;
  long d_features = 5;

  void validate() const {
    if (d_model < 1 || n_heads < 1 || d_ff < 1 || n_encoder_layers < 1 || n_decoder_layers < 1 ||
        w < 1 || h < 1 || d_features < 1) {
      throw ConfigError("model dimensions must all be >= 1");
    }
    if (d_model % n_heads != 0) {
      throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                        std::to_string(n_heads) + ")");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }

  /// Maritime vessel profile: dropout 0.1.
  static ModelConfig vessel(long d_features = 5) {
    ModelConfig c;
    c.dropout = 0.1;
    c.d_features = d_features;
    return c;
  }

  /// Mobile robot profile: dropout 0.2.
  static ModelConfig robot(long d_features = 3) {
    ModelConfig c;
    c.dropout = 0.2;
    c.d_features = d_features;
    return c;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  long batch_size = 16;
  double learning_rate = 1e-4;
  long epochs = 200;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Stop after this many epochs without a relative validation improvement of
  /// at least min_improvement. 0 disables early stopping.
  long patience = 0;
  double min_improvement = 1e-3;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (patience < 0) throw ConfigError("patience must be >= 0");
  }
};

struct LossBreakdown {
  double forecast = 0.0;
  double recon = 0.0;
  double total = 0.0;
};

/// Mean over the h steps of the squared Euclidean norm of the per-step difference.
inline double mean_step_sq_norm(const Matrix& a, const Matrix& b, const char* what) {
  require_same_shape(a, b, what);
  if (a.rows() == 0) throw ShapeError(std::string(what) + ": empty horizon");
  return (a - b).squaredNorm() / static_cast<double>(a.rows());
}

/// Forecasting loss between prediction and ground truth.
inline double loss_forecast(const Matrix& forecast, const Matrix& truth) {
  return mean_step_sq_norm(forecast, truth, "loss_forecast");
}

/// Reconstruction loss between the reconstruction and the forecast it reconstructs.
inline double loss_recon(const Matrix& recon, const Matrix& forecast) {
  return mean_step_sq_norm(recon, forecast, "loss_recon");
}

/// Unweighted sum of the two objectives.
inline LossBreakdown loss_total(double forecast, double recon) {
  return {forecast, recon, forecast + recon};
}

struct ModelOutput {
  Matrix forecast;  // h x D
  Matrix recon;     // h x D
};

class DTModel {
 public:
  struct Cache {
    Matrix input;
    Matrix embed_mask;
    std::vector<nn::EncoderLayer::Cache> encoder;
    Matrix memory;
    Matrix query_mask;
    std::vector<nn::DecoderLayer::Cache> decoder;
    Matrix hidden;  // decoder output
    Matrix recon_pre;
  };

  DTModel() = default;

  DTModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, "init"));
    const long d = cfg_.d_model;
    input_proj_ = nn::Linear(cfg_.d_features, d, rng);
    for (long i = 0; i < cfg_.n_encoder_layers; ++i) {
      encoder_.emplace_back(d, cfg_.n_heads, cfg_.d_ff, rng);
    }
    queries_.resize(cfg_.h, d);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (Eigen::Index i = 0; i < queries_.size(); ++i) queries_.data()[i] = rng.uniform(-bound, bound);
    grad_queries_ = Matrix::Zero(cfg_.h, d);
    for (long i = 0; i < cfg_.n_decoder_layers; ++i) {
      decoder_.emplace_back(d, cfg_.n_heads, cfg_.d_ff, rng);
    }
    forecast_head_ = nn::Linear(d, cfg_.d_features, rng);
    recon_hidden_ = nn::Linear(d, cfg_.d_ff, rng);
    recon_out_ = nn::Linear(cfg_.d_ff, cfg_.d_features, rng);
    init_positions();
  }

  const ModelConfig& config() const { return cfg_; }

  /// One forward pass. Eval mode ignores `rng`; Train and MC modes require it.
  /// A non-null cache (Train mode) records what backward() needs.
  ModelOutput forward(const Matrix& x, nn::Mode mode, Rng* rng = nullptr,
                      Cache* cache = nullptr) const {
    require_shape(x, cfg_.w, cfg_.d_features, "model input");
    if (!x.allFinite()) throw ConfigError("model input contains non-finite values");
    if (mode != nn::Mode::Eval && cfg_.dropout > 0.0 && rng == nullptr) {
      throw ConfigError("stochastic forward pass needs an RNG stream");
    }
    const nn::Context ctx{mode, cfg_.dropout, rng};
    if (cache) {
      cache->input = x;
      cache->encoder.resize(encoder_.size());
      cache->decoder.resize(decoder_.size());
    }

    Matrix h = input_proj_.forward(x) + enc_positions_;
    h = nn::dropout(h, ctx, cache ? &cache->embed_mask : nullptr);
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
      h = encoder_[i].forward(h, ctx, cache ? &cache->encoder[i] : nullptr);
    }
    const Matrix memory = std::move(h);

    Matrix q = queries_ + dec_positions_;
    q = nn::dropout(q, ctx, cache ? &cache->query_mask : nullptr);
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      q = decoder_[i].forward(q, memory, ctx, cache ? &cache->decoder[i] : nullptr);
    }

    ModelOutput out;
    out.forecast = forecast_head_.forward(q);
    Matrix pre = recon_hidden_.forward(q);
    out.recon = recon_out_.forward(pre.cwiseMax(0.0));
    if (cache) {
      cache->memory = memory;
      cache->hidden = std::move(q);
      cache->recon_pre = std::move(pre);
    }
    return out;
  }

  /// Accumulates parameter gradients given dL/d(forecast) and dL/d(recon).
  void backward(const Cache& c, const Matrix& grad_forecast, const Matrix& grad_recon) {
    Matrix dhidden = forecast_head_.backward(c.hidden, grad_forecast);
    const Matrix act = c.recon_pre.cwiseMax(0.0);
    Matrix dact = recon_out_.backward(act, grad_recon);
    dact = dact.cwiseProduct((c.recon_pre.array() > 0.0).cast<double>().matrix());
    dhidden += recon_hidden_.backward(c.hidden, dact);

    Matrix dmemory = Matrix::Zero(c.memory.rows(), c.memory.cols());
    Matrix dq = std::move(dhidden);
    for (std::size_t i = decoder_.size(); i-- > 0;) {
      dq = decoder_[i].backward(c.decoder[i], dq, dmemory);
    }
    grad_queries_ += nn::dropout_backward(dq, c.query_mask);

    Matrix dh = std::move(dmemory);
    for (std::size_t i = encoder_.size(); i-- > 0;) {
      dh = encoder_[i].backward(c.encoder[i], dh);
    }
    dh = nn::dropout_backward(dh, c.embed_mask);
    input_proj_.backward(c.input, dh);
  }

  /// Walks every (name, value, gradient) triple in a fixed order.
  template <typename Fn>
  void visit(Fn&& fn) {
    input_proj_.visit("input_proj", fn);
    for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].visit("encoder." + std::to_string(i), fn);
    fn(std::string("decoder.queries"), queries_, grad_queries_);
    for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].visit("decoder." + std::to_string(i), fn);
    forecast_head_.visit("forecast_head", fn);
    recon_hidden_.visit("recon_head.hidden", fn);
    recon_out_.visit("recon_head.out", fn);
  }

  template <typename Fn>
  void visit(Fn&& fn) const {
    const_cast<DTModel*>(this)->visit([&](const std::string& name, Matrix& value, Matrix& grad) {
      fn(name, static_cast<const Matrix&>(value), static_cast<const Matrix&>(grad));
    });
  }

  void zero_grad() {
    visit([](const std::string&, Matrix&, Matrix& g) { g.setZero(); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const std::string&, const Matrix& v, const Matrix&) { n += static_cast<std::size_t>(v.size()); });
    return n;
  }

  /// Loss of one training window; accumulates gradients scaled by `grad_scale`.
  LossBreakdown train_step(const Matrix& x, const Matrix& y, Rng& rng, double grad_scale) {
    require_shape(y, cfg_.h, cfg_.d_features, "training target");
    Cache cache;
    const ModelOutput out = forward(x, nn::Mode::Train, &rng, &cache);
    const double lf = loss_forecast(out.forecast, y);
    const double lr = loss_recon(out.recon, out.forecast);
    const double k = 2.0 / static_cast<double>(cfg_.h) * grad_scale;
    // The forecast is a constant target inside the reconstruction loss.
    const Matrix grad_forecast = k * (out.forecast - y);
    const Matrix grad_recon = k * (out.recon - out.forecast);
    backward(cache, grad_forecast, grad_recon);
    return loss_total(lf, lr);
  }

  LossBreakdown evaluate(const Matrix& x, const Matrix& y) const {
    const ModelOutput out = forward(x, nn::Mode::Eval);
    return loss_total(loss_forecast(out.forecast, y), loss_recon(out.recon, out.forecast));
  }

 private:
  void init_positions() {
    enc_positions_ = nn::sinusoidal_positions(cfg_.w, cfg_.d_model);
    dec_positions_ = nn::sinusoidal_positions(cfg_.h, cfg_.d_model);
  }

  ModelConfig cfg_;
  nn::Linear input_proj_;
  std::vector<nn::EncoderLayer> encoder_;
  Matrix queries_;
  Matrix grad_queries_;
  std::vector<nn::DecoderLayer> decoder_;
  nn::Linear forecast_head_;
  nn::Linear recon_hidden_;
  nn::Linear recon_out_;
  Matrix enc_positions_;
  Matrix dec_positions_;
};

/// Adam with bias-corrected moments over DTModel::visit order.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(DTModel& model) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t i = 0;
    model.visit([&](const std::string&, Matrix& value, Matrix& grad) {
      if (i == m_.size()) {
        m_.push_back(Matrix::Zero(value.rows(), value.cols()));
        v_.push_back(Matrix::Zero(value.rows(), value.cols()));
      }
      Matrix& m = m_[i];
      Matrix& v = v_[i];
      m = beta1_ * m + (1.0 - beta1_) * grad;
      v = beta2_ * v + (1.0 - beta2_) * grad.cwiseAbs2();
      value.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
      ++i;
    });
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct EpochRecord {
  long epoch = 0;  // 1-based
  LossBreakdown train;
  LossBreakdown val;
};

struct TrainResult {
  DTModel model;
  std::vector<EpochRecord> history;
};

inline LossBreakdown mean_loss(const DTModel& model, const std::vector<WindowPair>& windows) {
  LossBreakdown acc;
  for (const auto& wp : windows) {
    const auto l = model.evaluate(wp.input, wp.target);
    acc.forecast += l.forecast;
    acc.recon += l.recon;
  }
  const auto n = static_cast<double>(windows.size());
  return loss_total(acc.forecast / n, acc.recon / n);
}

/// Minibatch Adam on the combined loss. Batch order is a seeded permutation per epoch;
/// dropout masks come from one stream derived from the seed, so runs are reproducible.
inline TrainResult train(DTModel model, const std::vector<WindowPair>& train_windows,
                         const std::vector<WindowPair>& val_windows, const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (train_windows.empty()) throw ConfigError("training split is empty");
  if (val_windows.empty()) throw ConfigError("validation split is empty");

  Adam opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  std::vector<std::size_t> order(train_windows.size());
  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  long stale = 0;

  for (long epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(derive_seed(cfg.seed, "shuffle"), {static_cast<std::uint64_t>(epoch)}));
    shuffle_indices(order, shuffle_rng);

    LossBreakdown acc;
    long batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 1.0 / static_cast<double>(end - begin);
      model.zero_grad();
      double batch_total = 0.0;
      for (std::size_t j = begin; j < end; ++j) {
        const auto& wp = train_windows[order[j]];
        const auto l = model.train_step(wp.input, wp.target, dropout_rng, scale);
        acc.forecast += l.forecast;
        acc.recon += l.recon;
        batch_total += l.total;
      }
      if (!std::isfinite(batch_total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      }
      opt.step(model);
      ++batch_index;
    }
    const auto n = static_cast<double>(order.size());
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = loss_total(acc.forecast / n, acc.recon / n);
    rec.val = mean_loss(model, val_windows);
    if (!std::isfinite(rec.val.total)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (cfg.patience > 0) {
      if (rec.val.total < best * (1.0 - cfg.min_improvement)) {
        best = rec.val.total;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        break;
      }
    }
  }
  result.model = std::move(model);
  return result;
}

}  // namespace odisar

#endif  // ODISAR_DTM_HPP
