// Transformer building blocks with explicit backward passes.
//
// Every layer keeps its parameters and gradient accumulators side by side and
// exposes them through visit(prefix, fn) so optimizers and checkpoints can walk
// the model in a fixed order. forward() is const and optionally fills a cache;
// backward() consumes that cache, accumulates parameter gradients and returns
// the gradient with respect to the layer input.

#ifndef ODISAR_NN_HPP
#define ODISAR_NN_HPP

#include "odisar/core.hpp"
#include "odisar/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace odisar::nn {

enum class Mode {
  Train,  // dropout on, caches filled for backward
  Eval,   // dropout off, deterministic
  MC,     // dropout on at inference (Monte Carlo dropout)
};

struct Context {
  Mode mode = Mode::Eval;
  double dropout = 0.0;
  Rng* rng = nullptr;

  bool stochastic() const { return mode != Mode::Eval && dropout > 0.0; }
};

/// Inverted dropout. The mask (already scaled by 1/(1-p)) is written to `mask` when given;
/// an empty mask means identity.
inline Matrix dropout(const Matrix& x, const Context& ctx, Matrix* mask) {
  if (!ctx.stochastic()) {
    if (mask) mask->resize(0, 0);
    return x;
  }
  const double keep = 1.0 - ctx.dropout;
  const double scale = 1.0 / keep;
  Matrix m(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = ctx.rng->uniform() < keep ? scale : 0.0;
  }
  Matrix out = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return out;
}

inline Matrix dropout_backward(const Matrix& dy, const Matrix& mask) {
  if (mask.size() == 0) return dy;
  return dy.cwiseProduct(mask);
}

inline Matrix add_row(const Matrix& x, const Matrix& row) {
  return x.rowwise() + row.row(0);
}

struct Linear {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
  Matrix grad_weight;
  Matrix grad_bias;

  Linear() = default;
  Linear(Eigen::Index in, Eigen::Index out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight.resize(in, out);
    for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = rng.uniform(-bound, bound);
    bias = Matrix::Zero(1, out);
    grad_weight = Matrix::Zero(in, out);
    grad_bias = Matrix::Zero(1, out);
  }

  Matrix forward(const Matrix& x) const {
    Matrix y = x * weight;
    y.rowwise() += bias.row(0);
    return y;
  }

  Matrix backward(const Matrix& x, const Matrix& dy) {
    grad_weight.noalias() += x.transpose() * dy;
    grad_bias += dy.colwise().sum();
    return dy * weight.transpose();
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", weight, grad_weight);
    fn(prefix + ".bias", bias, grad_bias);
  }
};

/// Row-wise layer normalization with learned gain and shift.
struct LayerNorm {
  Matrix gain;
  Matrix shift;
  Matrix grad_gain;
  Matrix grad_shift;
  static constexpr double kEps = 1e-5;

  struct Cache {
    Matrix normalized;
    Eigen::VectorXd inv_std;
  };

  LayerNorm() = default;
  explicit LayerNorm(Eigen::Index d)
      : gain(Matrix::Ones(1, d)),
        shift(Matrix::Zero(1, d)),
        grad_gain(Matrix::Zero(1, d)),
        grad_shift(Matrix::Zero(1, d)) {}

  Matrix forward(const Matrix& x, Cache* cache) const {
    const auto d = static_cast<double>(x.cols());
    Matrix xhat(x.rows(), x.cols());
    Eigen::VectorXd inv(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double mean = x.row(i).sum() / d;
      const double var = (x.row(i).array() - mean).square().sum() / d;
      inv(i) = 1.0 / std::sqrt(var + kEps);
      xhat.row(i) = (x.row(i).array() - mean) * inv(i);
    }
    Matrix y = (xhat.array().rowwise() * gain.row(0).array()).matrix();
    y.rowwise() += shift.row(0);
    if (cache) {
      cache->normalized = std::move(xhat);
      cache->inv_std = std::move(inv);
    }
    return y;
  }

  Matrix backward(const Cache& c, const Matrix& dy) {
    grad_gain += (dy.cwiseProduct(c.normalized)).colwise().sum();
    grad_shift += dy.colwise().sum();
    const Matrix dxhat = (dy.array().rowwise() * gain.row(0).array()).matrix();
    const auto d = static_cast<double>(dy.cols());
    Matrix dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
      const double m1 = dxhat.row(i).sum() / d;
      const double m2 = dxhat.row(i).dot(c.normalized.row(i)) / d;
      dx.row(i) = c.inv_std(i) *
                  (dxhat.row(i).array() - m1 - c.normalized.row(i).array() * m2).matrix();
    }
    return dx;
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    fn(prefix + ".gain", gain, grad_gain);
    fn(prefix + ".shift", shift, grad_shift);
  }
};

inline void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

/// Scaled dot-product multi-head attention of `query` rows over `memory` rows.
struct MultiHeadAttention {
  Linear q_proj, k_proj, v_proj, out_proj;
  Eigen::Index heads = 1;

  struct Cache {
    Matrix query_in, memory_in;
    Matrix q, k, v;
    std::vector<Matrix> probs;      // per head, n x m, before dropout
    std::vector<Matrix> drop_mask;  // per head
    Matrix concat;                  // n x d
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(Eigen::Index d_model, Eigen::Index n_heads, Rng& rng)
      : q_proj(d_model, d_model, rng),
        k_proj(d_model, d_model, rng),
        v_proj(d_model, d_model, rng),
        out_proj(d_model, d_model, rng),
        heads(n_heads) {}

  Matrix forward(const Matrix& query, const Matrix& memory, const Context& ctx,
                 Cache* cache) const {
    const Eigen::Index d = q_proj.weight.cols();
    const Eigen::Index hd = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    Matrix q = q_proj.forward(query);
    Matrix k = k_proj.forward(memory);
    Matrix v = v_proj.forward(memory);
    Matrix concat(query.rows(), d);
    if (cache) {
      cache->probs.resize(static_cast<std::size_t>(heads));
      cache->drop_mask.resize(static_cast<std::size_t>(heads));
    }
    for (Eigen::Index h = 0; h < heads; ++h) {
      Matrix s = q.middleCols(h * hd, hd) * k.middleCols(h * hd, hd).transpose() * scale;
      softmax_rows(s);
      Matrix* mask = cache ? &cache->drop_mask[static_cast<std::size_t>(h)] : nullptr;
      const Matrix p = dropout(s, ctx, mask);
      concat.middleCols(h * hd, hd).noalias() = p * v.middleCols(h * hd, hd);
      if (cache) cache->probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    Matrix out = out_proj.forward(concat);
    if (cache) {
      cache->query_in = query;
      cache->memory_in = memory;
      cache->q = std::move(q);
      cache->k = std::move(k);
      cache->v = std::move(v);
      cache->concat = std::move(concat);
    }
    return out;
  }

  /// Returns d(query); adds d(memory) into `grad_memory` (which may alias nothing else).
  Matrix backward(const Cache& c, const Matrix& dy, Matrix& grad_memory) {
    const Eigen::Index d = q_proj.weight.cols();
    const Eigen::Index hd = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const Matrix dconcat = out_proj.backward(c.concat, dy);
    Matrix dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
    for (Eigen::Index h = 0; h < heads; ++h) {
      const auto hi = static_cast<std::size_t>(h);
      const Matrix& p = c.probs[hi];
      const Matrix& mask = c.drop_mask[hi];
      const Matrix p_used = mask.size() ? Matrix(p.cwiseProduct(mask)) : p;
      const auto dout = dconcat.middleCols(h * hd, hd);
      dv.middleCols(h * hd, hd).noalias() = p_used.transpose() * dout;
      Matrix dp = dout * c.v.middleCols(h * hd, hd).transpose();
      if (mask.size()) dp = dp.cwiseProduct(mask);
      // Softmax Jacobian: ds = p * (dp - rowsum(dp * p)).
      const Eigen::VectorXd dot = (dp.cwiseProduct(p)).rowwise().sum();
      Matrix ds = p.cwiseProduct((dp.colwise() - dot).matrix()) * scale;
      dq.middleCols(h * hd, hd).noalias() = ds * c.k.middleCols(h * hd, hd);
      dk.middleCols(h * hd, hd).noalias() = ds.transpose() * c.q.middleCols(h * hd, hd);
    }
    grad_memory += k_proj.backward(c.memory_in, dk);
    grad_memory += v_proj.backward(c.memory_in, dv);
    return q_proj.backward(c.query_in, dq);
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    q_proj.visit(prefix + ".q", fn);
    k_proj.visit(prefix + ".k", fn);
    v_proj.visit(prefix + ".v", fn);
    out_proj.visit(prefix + ".out", fn);
  }
};

/// Position-wise feed-forward: Linear -> ReLU -> dropout -> Linear.
struct FeedForward {
  Linear in, out;

  struct Cache {
    Matrix x;
    Matrix pre;      // pre-activation
    Matrix hidden;   // after ReLU and dropout
    Matrix mask;
  };

  FeedForward() = default;
  FeedForward(Eigen::Index d_model, Eigen::Index d_ff, Rng& rng)
      : in(d_model, d_ff, rng), out(d_ff, d_model, rng) {}

  Matrix forward(const Matrix& x, const Context& ctx, Cache* cache) const {
    Matrix pre = in.forward(x);
    Matrix act = pre.cwiseMax(0.0);
    Matrix hidden = dropout(act, ctx, cache ? &cache->mask : nullptr);
    Matrix y = out.forward(hidden);
    if (cache) {
      cache->x = x;
      cache->pre = std::move(pre);
      cache->hidden = std::move(hidden);
    }
    return y;
  }

  Matrix backward(const Cache& c, const Matrix& dy) {
    Matrix dh = out.backward(c.hidden, dy);
    dh = dropout_backward(dh, c.mask);
    dh = dh.cwiseProduct((c.pre.array() > 0.0).cast<double>().matrix());
    return in.backward(c.x, dh);
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    in.visit(prefix + ".in", fn);
    out.visit(prefix + ".out", fn);
  }
};

/// Post-norm encoder block: x + Attn(x) -> LN -> + FF -> LN.
struct EncoderLayer {
  MultiHeadAttention attn;
  FeedForward ff;
  LayerNorm norm1, norm2;

  struct Cache {
    MultiHeadAttention::Cache attn;
    Matrix attn_mask;
    LayerNorm::Cache norm1;
    FeedForward::Cache ff;
    Matrix ff_mask;
    LayerNorm::Cache norm2;
  };

  EncoderLayer() = default;
  EncoderLayer(Eigen::Index d_model, Eigen::Index heads, Eigen::Index d_ff, Rng& rng)
      : attn(d_model, heads, rng), ff(d_model, d_ff, rng), norm1(d_model), norm2(d_model) {}

  Matrix forward(const Matrix& x, const Context& ctx, Cache* c) const {
    Matrix a = attn.forward(x, x, ctx, c ? &c->attn : nullptr);
    a = dropout(a, ctx, c ? &c->attn_mask : nullptr);
    Matrix h1 = norm1.forward(x + a, c ? &c->norm1 : nullptr);
    Matrix f = ff.forward(h1, ctx, c ? &c->ff : nullptr);
    f = dropout(f, ctx, c ? &c->ff_mask : nullptr);
    return norm2.forward(h1 + f, c ? &c->norm2 : nullptr);
  }

  Matrix backward(const Cache& c, const Matrix& dy) {
    Matrix dsum2 = norm2.backward(c.norm2, dy);
    Matrix dh1 = dsum2 + ff.backward(c.ff, dropout_backward(dsum2, c.ff_mask));
    Matrix dsum1 = norm1.backward(c.norm1, dh1);
    Matrix dx = dsum1;
    Matrix dmem = Matrix::Zero(dsum1.rows(), dsum1.cols());
    dx += attn.backward(c.attn, dropout_backward(dsum1, c.attn_mask), dmem);
    return dx + dmem;
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    attn.visit(prefix + ".self_attn", fn);
    norm1.visit(prefix + ".norm1", fn);
    ff.visit(prefix + ".ff", fn);
    norm2.visit(prefix + ".norm2", fn);
  }
};

/// Post-norm decoder block: self-attention over the queries, cross-attention to the
/// encoder memory, feed-forward. No causal mask: all horizon steps decode in one pass.
struct DecoderLayer {
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ff;
  LayerNorm norm1, norm2, norm3;

  struct Cache {
    MultiHeadAttention::Cache self_attn;
    Matrix self_mask;
    LayerNorm::Cache norm1;
    MultiHeadAttention::Cache cross_attn;
    Matrix cross_mask;
    LayerNorm::Cache norm2;
    FeedForward::Cache ff;
    Matrix ff_mask;
    LayerNorm::Cache norm3;
  };

  DecoderLayer() = default;
  DecoderLayer(Eigen::Index d_model, Eigen::Index heads, Eigen::Index d_ff, Rng& rng)
      : self_attn(d_model, heads, rng),
        cross_attn(d_model, heads, rng),
        ff(d_model, d_ff, rng),
        norm1(d_model),
        norm2(d_model),
        norm3(d_model) {}

  Matrix forward(const Matrix& x, const Matrix& memory, const Context& ctx, Cache* c) const {
    Matrix s = self_attn.forward(x, x, ctx, c ? &c->self_attn : nullptr);
    s = dropout(s, ctx, c ? &c->self_mask : nullptr);
    Matrix h1 = norm1.forward(x + s, c ? &c->norm1 : nullptr);
    Matrix a = cross_attn.forward(h1, memory, ctx, c ? &c->cross_attn : nullptr);
    a = dropout(a, ctx, c ? &c->cross_mask : nullptr);
    Matrix h2 = norm2.forward(h1 + a, c ? &c->norm2 : nullptr);
    Matrix f = ff.forward(h2, ctx, c ? &c->ff : nullptr);
    f = dropout(f, ctx, c ? &c->ff_mask : nullptr);
    return norm3.forward(h2 + f, c ? &c->norm3 : nullptr);
  }

  /// Returns d(x); adds d(memory) into grad_memory.
  Matrix backward(const Cache& c, const Matrix& dy, Matrix& grad_memory) {
    Matrix dsum3 = norm3.backward(c.norm3, dy);
    Matrix dh2 = dsum3 + ff.backward(c.ff, dropout_backward(dsum3, c.ff_mask));
    Matrix dsum2 = norm2.backward(c.norm2, dh2);
    Matrix dh1 = dsum2 + cross_attn.backward(c.cross_attn, dropout_backward(dsum2, c.cross_mask),
                                             grad_memory);
    Matrix dsum1 = norm1.backward(c.norm1, dh1);
    Matrix dself = Matrix::Zero(dsum1.rows(), dsum1.cols());
    Matrix dx = dsum1 + self_attn.backward(c.self_attn, dropout_backward(dsum1, c.self_mask), dself);
    return dx + dself;
  }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    self_attn.visit(prefix + ".self_attn", fn);
    norm1.visit(prefix + ".norm1", fn);
    cross_attn.visit(prefix + ".cross_attn", fn);
    norm2.visit(prefix + ".norm2", fn);
    ff.visit(prefix + ".ff", fn);
    norm3.visit(prefix + ".norm3", fn);
  }
};

/// Fixed sinusoidal encodings, rows = positions.
inline Matrix sinusoidal_positions(Eigen::Index length, Eigen::Index d_model) {
  Matrix pe(length, d_model);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (Eigen::Index i = 0; i < d_model; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace odisar::nn

#endif  // ODISAR_NN_HPP
