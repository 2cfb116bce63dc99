// Central finite-difference oracle for DTModel gradients. Test-only: it uses nothing
// but eval-mode forward passes and the loss definitions written out here.

#ifndef ODISAR_TESTS_GRADIENT_ORACLE_HPP
#define ODISAR_TESTS_GRADIENT_ORACLE_HPP

#include "odisar/dtm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace odisar::testing {

/// Sum of squared entries divided by the number of rows, written independently of
/// the library's loss helpers.
inline double oracle_step_mse(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double d = a(i, j) - b(i, j);
      s += d * d;
    }
  }
  return s / static_cast<double>(a.rows());
}

struct GroupError {
  double relative = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, floor) per
/// parameter tensor, for L = forecast_weight * L_forecast + recon_weight * L_recon where the
/// forecast inside L_recon is frozen at its unperturbed value. The floor keeps tensors
/// whose exact gradient is zero (attention key biases: softmax is shift invariant)
/// from dividing finite-difference round-off by zero.
inline std::map<std::string, GroupError> gradient_check(DTModel model, const Matrix& x,
                                                        const Matrix& y,
                                                        double forecast_weight = 1.0,
                                                        double recon_weight = 1.0,
                                                        double eps = 1e-5,
                                                        double floor = 1e-5) {
  const Matrix frozen = model.forward(x, nn::Mode::Eval).forecast;
  auto loss = [&](const DTModel& m) {
    const auto out = m.forward(x, nn::Mode::Eval);
    return forecast_weight * oracle_step_mse(out.forecast, y) +
           recon_weight * oracle_step_mse(out.recon, frozen);
  };

  // Analytic gradients via the model's own backward pass.
  model.zero_grad();
  {
    Rng unused(0);
    DTModel::Cache cache;
    const auto out = model.forward(x, nn::Mode::Train, &unused, &cache);
    const double k = 2.0 / static_cast<double>(y.rows());
    model.backward(cache, forecast_weight * k * (out.forecast - y),
                   recon_weight * k * (out.recon - out.forecast));
  }
  std::map<std::string, Matrix> analytic;
  model.visit([&](const std::string& name, Matrix&, Matrix& g) { analytic[name] = g; });

  std::map<std::string, GroupError> result;
  model.visit([&](const std::string& name, Matrix& value, Matrix&) {
    Matrix numeric(value.rows(), value.cols());
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + eps;
      const double up = loss(model);
      value.data()[i] = saved - eps;
      const double down = loss(model);
      value.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2.0 * eps);
    }
    const Matrix& a = analytic[name];
    GroupError e;
    e.analytic_norm = a.norm();
    e.numeric_norm = numeric.norm();
    const double denom = std::max({e.analytic_norm, e.numeric_norm, floor});
    e.relative = (a - numeric).norm() / denom;
    result[name] = e;
  });
  return result;
}

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.dropout = 0.0;
  c.n_encoder_layers = 2;
  c.n_decoder_layers = 2;
  c.w = 4;
  c.h = 2;
  c.d_features = 2;
  return c;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

}  // namespace odisar::testing

#endif  // ODISAR_TESTS_GRADIENT_ORACLE_HPP
