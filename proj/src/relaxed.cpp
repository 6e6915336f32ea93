#include "hsn/relaxed.hpp"

#include "hsn/errors.hpp"
#include "hsn/ops.hpp"

#include <cmath>

namespace hsn {

Temperature::Temperature(double t) : tau(t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("temperature must be positive and finite");
}

Matrix gumbel_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix g(rows, cols);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.gumbel();
  return g;
}

Matrix logistic_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix g(rows, cols);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double g1 = rng.gumbel();
    const double g2 = rng.gumbel();
    g.data()[i] = g1 - g2;
  }
  return g;
}

namespace {

void reject_nan(const Matrix& m, const char* op) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (std::isnan(m.data()[i])) throw NumericError(std::string(op) + ": NaN input");
  }
}

}  // namespace

Tensor gumbel_softmax_with_noise(const Tensor& log_probs, const Matrix& noise, Temperature tau) {
  reject_nan(log_probs.value(), "gumbel_softmax_sample");
  Tensor clamped = ops::clamp(log_probs, -kLogitClamp, kLogitClamp);
  Tensor perturbed = ops::add(clamped, Tensor(noise));
  return ops::softmax_rows(ops::scale(perturbed, 1.0 / tau.tau));
}

Tensor gumbel_softmax_sample(const Tensor& log_probs, Temperature tau, Rng& rng) {
  return gumbel_softmax_with_noise(log_probs, gumbel_noise(log_probs.rows(), log_probs.cols(), rng), tau);
}

Tensor binary_concrete_with_noise(const Tensor& logits, const Matrix& noise, Temperature tau) {
  reject_nan(logits.value(), "binary_concrete_sample");
  Tensor clamped = ops::clamp(logits, -kLogitClamp, kLogitClamp);
  return ops::sigmoid(ops::scale(ops::add(clamped, Tensor(noise)), 1.0 / tau.tau));
}

Tensor binary_concrete_sample(const Tensor& logits, Temperature tau, Rng& rng) {
  return binary_concrete_with_noise(logits, logistic_noise(logits.rows(), logits.cols(), rng), tau);
}

Eigen::Index harden(const Eigen::Ref<const RowVector>& relaxed) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < relaxed.size(); ++i) {
    if (relaxed(i) > relaxed(best)) best = i;
  }
  return best;
}

}  // namespace hsn
