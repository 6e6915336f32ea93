#pragma once

// Gumbel-Softmax and binary-concrete relaxations of categorical and
// Bernoulli sampling. Logits are clamped to [-30, 30] before noise is added.

#include "hsn/rng.hpp"
#include "hsn/tensor.hpp"

namespace hsn {

inline constexpr double kLogitClamp = 30.0;

struct Temperature {
  double tau = 1.0;
  explicit Temperature(double t);
};

/// Matrix of standard Gumbel draws.
Matrix gumbel_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Row-wise relaxed one-hot samples softmax((log_probs + g) / tau).
/// log_probs may contain -inf (clamped); NaN raises NumericError.
Tensor gumbel_softmax_sample(const Tensor& log_probs, Temperature tau, Rng& rng);
Tensor gumbel_softmax_with_noise(const Tensor& log_probs, const Matrix& noise, Temperature tau);

/// Elementwise two-class Gumbel-Softmax; returns the first-class coordinate.
Tensor binary_concrete_sample(const Tensor& logits, Temperature tau, Rng& rng);
/// `noise` holds g1 - g2 for each entry.
Tensor binary_concrete_with_noise(const Tensor& logits, const Matrix& noise, Temperature tau);
/// Difference of two independent Gumbel draws, one per entry.
Matrix logistic_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Argmax with ties broken toward the lowest index.
Eigen::Index harden(const Eigen::Ref<const RowVector>& relaxed);

}  // namespace hsn
