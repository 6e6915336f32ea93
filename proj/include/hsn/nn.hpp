#pragma once

// Parameter containers and layers shared by the encoder, decoder and edge
// scorer.

#include "hsn/ops.hpp"
#include "hsn/rng.hpp"

#include <string>
#include <vector>

namespace hsn::nn {

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

/// Trainable tensor with entries drawn from Normal(0, stddev).
Tensor normal_param(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
Tensor zero_param(Eigen::Index rows, Eigen::Index cols);
Tensor constant_param(Eigen::Index rows, Eigen::Index cols, double v);

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  static Linear create(Eigen::Index in, Eigen::Index out, Rng& rng, double stddev = 0.02);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  static LayerNorm create(Eigen::Index dim);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Fixed sinusoidal position table, one row per position.
Matrix sinusoidal_encoding(Eigen::Index positions, Eigen::Index dim);

/// Inverted dropout; identity when `training` is false or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

}  // namespace hsn::nn
