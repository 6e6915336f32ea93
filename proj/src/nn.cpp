#include "hsn/nn.hpp"

#include "hsn/errors.hpp"

#include <cmath>

namespace hsn::nn {

Tensor normal_param(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, stddev);
  return Tensor(std::move(m), true);
}

Tensor zero_param(Eigen::Index rows, Eigen::Index cols) { return Tensor(Matrix::Zero(rows, cols), true); }

Tensor constant_param(Eigen::Index rows, Eigen::Index cols, double v) {
  return Tensor(Matrix::Constant(rows, cols, v), true);
}

Linear Linear::create(Eigen::Index in, Eigen::Index out, Rng& rng, double stddev) {
  return Linear{normal_param(in, out, stddev, rng), zero_param(1, out)};
}

Tensor Linear::operator()(const Tensor& x) const { return ops::add_row(ops::matmul(x, weight), bias); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm LayerNorm::create(Eigen::Index dim) { return LayerNorm{constant_param(1, dim, 1.0), zero_param(1, dim)}; }

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm_rows(x, gain, bias); }

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

Matrix sinusoidal_encoding(Eigen::Index positions, Eigen::Index dim) {
  Matrix pe(positions, dim);
  for (Eigen::Index pos = 0; pos < positions; ++pos) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < p ? 0.0 : keep;
  return ops::mul(x, Tensor(std::move(mask)));
}

}  // namespace hsn::nn
