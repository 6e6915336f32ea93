#include "hsn/adam.hpp"

#include "hsn/errors.hpp"

#include <cmath>

namespace hsn {

Adam::Adam(nn::ParamList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg.lr > 0.0) || !(cfg.eps > 0.0) || cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
      cfg.beta2 >= 1.0) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    v_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

void adam_step(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, std::int64_t t, const AdamConfig& cfg) {
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) throw ConfigError("adam_step: shape mismatch");
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  param.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
}

void Adam::step() {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor p = params_[i].tensor;
    adam_step(p.mutable_value(), p.grad(), m_[i], v_[i], t_, cfg_);
  }
}

}  // namespace hsn
