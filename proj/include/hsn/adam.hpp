#pragma once

#include "hsn/nn.hpp"

namespace hsn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam() = default;
  Adam(nn::ParamList params, AdamConfig cfg);

  void zero_grad();
  /// Applies one update from the gradients currently stored on the parameters.
  void step();

  const nn::ParamList& params() const { return params_; }
  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return t_; }

  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  nn::ParamList params_;
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  std::int64_t t_ = 0;
};

/// Single-tensor update used by Adam::step.
void adam_step(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, std::int64_t t, const AdamConfig& cfg);

}  // namespace hsn
