#include "hsn/ops.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hsn::ops {

namespace {

using ad::Node;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
  }
}

Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return Tensor::make(a.value() + b.value(), {a, b}, [](Node& self) {
    in(self, 0).accumulate(self.grad);
    in(self, 1).accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return Tensor::make(a.value() - b.value(), {a, b}, [](Node& self) {
    in(self, 0).accumulate(self.grad);
    in(self, 1).accumulate(-self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return Tensor::make(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    if (in(self, 0).requires_grad) in(self, 0).accumulate(self.grad.cwiseProduct(in(self, 1).value));
    if (in(self, 1).requires_grad) in(self, 1).accumulate(self.grad.cwiseProduct(in(self, 0).value));
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  Matrix out = a.value().cwiseQuotient(b.value());
  return Tensor::make(out, {a, b}, [](Node& self) {
    const Matrix& bv = in(self, 1).value;
    if (in(self, 0).requires_grad) in(self, 0).accumulate(self.grad.cwiseQuotient(bv));
    if (in(self, 1).requires_grad) {
      in(self, 1).accumulate(-self.grad.cwiseProduct(self.value).cwiseQuotient(bv));
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return Tensor::make(a.value() * s, {a}, [s](Node& self) { in(self, 0).accumulate(self.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  return Tensor::make(a.value().array() + s, {a},
                      [](Node& self) { in(self, 0).accumulate(self.grad); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return Tensor::make(std::move(out), {a, row}, [](Node& self) {
    in(self, 0).accumulate(self.grad);
    if (in(self, 1).requires_grad) in(self, 1).accumulate(self.grad.colwise().sum());
  });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("mul_row: shape mismatch");
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return Tensor::make(std::move(out), {a, row}, [](Node& self) {
    const Matrix& av = in(self, 0).value;
    const Matrix& rv = in(self, 1).value;
    if (in(self, 0).requires_grad) {
      in(self, 0).accumulate(self.grad.array().rowwise() * rv.row(0).array());
    }
    if (in(self, 1).requires_grad) {
      in(self, 1).accumulate(self.grad.cwiseProduct(av).colwise().sum());
    }
  });
}

Tensor add_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("add_col: shape mismatch");
  Matrix out = a.value().colwise() + col.value().col(0);
  return Tensor::make(std::move(out), {a, col}, [](Node& self) {
    in(self, 0).accumulate(self.grad);
    if (in(self, 1).requires_grad) in(self, 1).accumulate(self.grad.rowwise().sum());
  });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("mul_col: shape mismatch");
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return Tensor::make(std::move(out), {a, col}, [](Node& self) {
    const Matrix& av = in(self, 0).value;
    const Matrix& cv = in(self, 1).value;
    if (in(self, 0).requires_grad) {
      in(self, 0).accumulate(self.grad.array().colwise() * cv.col(0).array());
    }
    if (in(self, 1).requires_grad) {
      in(self, 1).accumulate(self.grad.cwiseProduct(av).rowwise().sum());
    }
  });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("mul_scalar: expects 1x1");
  const double sv = s.value()(0, 0);
  return Tensor::make(a.value() * sv, {a, s}, [](Node& self) {
    const double sv = in(self, 1).value(0, 0);
    if (in(self, 0).requires_grad) in(self, 0).accumulate(self.grad * sv);
    if (in(self, 1).requires_grad) {
      Matrix g(1, 1);
      g(0, 0) = self.grad.cwiseProduct(in(self, 0).value).sum();
      in(self, 1).accumulate(g);
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return Tensor::make(std::move(out), {a, b}, [](Node& self) {
    if (in(self, 0).requires_grad) in(self, 0).accumulate(self.grad * in(self, 1).value.transpose());
    if (in(self, 1).requires_grad) in(self, 1).accumulate(in(self, 0).value.transpose() * self.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Matrix out = a.value() * b.value().transpose();
  return Tensor::make(std::move(out), {a, b}, [](Node& self) {
    if (in(self, 0).requires_grad) in(self, 0).accumulate(self.grad * in(self, 1).value);
    if (in(self, 1).requires_grad) in(self, 1).accumulate(self.grad.transpose() * in(self, 0).value);
  });
}

Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return Tensor::make(std::move(out), {a},
                      [](Node& self) { in(self, 0).accumulate(self.grad.transpose()); });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return Tensor::make(std::move(out), {a}, [](Node& self) {
    Node& x = in(self, 0);
    x.accumulate(Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Tensor row_sum(const Tensor& a) {
  Matrix out = a.value().rowwise().sum();
  return Tensor::make(std::move(out), {a}, [](Node& self) {
    Node& x = in(self, 0);
    Matrix g = self.grad.col(0).replicate(1, x.value.cols());
    x.accumulate(g);
  });
}

Tensor col_mean(const Tensor& a) {
  const double n = static_cast<double>(a.rows());
  Matrix out = a.value().colwise().sum() / n;
  return Tensor::make(std::move(out), {a}, [n](Node& self) {
    Node& x = in(self, 0);
    Matrix g = (self.grad.row(0) / n).replicate(x.value.rows(), 1);
    x.accumulate(g);
  });
}

Tensor exp(const Tensor& a) {
  Matrix out = a.value().array().exp();
  return Tensor::make(std::move(out), {a},
                      [](Node& self) { in(self, 0).accumulate(self.grad.cwiseProduct(self.value)); });
}

Tensor safe_log(const Tensor& a, double floor) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = v > 0.0 ? std::max(std::log(v), floor) : floor;
  }
  return Tensor::make(std::move(out), {a}, [floor](Node& self) {
    const Matrix& x = in(self, 0).value;
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      g.data()[i] = (v > 0.0 && self.value.data()[i] > floor) ? self.grad.data()[i] / v : 0.0;
    }
    in(self, 0).accumulate(g);
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix out = a.value().unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  return Tensor::make(std::move(out), {a}, [](Node& self) {
    Matrix d = self.value.array() * (1.0 - self.value.array());
    in(self, 0).accumulate(self.grad.cwiseProduct(d));
  });
}

Tensor log_sigmoid(const Tensor& a) {
  // log sigmoid(x) = -softplus(-x)
  Matrix out = a.value().unaryExpr([](double v) {
    return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
  });
  return Tensor::make(std::move(out), {a}, [](Node& self) {
    // d/dx = 1 - sigmoid(x) = sigmoid(-x)
    Matrix d = in(self, 0).value.unaryExpr([](double v) {
      return v >= 0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
    });
    in(self, 0).accumulate(self.grad.cwiseProduct(d));
  });
}

Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh();
  return Tensor::make(std::move(out), {a}, [](Node& self) {
    Matrix d = 1.0 - self.value.array().square();
    in(self, 0).accumulate(self.grad.cwiseProduct(d));
  });
}

Tensor gelu(const Tensor& a) {
  // Exact erf form.
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  Matrix out = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
  return Tensor::make(std::move(out), {a}, [](Node& self) {
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Matrix d = in(self, 0).value.unaryExpr([inv_sqrt2pi](double x) {
      return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
    });
    in(self, 0).accumulate(self.grad.cwiseProduct(d));
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return Tensor::make(std::move(out), {a}, [lo, hi](Node& self) {
    const Matrix& x = in(self, 0).value;
    Matrix g = self.grad;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      if (v < lo || v > hi) g.data()[i] = 0.0;
    }
    in(self, 0).accumulate(g);
  });
}

Tensor softmax_rows(const Tensor& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  }
  return Tensor::make(std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix gy = self.grad.cwiseProduct(y);
    Eigen::VectorXd s = gy.rowwise().sum();
    Matrix g = gy - (y.array().colwise() * s.array()).matrix();
    in(self, 0).accumulate(g);
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double m = row.maxCoeff();
    const double lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
  return Tensor::make(std::move(out), {a}, [](Node& self) {
    Matrix p = self.value.array().exp();
    Eigen::VectorXd s = self.grad.rowwise().sum();
    Matrix g = self.grad - (p.array().colwise() * s.array()).matrix();
    in(self, 0).accumulate(g);
  });
}

Tensor gather_rows(const Tensor& a, std::span<const std::int64_t> idx) {
  const Matrix& x = a.value();
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= x.rows()) throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
  }
  std::vector<std::int64_t> ids(idx.begin(), idx.end());
  return Tensor::make(std::move(out), {a}, [ids = std::move(ids)](Node& self) {
    Node& x = in(self, 0);
    if (!x.requires_grad) return;
    Matrix& g = x.grad_ref();
    for (std::size_t r = 0; r < ids.size(); ++r) g.row(ids[r]) += self.grad.row(static_cast<Eigen::Index>(r));
  });
}

Tensor pick(const Tensor& a, std::span<const std::int64_t> idx) {
  const Matrix& x = a.value();
  if (static_cast<Eigen::Index>(idx.size()) != x.rows()) throw std::invalid_argument("pick: size mismatch");
  Matrix out(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (idx[r] < 0 || idx[r] >= x.cols()) throw std::out_of_range("pick: index out of range");
    out(r, 0) = x(r, idx[r]);
  }
  std::vector<std::int64_t> ids(idx.begin(), idx.end());
  return Tensor::make(std::move(out), {a}, [ids = std::move(ids)](Node& self) {
    Node& x = in(self, 0);
    if (!x.requires_grad) return;
    Matrix& g = x.grad_ref();
    for (std::size_t r = 0; r < ids.size(); ++r) g(static_cast<Eigen::Index>(r), ids[r]) += self.grad(r, 0);
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows");
  Matrix out = a.value().middleRows(start, count);
  return Tensor::make(std::move(out), {a}, [start, count](Node& self) {
    if (in(self, 0).requires_grad) in(self, 0).grad_ref().middleRows(start, count) += self.grad;
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
  Matrix out = a.value().middleCols(start, count);
  return Tensor::make(std::move(out), {a}, [start, count](Node& self) {
    if (in(self, 0).requires_grad) in(self, 0).grad_ref().middleCols(start, count) += self.grad;
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return Tensor::make(std::move(out), parts, [offsets = std::move(offsets)](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      Node& x = *self.inputs[i];
      if (x.requires_grad) x.accumulate(self.grad.middleRows(offsets[i], x.value.rows()));
    }
  });
}

Tensor tile_rows(const Tensor& a, Eigen::Index times) {
  Matrix out = a.value().replicate(times, 1);
  const Eigen::Index r = a.rows();
  return Tensor::make(std::move(out), {a}, [times, r](Node& self) {
    Matrix g = Matrix::Zero(r, self.grad.cols());
    for (Eigen::Index t = 0; t < times; ++t) g += self.grad.middleRows(t * r, r);
    in(self, 0).accumulate(g);
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows();
  const Eigen::Index d = xv.cols();
  if (gain.cols() != d || bias.cols() != d) throw std::invalid_argument("layer_norm_rows: width mismatch");
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
               bias.value().row(0).array();
  return Tensor::make(std::move(out), {x, gain, bias},
                      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                        const Matrix& g = self.grad;
                        Node& gn = in(self, 1);
                        if (gn.requires_grad) gn.accumulate(g.cwiseProduct(xhat).colwise().sum());
                        if (in(self, 2).requires_grad) in(self, 2).accumulate(g.colwise().sum());
                        if (in(self, 0).requires_grad) {
                          Matrix gx = g.array().rowwise() * gn.value.row(0).array();
                          Eigen::VectorXd m1 = gx.rowwise().mean();
                          Eigen::VectorXd m2 = gx.cwiseProduct(xhat).rowwise().mean();
                          Matrix dx = (gx.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix();
                          dx = dx.array().colwise() * inv_std.array();
                          in(self, 0).accumulate(dx);
                        }
                      });
}

Tensor floor_threshold(const Tensor& x, double threshold) {
  Matrix out = x.value().cwiseMax(threshold);
  return Tensor::make(std::move(out), {x}, [threshold](Node& self) {
    const Matrix& xv = in(self, 0).value;
    Matrix g = self.grad;
    for (Eigen::Index i = 0; i < xv.size(); ++i) {
      if (!(xv.data()[i] > threshold)) g.data()[i] = 0.0;
    }
    in(self, 0).accumulate(g);
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionShape& s,
                 const Tensor& prefix_k, const Tensor& prefix_v) {
  const Eigen::Index d = q.cols();
  if (k.cols() != d || v.cols() != d) throw std::invalid_argument("attention: width mismatch");
  if (d % s.heads != 0) throw std::invalid_argument("attention: width not divisible by heads");
  if (q.rows() != s.batch * s.tq || k.rows() != s.batch * s.tk || v.rows() != s.batch * s.tk) {
    throw std::invalid_argument("attention: row count does not match batch shape");
  }
  if (s.causal && s.tq != s.tk) throw std::invalid_argument("attention: causal mask needs tq == tk");
  const bool has_prefix = s.prefix > 0;
  if (has_prefix) {
    if (!prefix_k.defined() || !prefix_v.defined() || prefix_k.rows() != s.batch * s.prefix ||
        prefix_v.rows() != s.batch * s.prefix || prefix_k.cols() != d || prefix_v.cols() != d) {
      throw std::invalid_argument("attention: prefix shape mismatch");
    }
  }
  const Eigen::Index dh = d / s.heads;
  const Eigen::Index nk = s.prefix + s.tk;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // probs: one (tq x nk) block per (batch, head), stacked vertically.
  Matrix probs(s.batch * s.heads * s.tq, nk);
  Matrix out = Matrix::Zero(s.batch * s.tq, d);
  Matrix keys(nk, dh);
  Matrix vals(nk, dh);
  for (Eigen::Index b = 0; b < s.batch; ++b) {
    for (Eigen::Index h = 0; h < s.heads; ++h) {
      if (has_prefix) {
        keys.topRows(s.prefix) = prefix_k.value().block(b * s.prefix, h * dh, s.prefix, dh);
        vals.topRows(s.prefix) = prefix_v.value().block(b * s.prefix, h * dh, s.prefix, dh);
      }
      keys.bottomRows(s.tk) = k.value().block(b * s.tk, h * dh, s.tk, dh);
      vals.bottomRows(s.tk) = v.value().block(b * s.tk, h * dh, s.tk, dh);
      auto p = probs.middleRows((b * s.heads + h) * s.tq, s.tq);
      p.noalias() = q.value().block(b * s.tq, h * dh, s.tq, dh) * keys.transpose();
      p *= inv_sqrt;
      for (Eigen::Index t = 0; t < s.tq; ++t) {
        auto row = p.row(t);
        if (s.causal) {
          for (Eigen::Index j = s.prefix + t + 1; j < nk; ++j) row(j) = -std::numeric_limits<double>::infinity();
        }
        const double m = row.maxCoeff();
        row = (row.array() - m).exp();
        row /= row.sum();
      }
      out.block(b * s.tq, h * dh, s.tq, dh).noalias() = p * vals;
    }
  }

  std::vector<Tensor> inputs{q, k, v};
  if (has_prefix) {
    inputs.push_back(prefix_k);
    inputs.push_back(prefix_v);
  }
  return Tensor::make(std::move(out), inputs, [s, dh, nk, inv_sqrt, probs = std::move(probs)](Node& self) {
    const bool has_prefix = s.prefix > 0;
    Node& qn = in(self, 0);
    Node& kn = in(self, 1);
    Node& vn = in(self, 2);
    Matrix dq = Matrix::Zero(qn.value.rows(), qn.value.cols());
    Matrix dk = Matrix::Zero(kn.value.rows(), kn.value.cols());
    Matrix dv = Matrix::Zero(vn.value.rows(), vn.value.cols());
    Matrix dpk, dpv;
    if (has_prefix) {
      dpk = Matrix::Zero(in(self, 3).value.rows(), in(self, 3).value.cols());
      dpv = Matrix::Zero(in(self, 4).value.rows(), in(self, 4).value.cols());
    }
    Matrix keys(nk, dh), vals(nk, dh), dkeys(nk, dh), dvals(nk, dh), dp(s.tq, nk);
    for (Eigen::Index b = 0; b < s.batch; ++b) {
      for (Eigen::Index h = 0; h < s.heads; ++h) {
        if (has_prefix) {
          keys.topRows(s.prefix) = in(self, 3).value.block(b * s.prefix, h * dh, s.prefix, dh);
          vals.topRows(s.prefix) = in(self, 4).value.block(b * s.prefix, h * dh, s.prefix, dh);
        }
        keys.bottomRows(s.tk) = kn.value.block(b * s.tk, h * dh, s.tk, dh);
        vals.bottomRows(s.tk) = vn.value.block(b * s.tk, h * dh, s.tk, dh);
        const auto p = probs.middleRows((b * s.heads + h) * s.tq, s.tq);
        const auto go = self.grad.block(b * s.tq, h * dh, s.tq, dh);
        dvals.noalias() = p.transpose() * go;
        dp.noalias() = go * vals.transpose();
        Eigen::VectorXd rs = dp.cwiseProduct(p).rowwise().sum();
        Matrix ds = p.cwiseProduct(dp.colwise() - rs) * inv_sqrt;
        dq.block(b * s.tq, h * dh, s.tq, dh).noalias() = ds * keys;
        dkeys.noalias() = ds.transpose() * qn.value.block(b * s.tq, h * dh, s.tq, dh);
        dk.block(b * s.tk, h * dh, s.tk, dh) = dkeys.bottomRows(s.tk);
        dv.block(b * s.tk, h * dh, s.tk, dh) = dvals.bottomRows(s.tk);
        if (has_prefix) {
          dpk.block(b * s.prefix, h * dh, s.prefix, dh) = dkeys.topRows(s.prefix);
          dpv.block(b * s.prefix, h * dh, s.prefix, dh) = dvals.topRows(s.prefix);
        }
      }
    }
    qn.accumulate(dq);
    kn.accumulate(dk);
    vn.accumulate(dv);
    if (has_prefix) {
      in(self, 3).accumulate(dpk);
      in(self, 4).accumulate(dpv);
    }
  });
}

Tensor pairwise_mlp(const Tensor& u, const Tensor& v, const Tensor& b1, const Tensor& w2,
                    const Tensor& b2) {
  const Eigen::Index n = u.rows();
  const Eigen::Index h = u.cols();
  if (v.rows() != n || v.cols() != h || b1.cols() != h || w2.cols() != h || b2.rows() != 1 || b2.cols() != 1) {
    throw std::invalid_argument("pairwise_mlp: shape mismatch");
  }
  Matrix out(n, n);
  Matrix uv = u.value().rowwise() + b1.value().row(0);
  const auto w = w2.value().row(0);
  const double bias = b2.value()(0, 0);
  Eigen::RowVectorXd act(h);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      act = (uv.row(i) + v.value().row(j)).array().tanh();
      out(i, j) = act.dot(w) + bias;
    }
  }
  return Tensor::make(std::move(out), {u, v, b1, w2, b2}, [n, h](Node& self) {
    const Matrix& uval = in(self, 0).value;
    const Matrix& vval = in(self, 1).value;
    const auto b1v = in(self, 2).value.row(0);
    const auto w = in(self, 3).value.row(0);
    Matrix du = Matrix::Zero(n, h);
    Matrix dv = Matrix::Zero(n, h);
    Eigen::RowVectorXd dw = Eigen::RowVectorXd::Zero(h);
    Eigen::RowVectorXd pre(h), act(h), dpre(h);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double g = self.grad(i, j);
        if (g == 0.0) continue;
        act = (uval.row(i) + vval.row(j) + b1v).array().tanh();
        dw += g * act;
        dpre = (g * w.array()) * (1.0 - act.array().square());
        du.row(i) += dpre;
        dv.row(j) += dpre;
      }
    }
    in(self, 0).accumulate(du);
    in(self, 1).accumulate(dv);
    if (in(self, 2).requires_grad) in(self, 2).accumulate(du.colwise().sum());
    if (in(self, 3).requires_grad) in(self, 3).accumulate(dw);
    if (in(self, 4).requires_grad) {
      Matrix gb(1, 1);
      gb(0, 0) = self.grad.sum();
      in(self, 4).accumulate(gb);
    }
  });
}

namespace {

// Column masses S(n,j) = sum_m w(n,m) adj(m,j) and their reciprocals with the
// zero-mass fallback encoded as recip == 0 and fallback flag set.
struct ColumnMass {
  Matrix recip;
  Matrix fallback;  // 1 where column mass is zero
};

ColumnMass column_mass(const Matrix& w, const Matrix& adj) {
  Matrix s = w * adj;
  ColumnMass cm{Matrix::Zero(s.rows(), s.cols()), Matrix::Zero(s.rows(), s.cols())};
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double v = s.data()[i];
    if (v > 0.0) {
      cm.recip.data()[i] = 1.0 / v;
    } else {
      cm.fallback.data()[i] = 1.0;
    }
  }
  return cm;
}

}  // namespace

Tensor batch_transition_mean(const Tensor& weights, const Tensor& adj) {
  const Eigen::Index b = weights.rows();
  const Eigen::Index k = weights.cols();
  if (adj.rows() != k || adj.cols() != k) throw std::invalid_argument("batch_transition_mean: shape mismatch");
  if (b == 0) throw std::invalid_argument("batch_transition_mean: empty batch");
  const Matrix& w = weights.value();
  const Matrix& a = adj.value();
  ColumnMass cm = column_mass(w, a);
  // mean_n w_n(k) r_n(j) = (W^T R / B)(k,j)
  Matrix m = (w.transpose() * cm.recip) / static_cast<double>(b);
  Matrix out = a.cwiseProduct(m);
  Eigen::RowVectorXd fb = cm.fallback.colwise().sum() / static_cast<double>(b);
  out.rowwise() += fb / static_cast<double>(k);

  return Tensor::make(std::move(out), {weights, adj}, [cm = std::move(cm)](Node& self) {
    const Matrix& w = in(self, 0).value;
    const Matrix& a = in(self, 1).value;
    const double bsz = static_cast<double>(w.rows());
    const Matrix& g = self.grad;
    Matrix ag = a.cwiseProduct(g);
    // C(n,j) = r_n(j) * sum_k g(k,j) w_n(k) a(k,j)
    Matrix c = cm.recip.cwiseProduct(w * ag);
    if (in(self, 0).requires_grad) {
      Matrix dw = (cm.recip * ag.transpose() - cm.recip.cwiseProduct(c) * a.transpose()) / bsz;
      in(self, 0).accumulate(dw);
    }
    if (in(self, 1).requires_grad) {
      Matrix da = (g.cwiseProduct(w.transpose() * cm.recip) - w.transpose() * cm.recip.cwiseProduct(c)) / bsz;
      in(self, 1).accumulate(da);
    }
  });
}

Tensor walk_step(const Tensor& z, const Tensor& weights, const Tensor& adj) {
  const Eigen::Index k = weights.cols();
  if (z.rows() != weights.rows() || z.cols() != k || adj.rows() != k || adj.cols() != k) {
    throw std::invalid_argument("walk_step: shape mismatch");
  }
  const Matrix& w = weights.value();
  const Matrix& a = adj.value();
  ColumnMass cm = column_mass(w, a);
  Matrix zr = z.value().cwiseProduct(cm.recip);
  Matrix out = w.cwiseProduct(zr * a.transpose());
  Eigen::VectorXd fb = z.value().cwiseProduct(cm.fallback).rowwise().sum() / static_cast<double>(k);
  out.colwise() += fb;

  return Tensor::make(std::move(out), {z, weights, adj}, [cm = std::move(cm)](Node& self) {
    const Matrix& zv = in(self, 0).value;
    const Matrix& w = in(self, 1).value;
    const Matrix& a = in(self, 2).value;
    const Matrix& g = self.grad;
    const double kk = static_cast<double>(w.cols());
    Matrix gw = g.cwiseProduct(w);
    Matrix gwa = gw * a;  // (n,j): sum_k g(n,k) w(n,k) a(k,j)
    if (in(self, 0).requires_grad) {
      Eigen::VectorXd gsum = g.rowwise().sum() / kk;
      Matrix dz = cm.recip.cwiseProduct(gwa) + (cm.fallback.array().colwise() * gsum.array()).matrix();
      in(self, 0).accumulate(dz);
    }
    Matrix zr = zv.cwiseProduct(cm.recip);
    Matrix c = zr.cwiseProduct(cm.recip).cwiseProduct(gwa);  // C(n,j) = z r^2 (g w a)
    if (in(self, 1).requires_grad) {
      Matrix dw = g.cwiseProduct(zr * a.transpose()) - c * a.transpose();
      in(self, 1).accumulate(dw);
    }
    if (in(self, 2).requires_grad) {
      Matrix da = gw.transpose() * zr - w.transpose() * c;
      in(self, 2).accumulate(da);
    }
  });
}

Tensor weighted_log_ratio(const Tensor& w, const Tensor& q, const Tensor& p) {
  require_same_shape(w, q, "weighted_log_ratio");
  require_same_shape(w, p, "weighted_log_ratio");
  static constexpr double kFloor = -1e9;
  auto lg = [](double v) { return v > 0.0 ? std::max(std::log(v), kFloor) : kFloor; };
  const Matrix& wv = w.value();
  const Matrix& qv = q.value();
  const Matrix& pv = p.value();
  double total = 0.0;
  for (Eigen::Index i = 0; i < wv.size(); ++i) {
    const double wi = wv.data()[i];
    if (wi == 0.0) continue;
    total += wi * (lg(qv.data()[i]) - lg(pv.data()[i]));
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  return Tensor::make(std::move(out), {w, q, p}, [lg](Node& self) {
    const double g = self.grad(0, 0);
    const Matrix& wv = in(self, 0).value;
    const Matrix& qv = in(self, 1).value;
    const Matrix& pv = in(self, 2).value;
    const Eigen::Index n = wv.size();
    if (in(self, 0).requires_grad) {
      Matrix dw(wv.rows(), wv.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        dw.data()[i] = wv.data()[i] == 0.0 ? 0.0 : g * (lg(qv.data()[i]) - lg(pv.data()[i]));
      }
      in(self, 0).accumulate(dw);
    }
    if (in(self, 1).requires_grad) {
      Matrix dq = Matrix::Zero(wv.rows(), wv.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        const double qi = qv.data()[i];
        if (wv.data()[i] != 0.0 && qi > 0.0) dq.data()[i] = g * wv.data()[i] / qi;
      }
      in(self, 1).accumulate(dq);
    }
    if (in(self, 2).requires_grad) {
      Matrix dp = Matrix::Zero(wv.rows(), wv.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        const double pi = pv.data()[i];
        if (wv.data()[i] != 0.0 && pi > 0.0) dp.data()[i] = -g * wv.data()[i] / pi;
      }
      in(self, 2).accumulate(dp);
    }
  });
}

Tensor bernoulli_kl_logits(const Tensor& logits, double p, const Matrix& mask) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("bernoulli_kl_logits: p must be in (0,1)");
  if (mask.rows() != logits.rows() || mask.cols() != logits.cols()) {
    throw std::invalid_argument("bernoulli_kl_logits: mask shape mismatch");
  }
  const double log_p = std::log(p);
  const double log_1p = std::log1p(-p);
  const double logit_p = log_p - log_1p;
  const Matrix& l = logits.value();
  double total = 0.0;
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    if (mask.data()[i] == 0.0) continue;
    const double x = l.data()[i];
    // log q and log(1-q) from the logit, numerically stable.
    const double log_q = x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
    const double log_1q = log_q - x;
    const double q = std::exp(log_q);
    total += q * (log_q - log_p) + (1.0 - q) * (log_1q - log_1p);
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  return Tensor::make(std::move(out), {logits}, [mask, logit_p](Node& self) {
    const Matrix& l = in(self, 0).value;
    Matrix g = Matrix::Zero(l.rows(), l.cols());
    for (Eigen::Index i = 0; i < l.size(); ++i) {
      if (mask.data()[i] == 0.0) continue;
      const double x = l.data()[i];
      const double q = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      // d/dx KL = q (1 - q) (x - logit(p))
      g.data()[i] = self.grad(0, 0) * q * (1.0 - q) * (x - logit_p);
    }
    in(self, 0).accumulate(g);
  });
}

}  // namespace hsn::ops
