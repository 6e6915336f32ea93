#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tensor is a shared handle to a node in a dynamically built
// graph; calling backward() on a scalar output accumulates gradients into
// every reachable node that requires them.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace hsn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

namespace ad {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
  Matrix& grad_ref();
};

/// RAII switch that disables graph construction on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace ad

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false);
  static Tensor constant(Eigen::Index rows, Eigen::Index cols, double v);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  /// Gradient accumulated by the last backward pass; zeros if none reached this node.
  Matrix grad() const;
  void zero_grad();

  /// Seeds d(this)/d(this) = 1 and propagates. Requires a 1x1 tensor.
  void backward() const;

  /// Detached copy sharing no graph history.
  Tensor detach() const;

  const std::shared_ptr<ad::Node>& node() const { return node_; }

  // Build an output node. If any input requires grad (and grad mode is on)
  // the backward closure is recorded; otherwise the node is a constant.
  static Tensor make(Matrix value, std::vector<Tensor> inputs,
                     std::function<void(ad::Node&)> backward_fn);

 private:
  std::shared_ptr<ad::Node> node_;
};

}  // namespace hsn
