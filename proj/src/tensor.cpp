#include "hsn/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace hsn {
namespace ad {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Matrix& Node::grad_ref() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  return grad;
}

void Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  grad_ref() += g;
}

}  // namespace ad

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<ad::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m), requires_grad);
}

Tensor Tensor::zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad) {
  return Tensor(Matrix::Zero(rows, cols), requires_grad);
}

Tensor Tensor::constant(Eigen::Index rows, Eigen::Index cols, double v) {
  return Tensor(Matrix::Constant(rows, cols, v), false);
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("item() on non-scalar tensor");
  return node_->value(0, 0);
}

Matrix Tensor::grad() const {
  if (node_->grad.rows() == rows() && node_->grad.cols() == cols()) return node_->grad;
  return Matrix::Zero(rows(), cols());
}

void Tensor::zero_grad() { node_->grad.resize(0, 0); }

Tensor Tensor::detach() const { return Tensor(node_->value, false); }

Tensor Tensor::make(Matrix value, std::vector<Tensor> inputs,
                    std::function<void(ad::Node&)> backward_fn) {
  Tensor out;
  out.node_ = std::make_shared<ad::Node>();
  out.node_->value = std::move(value);
  if (!ad::grad_enabled()) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs.reserve(inputs.size());
  for (auto& t : inputs) out.node_->inputs.push_back(t.node_);
  out.node_->backward_fn = std::move(backward_fn);
  return out;
}

void Tensor::backward() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("backward() requires a scalar output");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS for a topological order.
  std::vector<ad::Node*> order;
  std::unordered_set<ad::Node*> visited;
  std::vector<std::pair<ad::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->inputs.size()) {
      ad::Node* child = n->inputs[idx++].get();
      if (child->requires_grad && child->backward_fn && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_ref().setConstant(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    ad::Node* n = *it;
    if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
  }
  // Intermediate gradients are not needed after the pass.
  for (ad::Node* n : order) {
    if (n != node_.get() && n->backward_fn) n->grad.resize(0, 0);
  }
}

}  // namespace hsn
