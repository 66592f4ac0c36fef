#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ppm/matrix.hpp"

namespace ppm::nn {

/// One vertex of the recorded computation graph.
struct Node {
  Matrix value;
  Matrix grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  bool is_leaf = true;
  bool consumed = false;  // set once backward() has run through this node as a root
  std::vector<std::shared_ptr<Node>> parents;
  /// Propagates this->grad into the parents' grads.
  std::function<void(Node&)> backward_fn;

  /// grad += g, allocating a zero grad on first use.
  void accumulate(const Matrix& g);
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    grad += g;
  }
};

/// Handle to a node. Tensors are 2-D (rows x cols); vectors are 1 x n rows.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value);
  /// Leaf that accumulates gradients across backward passes.
  static Tensor parameter(Matrix value);
  static Tensor scalar(double v);

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  /// Zero-filled when no gradient has reached this tensor.
  Matrix grad() const;
  Matrix& mutable_grad();
  void zero_grad();

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::vector<std::int64_t> shape() const { return {rows(), cols()}; }
  double item() const;

  /// Reverse-mode sweep from a 1x1 tensor. The recorded graph is released
  /// afterwards; a second call on the same root throws StateError.
  void backward();

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds a non-leaf node from parents; requires_grad if any parent does.
/// `backward` is dropped when no parent requires a gradient.
Tensor make_result(Matrix value, std::vector<Tensor> parents, std::function<void(Node&)> backward);

}  // namespace ppm::nn
