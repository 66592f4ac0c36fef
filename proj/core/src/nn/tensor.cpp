#include "ppm/nn/tensor.hpp"

#include <unordered_set>

#include "ppm/error.hpp"

namespace ppm::nn {

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Tensor Tensor::constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Tensor(std::move(n));
}

Tensor Tensor::parameter(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

Matrix Tensor::grad() const {
  if (!has_grad()) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

Matrix& Tensor::mutable_grad() {
  if (!has_grad()) node_->grad = Matrix::Zero(rows(), cols());
  return node_->grad;
}

void Tensor::zero_grad() {
  if (has_grad()) node_->grad.setZero();
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ContractError("item() on a non-scalar tensor");
  return node_->value(0, 0);
}

void Tensor::backward() {
  if (!defined()) throw ContractError("backward() on an undefined tensor");
  if (node_->consumed) throw StateError("backward() called twice on the same graph; run forward again");
  if (rows() != 1 || cols() != 1) throw ContractError("backward() requires a scalar (1x1) tensor");
  if (!node_->requires_grad) throw ContractError("backward() on a tensor that does not require grad");

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad = Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (!n->is_leaf) {
      n->parents.clear();
      n->backward_fn = nullptr;
      if (n != node_.get()) n->grad.resize(0, 0);
    }
  }
  node_->consumed = true;
}

Tensor make_result(Matrix value, std::vector<Tensor> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->is_leaf = false;
  for (const auto& p : parents) {
    if (p.defined() && p.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node_ptr());
    n->backward_fn = std::move(backward);
  }
  return Tensor(std::move(n));
}

}  // namespace ppm::nn
