// Copyright 2026 DPFN Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dpfn/common.hpp"

namespace dpfn {

// Reverse-mode differentiation graph. Every Tensor is a handle onto a Node;
// an operation allocates a fresh node holding the forward value plus a
// closure that scatters an incoming gradient to the node's parents. Leaves
// (parameters, inputs under test) have no parents; their gradient buffers
// accumulate across backward passes until zero_grad().
//
// Values are double precision throughout: the verification suite relies on
// finite-difference checks that are not trustworthy at float32.

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  int64_t size() const { return static_cast<int64_t>(value.size()); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Graph recording is on by default; wrap frozen-parameter inference in a
// NoGradGuard to skip node bookkeeping entirely.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// When enabled, every freshly computed tensor is scanned for NaN/Inf.
inline bool& finite_checks() {
  thread_local bool enabled = false;
  return enabled;
}

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> value) {
    require<ShapeError>(numel(shape) == static_cast<int64_t>(value.size()),
                        "tensor: shape ", shape_str(shape), " wants ",
                        numel(shape), " values, got ", value.size());
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    return Tensor(std::move(node));
  }

  static Tensor zeros(Shape shape) {
    std::vector<double> v(static_cast<size_t>(numel(shape)), 0.0);
    return constant(std::move(shape), std::move(v));
  }

  static Tensor full(Shape shape, double fill) {
    std::vector<double> v(static_cast<size_t>(numel(shape)), fill);
    return constant(std::move(shape), std::move(v));
  }

  static Tensor scalar(double v) { return constant({1}, {v}); }

  // A differentiable leaf: gradients accumulate here.
  static Tensor leaf(Shape shape, std::vector<double> value) {
    Tensor t = constant(std::move(shape), std::move(value));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t dim(size_t axis) const { return node_->shape[axis]; }
  size_t rank() const { return node_->shape.size(); }
  int64_t size() const { return node_->size(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& values() { return node_->value; }
  const double* data() const { return node_->value.data(); }
  double* data() { return node_->value.data(); }

  double item() const {
    require<ShapeError>(size() == 1, "item: tensor has ", size(), " elements");
    return node_->value[0];
  }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const { return node_->grad; }

  void zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), 0.0);
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline void check_finite(const Node& node) {
  for (double v : node.value) {
    if (!std::isfinite(v)) {
      throw ValueError(cat("non-finite value in tensor of shape ",
                           shape_str(node.shape)));
    }
  }
}

}  // namespace detail

// Central factory for operation results. If recording is off, or no input
// participates in differentiation, the result is a plain constant and the
// backward closure is dropped.
inline Tensor make_op(Shape shape, std::vector<double> value,
                      std::vector<Tensor> inputs,
                      std::function<void(Node&)> backward) {
  Tensor out = Tensor::constant(std::move(shape), std::move(value));
  if (finite_checks()) detail::check_finite(*out.node());
  if (!grad_mode()) return out;
  bool needs = false;
  for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  if (!needs) return out;
  Node& node = *out.node();
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (Tensor& t : inputs) node.parents.push_back(t.node());
  node.backward = std::move(backward);
  return out;
}

// Adds g into the parent's gradient buffer; no-op for parents outside the
// differentiated subgraph.
inline double* grad_sink(Node& parent) {
  if (!parent.requires_grad) return nullptr;
  parent.ensure_grad();
  return parent.grad.data();
}

// Reverse topological traversal from a scalar loss. Each reachable node is
// visited exactly once, so diamond-shaped graphs (y = x + x) accumulate
// correctly. Iterative DFS: BPTT graphs are deep enough to overflow the
// call stack otherwise.
inline void backward(const Tensor& loss) {
  require<ValueError>(loss.size() == 1, "backward: loss must be scalar, got ",
                      shape_str(loss.shape()));
  require<ValueError>(loss.requires_grad(),
                      "backward: loss does not depend on any trainable leaf");

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch space for this pass; only leaves keep
  // accumulating across calls (the documented accumulate-until-zero_grad
  // contract).
  for (Node* node : order) {
    if (node->backward) node->grad.assign(node->value.size(), 0.0);
  }
  Node& root = *loss.node();
  root.ensure_grad();
  root.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward) node->backward(*node);
  }
}

}  // namespace dpfn
