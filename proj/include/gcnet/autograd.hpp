#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a handle to a graph Node. Ops create new nodes that keep their
// inputs alive; the graph of one step is released when the last handle to
// its loss goes away. Node ids grow monotonically, so sorting the nodes
// reachable from the loss by descending id is a valid reverse topological
// order.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gcnet/tensor.hpp"

namespace gcnet {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until backward reaches this node
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;  // reads grad, accumulates into inputs
  std::string op = "leaf";
  std::uint64_t id = 0;
  bool requires_grad = false;

  /// Zero-initialised gradient buffer of this node's shape.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

std::uint64_t next_node_id();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool active();

 private:
  bool previous_;
};

template <typename T>
class Var {
 public:
  Var() = default;

  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->id = next_node_id();
  }

  /// Records an op result. The backward closure is dropped when no input
  /// requires a gradient or recording is disabled.
  static Var make(Tensor<T> value, std::string op, std::vector<Var> inputs,
                  std::function<void(Node<T>&)> backward) {
    Var out(std::move(value));
    out.node_->op = std::move(op);
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs && !NoGradGuard::active()) {
      out.node_->requires_grad = true;
      out.node_->backward = std::move(backward);
      out.node_->inputs.reserve(inputs.size());
      for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
    }
    return out;
  }

  explicit operator bool() const { return node_ != nullptr; }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  const Tensor<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Node<T>* node() const { return node_.get(); }
  const std::string& op() const { return node_->op; }

  /// Gradient, or zeros when backward never reached this node.
  Tensor<T> grad_or_zero() const {
    return node_->grad.empty() ? Tensor<T>(shape()) : node_->grad;
  }
  void zero_grad() { node_->grad = Tensor<T>(); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Accumulates d(loss)/d(node) into every node reachable from `loss`.
/// Throws std::invalid_argument when the loss is not a scalar.
template <typename T>
void backward(const Var<T>& loss);

}  // namespace gcnet
