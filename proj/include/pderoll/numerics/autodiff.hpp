#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Var is a shared handle on a graph node. Nodes that (transitively) depend on
// a trainable leaf record their parents and a backward closure; everything else
// is a constant and keeps no graph. Gradients of complex nodes follow the
// convention g = dL/dRe + i*dL/dIm for a real loss L.

#include <algorithm>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pderoll/numerics/tensor.hpp"

namespace pderoll {

namespace ad {

class NodeBase {
 public:
  virtual ~NodeBase() = default;
  virtual bool has_grad() const = 0;
  virtual void zero_grad() = 0;

  std::string_view op = "leaf";
  bool requires_grad = false;
  std::vector<std::shared_ptr<NodeBase>> parents;
  std::function<void()> backward;
};

template <class E>
class Node final : public NodeBase {
 public:
  explicit Node(Tensor<E> v) : value(std::move(v)) {}

  bool has_grad() const override { return !grad.empty(); }
  void zero_grad() override { grad.clear(); }

  /// Materializes the gradient buffer on first use.
  std::span<E> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), E{});
    return grad;
  }

  Tensor<E> value;
  std::vector<E> grad;
};

}  // namespace ad

template <class E>
class Var {
 public:
  using element_type = E;

  Var() = default;

  static Var constant(Tensor<E> value) {
    return Var(std::make_shared<ad::Node<E>>(std::move(value)));
  }

  /// Trainable leaf: accumulates gradient across backward passes until zero_grad().
  static Var leaf(Tensor<E> value) {
    Var v(std::make_shared<ad::Node<E>>(std::move(value)));
    v.node_->requires_grad = true;
    return v;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<E>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_->requires_grad; }
  std::string_view op() const { return node_->op; }

  /// Gradient view; empty when nothing has flowed into this node yet.
  std::span<const E> grad() const { return node_->grad; }
  void zero_grad() { node_->zero_grad(); }

  ad::Node<E>* node() const { return node_.get(); }
  const std::shared_ptr<ad::Node<E>>& handle() const { return node_; }

  /// Direct value access for leaves owned by an optimizer.
  std::vector<E>& mutable_data() { return node_->value.data; }

 private:
  explicit Var(std::shared_ptr<ad::Node<E>> n) : node_(std::move(n)) {}

  template <class R, class... Ps>
  friend Var<R> make_result(std::string_view op, Tensor<R> value, const Ps&... parents);

  std::shared_ptr<ad::Node<E>> node_;
};

/// Wraps a freshly computed value as the output of `op`. The result records
/// its parents only when at least one of them requires a gradient.
template <class R, class... Ps>
Var<R> make_result(std::string_view op, Tensor<R> value, const Ps&... parents) {
  Var<R> out(std::make_shared<ad::Node<R>>(std::move(value)));
  out.node_->op = op;
  const bool needs = (parents.requires_grad() || ...);
  if (needs) {
    out.node_->requires_grad = true;
    (out.node_->parents.push_back(parents.handle()), ...);
  }
  return out;
}

/// Same as make_result for a runtime-sized parent list.
template <class R, class P>
Var<R> make_result_n(std::string_view op, Tensor<R> value, const std::vector<Var<P>>& parents) {
  Var<R> out = make_result<R>(op, std::move(value));
  const bool needs =
      std::any_of(parents.begin(), parents.end(), [](const Var<P>& p) { return p.requires_grad(); });
  if (needs) {
    out.node()->requires_grad = true;
    for (const auto& p : parents) out.node()->parents.push_back(p.handle());
  }
  return out;
}

/// Copy of the value with no graph attached.
template <class E>
Var<E> detach(const Var<E>& x) {
  return Var<E>::constant(x.value());
}

/// Runs reverse accumulation from a scalar loss. Every node reachable from the
/// loss through requires_grad edges is visited once, in reverse topological order.
template <class T>
void backward(const Var<T>& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward", "loss must be scalar, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  std::vector<ad::NodeBase*> order;
  std::unordered_set<ad::NodeBase*> visited;
  std::vector<std::pair<ad::NodeBase*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      ad::NodeBase* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    ad::NodeBase* node = *it;
    if (node->backward && node->has_grad()) node->backward();
  }
}

namespace detail {

template <class E>
void accumulate(ad::Node<E>* target, std::span<const E> g) {
  if (!target->requires_grad) return;
  auto buf = target->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

}  // namespace detail

}  // namespace pderoll
