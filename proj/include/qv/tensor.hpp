#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "qv/common.hpp"

namespace qv::ad {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

/// One record on the tape. Nodes are created in program order with strictly
/// increasing ids, so inputs always precede outputs and visiting ids in
/// decreasing order is a reverse topological sweep.
template <typename S>
struct Node {
  std::int64_t id = 0;
  const char* op = "";
  std::vector<std::shared_ptr<Node>> parents;
  /// Pushes this node's output gradient (the argument) into parent grads.
  /// Empty for leaves.
  std::function<void(const std::vector<S>&)> backprop;
  std::vector<S> grad;
};

inline std::atomic<std::int64_t>& node_sequence() {
  static std::atomic<std::int64_t> counter{0};
  return counter;
}

template <typename S>
std::shared_ptr<Node<S>> make_node(const char* op, std::vector<std::shared_ptr<Node<S>>> parents,
                                   std::int64_t out_size,
                                   std::function<void(const std::vector<S>&)> backprop) {
  auto node = std::make_shared<Node<S>>();
  node->id = node_sequence().fetch_add(1);
  node->op = op;
  node->parents = std::move(parents);
  node->backprop = std::move(backprop);
  node->grad.assign(static_cast<std::size_t>(out_size), S(0));
  return node;
}

/// Dense tensor of reals. Values are immutable once created; operations build
/// new tensors and, when any input tracks gradients, append a node to the
/// implicit tape.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<S> values)
      : shape_(std::move(shape)), values_(std::make_shared<std::vector<S>>(std::move(values))) {
    if (static_cast<std::int64_t>(values_->size()) != numel(shape_)) {
      throw ShapeMismatch("tensor: data length does not match shape");
    }
  }

  static Tensor zeros(Shape shape) {
    std::vector<S> v(static_cast<std::size_t>(numel(shape)), S(0));
    return Tensor(std::move(shape), std::move(v));
  }

  static Tensor full(Shape shape, S value) {
    std::vector<S> v(static_cast<std::size_t>(numel(shape)), value);
    return Tensor(std::move(shape), std::move(v));
  }

  /// Leaf with a persistent gradient buffer (a trainable parameter or an
  /// input under test).
  static Tensor param(Shape shape, std::vector<S> values) {
    Tensor t(std::move(shape), std::move(values));
    t.node_ = make_node<S>("leaf", {}, t.size(), nullptr);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::int64_t size() const { return values_ ? static_cast<std::int64_t>(values_->size()) : 0; }

  const std::vector<S>& data() const { return *values_; }
  const std::shared_ptr<std::vector<S>>& data_handle() const { return values_; }

  /// In-place access for optimizer updates; never used by graph operations.
  std::vector<S>& mutable_data() { return *values_; }

  bool requires_grad() const { return node_ != nullptr; }

  const std::vector<S>& grad() const {
    if (!node_) throw MissingGradient("tensor does not track gradients");
    return node_->grad;
  }

  void zero_grad() {
    if (node_) std::fill(node_->grad.begin(), node_->grad.end(), S(0));
  }

  S item() const {
    if (size() != 1) throw NotScalar("item: tensor is not scalar");
    return (*values_)[0];
  }

  const std::shared_ptr<Node<S>>& node() const { return node_; }

  /// Used by operations to attach the tape record of a freshly built result.
  void set_node(std::shared_ptr<Node<S>> node) { node_ = std::move(node); }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<S>> values_;
  std::shared_ptr<Node<S>> node_;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf. Interior gradients
/// are reset per call, so calling backward twice doubles leaf gradients.
/// Nodes are visited in reverse insertion order, each exactly once.
template <typename S>
void backward(const Tensor<S>& loss) {
  if (loss.size() != 1) throw NotScalar("backward: loss must be scalar");
  if (!loss.node()) return;  // constant: nothing reachable

  std::vector<Node<S>*> reachable;
  std::unordered_set<Node<S>*> seen;
  std::vector<Node<S>*> stack{loss.node().get()};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Node<S>* n = stack.back();
    stack.pop_back();
    reachable.push_back(n);
    for (const auto& p : n->parents) {
      if (p && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  for (Node<S>* n : reachable) {
    if (n->backprop) std::fill(n->grad.begin(), n->grad.end(), S(0));
  }
  loss.node()->grad[0] += S(1);

  std::sort(reachable.begin(), reachable.end(),
            [](const Node<S>* a, const Node<S>* b) { return a->id > b->id; });
  for (Node<S>* n : reachable) {
    if (n->backprop) n->backprop(n->grad);
  }
}

}  // namespace qv::ad
