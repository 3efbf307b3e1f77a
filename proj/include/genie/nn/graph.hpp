#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "genie/error.hpp"
#include "genie/nn/tensor.hpp"

namespace genie::nn {

// Handle to a node of a Graph. Only meaningful for the graph that made it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so the append
// order is a topological order and backward() is a single reverse sweep.
//
// Parameter leaves wrap external tensors without copying; their gradients are
// accumulated straight into the external tensor's grad buffer.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, Var self)>;

  // With tracking off, parameters need no gradient and no backward closures
  // are kept: a plain forward evaluation.
  explicit Graph(bool track_gradients = true) : track_(track_gradients) {}

  Var input(Tensor<T> value) {
    Node node;
    node.own = std::move(value);
    return push(std::move(node));
  }

  Var parameter(Tensor<T>& tensor) {
    Node node;
    node.external = &tensor;
    node.requires_grad = track_;
    return push(std::move(node));
  }

  // Appends an op result. `backward` runs only if some parent needs a gradient
  // and this node received one.
  Var record(Tensor<T> value, const std::vector<Var>& parents, BackwardFn backward) {
    Node node;
    node.own = std::move(value);
    for (Var p : parents) {
      check(p);
      node.requires_grad = node.requires_grad || nodes_[p.id].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(backward);
    return push(std::move(node));
  }

  const Tensor<T>& value(Var v) const {
    check(v);
    const Node& n = nodes_[v.id];
    return n.external ? *n.external : n.own;
  }

  bool requires_grad(Var v) const {
    check(v);
    return nodes_[v.id].requires_grad;
  }

  // Gradient buffer of `v`, allocated (zeroed) on first use; nullptr when
  // `v` does not need a gradient. Valid only during backward().
  T* grad(Var v) {
    check(v);
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return nullptr;
    Tensor<T>& t = n.external ? *n.external : n.own;
    if (!n.touched) {
      t.ensure_grad();
      if (!n.external) t.zero_grad();
      n.touched = true;
    }
    return t.grad().data();
  }

  // Gradient of a non-parameter node after backward(); empty when the node
  // never received one.
  std::vector<T> gradient_of(Var v) const {
    check(v);
    const Node& n = nodes_[v.id];
    const Tensor<T>& t = n.external ? *n.external : n.own;
    if (!n.touched) return std::vector<T>(t.size(), T{0});
    return {t.grad().begin(), t.grad().end()};
  }

  void backward(Var loss) {
    if (nodes_.empty() || !loss.valid())
      throw ContractViolation("backward: no recorded forward pass");
    check(loss);
    if (backward_done_) throw ContractViolation("backward: graph already consumed");
    require(value(loss).size() == 1, "backward: loss must be a scalar");
    backward_done_ = true;
    if (!nodes_[loss.id].requires_grad) return;
    grad(loss)[0] += T{1};
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.touched && n.backward) n.backward(*this, Var{i});
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> own;
    Tensor<T>* external = nullptr;
    BackwardFn backward;
    bool requires_grad = false;
    bool touched = false;
  };

  Var push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void check(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw ContractViolation("graph: invalid variable handle");
  }

  std::vector<Node> nodes_;
  bool track_ = true;
  bool backward_done_ = false;
};

}  // namespace genie::nn
