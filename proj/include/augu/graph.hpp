#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "augu/errors.hpp"
#include "augu/tensor.hpp"

namespace augu {

enum class OpKind {
  leaf,
  matmul,
  add,
  mul,
  softmax,
  layernorm,
  gelu,
  embed,
  concat_rows,
  slice_rows,
  scale,
  transpose,
  cross_entropy_gather,
  cosine,
  attention,
  sum,
};

/// A trainable tensor owned by a model. Graphs reference it without copying.
template <class T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = BasicTensor<T>(value.shape());
    grad.fill(T{0});
  }
};

template <class T>
class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
template <class T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const BasicTensor<T>& value() const { return graph->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Tape-based reverse-mode autodiff over a fixed op vocabulary. Nodes are
// appended in creation order, which is a topological order, so backward is a
// single reverse sweep. A graph built with record=false keeps values only and
// is what inference uses.
template <class T>
class Graph {
 public:
  using Tensor = BasicTensor<T>;
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var<T> constant(Tensor t) { return push(OpKind::leaf, {}, std::move(t), false); }

  Var<T> leaf(Tensor t, bool requires_grad = true) {
    return push(OpKind::leaf, {}, std::move(t), requires_grad && record_);
  }

  /// Binds a model parameter. Repeated binds of the same parameter return the
  /// same node so tied weights accumulate into one gradient.
  Var<T> param(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    Node n;
    n.op = OpKind::leaf;
    n.ref = &p.value;
    n.param = &p;
    n.requires_grad = record_;
    nodes_.push_back(std::move(n));
    const std::size_t id = nodes_.size() - 1;
    param_nodes_.emplace(&p, id);
    return {this, id};
  }
  Var<T> param(const Parameter<T>& p) {
    // Read-only binding for inference on shared parameters.
    if (record_) throw ContractError("const parameter bound on a recording graph");
    Node n;
    n.op = OpKind::leaf;
    n.ref = &p.value;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Tensor& value(Var<T> v) const {
    const Node& n = nodes_.at(v.id);
    return n.ref ? *n.ref : n.value;
  }
  const Tensor& value(std::size_t id) const { return value(Var<T>{const_cast<Graph*>(this), id}); }

  /// Gradient of the last backward() w.r.t. this node (zeros if unreached).
  const Tensor& grad(Var<T> v) const { return nodes_.at(v.id).grad; }

  OpKind op(Var<T> v) const { return nodes_.at(v.id).op; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Multiply-accumulate work performed by matmul and attention nodes, counted
  /// as 2 flops per MAC.
  std::uint64_t flops() const { return flops_; }
  void add_flops(std::uint64_t f) { flops_ += f; }

  /// Node ids in the order the last backward visited them.
  const std::vector<std::size_t>& backward_order() const { return backward_order_; }

  void backward(Var<T> loss) {
    if (!record_) throw ContractError("backward on a non-recording graph");
    if (value(loss).size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " +
                          shape_str(value(loss).shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor();
    backward_order_.clear();
    accumulate(loss.id, Tensor(value(loss).shape(), T{1}));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      backward_order_.push_back(i);
      if (n.backward) n.backward(*this, i);
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      Node& n = nodes_[i];
      if (n.op != OpKind::leaf || !n.requires_grad) continue;
      if (n.grad.empty()) n.grad = Tensor(value(i).shape());
      if (n.param) {
        if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
        auto dst = n.param->grad.data();
        auto src = n.grad.data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
  }

  // ---- used by op implementations ----

  Var<T> push(OpKind op, std::vector<std::size_t> inputs, Tensor value, bool requires_grad,
              BackwardFn fn = {}) {
    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.value = std::move(value);
    n.requires_grad = requires_grad && record_;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  bool any_requires_grad(std::initializer_list<Var<T>> vs) const {
    if (!record_) return false;
    for (auto v : vs) {
      if (nodes_[v.id].requires_grad) return true;
    }
    return false;
  }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }

  /// Returns a zero-initialized gradient buffer for node `id` to add into.
  Tensor& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(value(id).shape());
    return n.grad;
  }

  void accumulate(std::size_t id, const Tensor& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
      return;
    }
    auto dst = n.grad.data();
    auto src = g.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }

 private:
  struct Node {
    OpKind op = OpKind::leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
  std::vector<std::size_t> backward_order_;
  std::uint64_t flops_ = 0;
};

}  // namespace augu
