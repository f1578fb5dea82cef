#pragma once

// Dense row-major tensors with a dynamically recorded reverse-mode tape.
//
// Every tensor is a shared handle to a Node. Operations on tensors that
// require gradients append a node carrying its inputs and a backward rule;
// backward() sorts the reachable nodes topologically (node ids increase
// with creation, so inputs always precede consumers) and sweeps them in
// reverse. Precision is a template parameter, which keeps float and double
// graphs from ever mixing.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcpt/errors.hpp"

namespace dcpt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct Node;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
struct Node {
  std::uint64_t id = 0;
  std::string_view op = "leaf";
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::vector<NodePtr<T>> inputs;
  // Reads this node's grad and accumulates into inputs[i]->grad.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(NodePtr<T> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // Direct write access; intended for leaves (initialisation, optimiser, checkpoint load).
  std::span<T> mutable_data() { return node_->data; }
  T operator[](std::size_t flat) const { return node_->data[flat]; }
  T item() const;

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const { return node_->leaf; }
  std::uint64_t node_id() const { return node_->id; }

  // Fresh leaf holding a copy of the data, cut off from the tape.
  Tensor detach() const;

  const NodePtr<T>& node() const { return node_; }

 private:
  NodePtr<T> node_;
};

/// Records an operation result. When no input requires a gradient the node is
/// a plain constant and the backward rule is dropped.
template <typename T>
Tensor<T> make_result(std::string_view op, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> inputs, std::function<void(Node<T>&)> backward);

/// Topologically ordered view of the graph below a root tensor.
template <typename T>
class Tape {
 public:
  static Tape record(const Tensor<T>& root);

  // Inputs precede consumers; only nodes that require gradients appear.
  std::span<const NodePtr<T>> nodes() const { return nodes_; }

  // Seeds d(root)/d(root) = 1 and runs every backward rule once, in reverse.
  // Interior nodes are consumed afterwards; their gradients stay readable.
  void run_backward();

 private:
  std::vector<NodePtr<T>> nodes_;
};

template <typename T>
void backward(const Tensor<T>& loss);

}  // namespace dcpt
