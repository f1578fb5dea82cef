#include "dcpt/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace dcpt {

namespace {

std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename T>
NodePtr<T> new_node(Shape shape, std::vector<T> data) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
  for (auto d : shape) {
    if (d == 0) throw ShapeError("zero-sized dimension in shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->id = next_node_id();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return node;
}

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::vector<T> data(shape_numel(shape), value);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  auto node = new_node<T>(std::move(shape), std::move(data));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
  if (!node_->leaf) throw TapeError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = value;
  return *this;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_data(node_->shape, node_->data, false);
}

template <typename T>
Tensor<T> make_result(std::string_view op, Shape shape, std::vector<T> data,
                      std::vector<Tensor<T>> inputs, std::function<void(Node<T>&)> backward) {
#ifndef NDEBUG
  bool finite_inputs = std::all_of(inputs.begin(), inputs.end(),
                                   [](const Tensor<T>& t) { return all_finite<T>(t.data()); });
  if (finite_inputs && !all_finite<T>(data)) {
    throw NumericError(std::string(op) + " produced a non-finite value from finite inputs");
  }
#endif
  auto node = new_node<T>(std::move(shape), std::move(data));
  node->op = op;
  node->leaf = false;
  bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                [](const Tensor<T>& t) { return t.requires_grad(); });
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tape<T> Tape<T>::record(const Tensor<T>& root) {
  Tape tape;
  if (!root.requires_grad()) return tape;
  std::unordered_set<const Node<T>*> seen;
  std::vector<NodePtr<T>> stack{root.node()};
  while (!stack.empty()) {
    NodePtr<T> node = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(node.get()).second) continue;
    if (node->consumed) {
      throw TapeError("graph node #" + std::to_string(node->id) + " (" + std::string(node->op) +
                      ") was already consumed by an earlier backward pass");
    }
    for (const auto& in : node->inputs) {
      if (in->requires_grad) stack.push_back(in);
    }
    tape.nodes_.push_back(std::move(node));
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const NodePtr<T>& a, const NodePtr<T>& b) { return a->id < b->id; });
  return tape;
}

template <typename T>
void Tape<T>::run_backward() {
  if (nodes_.empty()) return;
  nodes_.back()->ensure_grad().assign(nodes_.back()->data.size(), T(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& node = **it;
    if (node.leaf) continue;
    if (node.backward && !node.grad.empty()) node.backward(node);
    node.backward = nullptr;
    node.inputs.clear();
    node.consumed = true;
  }
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined()) throw TapeError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw TapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (loss.node()->consumed) throw TapeError("backward called twice on a consumed tape");
  if (!loss.requires_grad()) throw TapeError("loss does not depend on any tensor requiring grad");
  if (loss.is_leaf()) {
    loss.node()->ensure_grad()[0] += T(1);
    return;
  }
  Tape<T>::record(loss).run_backward();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template Tensor<float> make_result(std::string_view, Shape, std::vector<float>, std::vector<Tensor<float>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(std::string_view, Shape, std::vector<double>, std::vector<Tensor<double>>,
                                    std::function<void(Node<double>&)>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace dcpt
