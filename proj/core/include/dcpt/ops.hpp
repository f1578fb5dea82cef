#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcpt/tensor.hpp"

namespace dcpt {

enum class BinaryOp { add, sub, mul };

/// Elementwise a (op) b. `b` may be broadcast against `a` by trailing-dimension
/// rules: b is right-aligned with a and each of its axes must equal a's or be 1
/// (size-1 axes stretch). The result has a's shape.
template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::add, a, b); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::sub, a, b); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::mul, a, b); }

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// [m x k] . [k x n], or batched over identical leading dims. With
/// transpose_b the right operand is given as [.. x n x k].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

/// Numerically stable softmax (per-slice max is subtracted before exp).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis);

/// Exact GELU, x * Phi(x) with Phi the standard normal CDF (erf form).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> permute(const Tensor<T>& x, std::span<const std::size_t> axes);

template <typename T>
Tensor<T> permute(const Tensor<T>& x, std::initializer_list<std::size_t> axes) {
  return permute(x, std::span<const std::size_t>(axes.begin(), axes.size()));
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);

}  // namespace dcpt
