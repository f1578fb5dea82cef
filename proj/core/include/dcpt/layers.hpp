#pragma once

#include <cstddef>
#include <string>

#include "dcpt/module.hpp"
#include "dcpt/tensor.hpp"

namespace dcpt {

/// floor((in + 2 * padding - kernel) / stride) + 1; throws when the kernel
/// does not fit in the padded input.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Cross-correlation (no kernel flip) with zero padding.
/// x: [B, C, H, W], weight: [O, C, k, k], bias: [O] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding);

/// Per-channel spatial convolution. weight: [C, 1, k, k], bias: [C] or undefined.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride, std::size_t padding);

/// Window maximum with floor semantics on extents not divisible by the
/// stride. Ties route the gradient to the first maximal element.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kernel = 2, std::size_t stride = 2);

/// Affine map over the last axis. weight: [D, D'], bias: [D'] or undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::size_t padding, RandomSource& rng);

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, padding); }
  void visit(const TensorVisitor<T>& fn, const std::string& prefix);

  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;    // [out]
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Depth-wise k x k stage (channels preserved) followed by a point-wise 1x1
/// stage (spatial size preserved).
template <typename T>
class SeparableConv2d {
 public:
  SeparableConv2d() = default;
  SeparableConv2d(std::size_t channels, std::size_t out_channels, std::size_t kernel, RandomSource& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const TensorVisitor<T>& fn, const std::string& prefix);

  Tensor<T> depthwise_weight;  // [C, 1, k, k]
  Tensor<T> depthwise_bias;    // [C]
  Tensor<T> pointwise_weight;  // [O, C, 1, 1]
  Tensor<T> pointwise_bias;    // [O]
  std::size_t padding = 0;
};

template <typename T>
Tensor<T> separable_conv2d(const Tensor<T>& x, const SeparableConv2d<T>& params) {
  return params.forward(x);
}

/// Batch normalisation over every axis but 1 (channels).
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels, double momentum = 0.1, double epsilon = 1e-5);

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  void visit(const TensorVisitor<T>& fn, const std::string& prefix);
  bool has_running_stats() const { return tracked.defined() && tracked[0] > T(0); }

  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  Tensor<T> tracked;  // [1], number of train-mode updates folded into the running stats
  double momentum = 0.1;
  double epsilon = 1e-5;
};

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, BatchNorm<T>& params, Mode mode) {
  return params.forward(x, mode);
}

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim, double epsilon = 1e-5);

  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const TensorVisitor<T>& fn, const std::string& prefix);

  Tensor<T> gamma;
  Tensor<T> beta;
  double epsilon = 1e-5;
};

/// Normalises each vector along the last axis, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double epsilon);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features, RandomSource& rng);

  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight, bias); }
  void visit(const TensorVisitor<T>& fn, const std::string& prefix);

  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]
};

}  // namespace dcpt
