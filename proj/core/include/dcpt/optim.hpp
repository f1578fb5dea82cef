#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dcpt/tensor.hpp"

namespace dcpt {

struct AdamOptions {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment buffers for one parameter list, plus the shared step counter.
template <typename T>
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

/// One bias-corrected Adam update. Weight decay is decoupled: each parameter
/// is first shrunk by (1 - lr * weight_decay), then moved by the adaptive
/// step. A parameter with no gradient buffer is treated as having zero grad.
/// Moment buffers are created on the first call.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state);

/// Convenience owner of the parameter list and its Adam state.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamOptions options);

  void step() { adam_step<T>(params_, state_); }
  void zero_grad();
  const AdamState<T>& state() const { return state_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamState<T> state_;
};

}  // namespace dcpt
