#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dcpt/random.hpp"
#include "dcpt/tensor.hpp"

namespace dcpt {

enum class Mode { train, eval };

/// Parameters are trained; buffers (running statistics) are persisted but not trained.
enum class TensorRole { parameter, buffer };

template <typename T>
using TensorVisitor = std::function<void(const std::string& name, Tensor<T>& tensor, TensorRole role)>;

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
  TensorRole role;
};

// Every module exposes `void visit(const TensorVisitor<T>&, const std::string& prefix)`
// walking its tensors in a fixed registration order. Checkpoints and the
// optimiser rely on that order.

template <typename T, typename M>
std::vector<NamedTensor<T>> named_tensors(M& module, const std::string& prefix = "") {
  std::vector<NamedTensor<T>> out;
  module.visit([&](const std::string& name, Tensor<T>& t, TensorRole role) { out.push_back({name, t, role}); },
               prefix);
  return out;
}

template <typename T, typename M>
std::vector<Tensor<T>> parameters(M& module) {
  std::vector<Tensor<T>> out;
  module.visit(
      [&](const std::string&, Tensor<T>& t, TensorRole role) {
        if (role == TensorRole::parameter) out.push_back(t);
      },
      "");
  return out;
}

template <typename T, typename M>
std::size_t parameter_count(M& module) {
  std::size_t n = 0;
  for (const auto& p : parameters<T>(module)) n += p.numel();
  return n;
}

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// U(-b, b) with b = sqrt(6 / fan_in) (He/Kaiming uniform, fan-in mode).
/// Draws are taken in double so float and double models built from one seed
/// agree up to rounding.
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, RandomSource& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
  return Tensor<T>::from_data(std::move(shape), std::move(data), true);
}

}  // namespace dcpt
