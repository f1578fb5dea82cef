#include "dcpt/optim.hpp"

#include <cmath>

namespace dcpt {

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T(0));
      state.v.emplace_back(p.numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].numel() ||
        (params[i].has_grad() && params[i].grad().size() != params[i].numel())) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " " +
                       shape_str(params[i].shape()) + " disagrees with its state or gradient");
    }
  }

  ++state.step;
  const AdamOptions& o = state.options;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(o.beta1, t);
  const double bc2 = 1.0 - std::pow(o.beta2, t);
  const T decay = static_cast<T>(1.0 - o.lr * o.weight_decay);
  const T b1 = static_cast<T>(o.beta1);
  const T b2 = static_cast<T>(o.beta2);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].mutable_data();
    auto grad = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const bool has_grad = !grad.empty();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const T g = has_grad ? grad[j] : T(0);
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      const double m_hat = static_cast<double>(m[j]) / bc1;
      const double v_hat = static_cast<double>(v[j]) / bc2;
      const double update = o.lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
      theta[j] = static_cast<T>(static_cast<double>(theta[j] * decay) - update);
    }
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamOptions options) : params_(std::move(params)) {
  state_.options = options;
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template void adam_step(std::span<Tensor<float>>, AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, AdamState<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace dcpt
