#include "dcpt/layers.hpp"

#include <algorithm>
#include <cmath>

#include "gemm.hpp"

namespace dcpt {

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (kernel == 0 || stride == 0) throw ConfigError("convolution kernel and stride must be positive");
  if (in + 2 * padding < kernel) {
    throw ShapeError("kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t kernel, stride, padding;
  std::size_t out_h, out_w;
};

ConvGeometry conv_geometry(const Shape& xs, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (xs.size() != 4) throw ShapeError("expected [B, C, H, W] input, got " + shape_str(xs));
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], kernel, stride, padding, 0, 0};
  g.out_h = conv_output_size(g.height, kernel, stride, padding);
  g.out_w = conv_output_size(g.width, kernel, stride, padding);
  return g;
}

// col: [C * k * k, out_h * out_w] for one image
template <typename T>
void im2col(const ConvGeometry& g, const T* img, T* col) {
  const std::size_t k = g.kernel;
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* src = img + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* dst = col + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.padding);
          T* row = dst + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill_n(row, g.out_w, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.padding);
            row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T(0) : srow[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* col, T* img) {
  const std::size_t k = g.kernel;
  const std::size_t plane = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* dst = img + c * g.height * g.width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* src = col + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* drow = dst + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) drow[ix] += src[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding) {
  const Shape& ws = weight.shape();
  if (ws.size() != 4 || ws[2] != ws[3]) throw ShapeError("conv2d: weight must be [O, C, k, k], got " + shape_str(ws));
  if (x.rank() != 4 || ws[1] != x.dim(1)) {
    throw ShapeError("conv2d: channel mismatch, input " + shape_str(x.shape()) + " vs weight " + shape_str(ws));
  }
  const ConvGeometry g = conv_geometry(x.shape(), ws[2], stride, padding);
  const std::size_t out_ch = ws[0];
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_ch)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(out_ch) +
                     " output channels");
  }
  const std::size_t ckk = g.channels * g.kernel * g.kernel;
  const std::size_t plane = g.out_h * g.out_w;
  const std::size_t in_image = g.channels * g.height * g.width;

  std::vector<T> out(g.batch * out_ch * plane, T(0));
  std::vector<T> col(ckk * plane);
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(g, x.data().data() + b * in_image, col.data());
    T* ob = out.data() + b * out_ch * plane;
    if (bias.defined()) {
      for (std::size_t o = 0; o < out_ch; ++o) std::fill_n(ob + o * plane, plane, bias[o]);
    }
    detail::gemm_nn(out_ch, plane, ckk, weight.data().data(), col.data(), ob);
  }

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>("conv2d", {g.batch, out_ch, g.out_h, g.out_w}, std::move(out), std::move(inputs),
                        [g, out_ch, ckk, plane, in_image](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& nw = *self.inputs[1];
    Node<T>* nb = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    std::vector<T> col(ckk * plane);
    std::vector<T> dcol(ckk * plane);
    for (std::size_t b = 0; b < g.batch; ++b) {
      const T* gb = self.grad.data() + b * out_ch * plane;
      if (nw.requires_grad) {
        im2col(g, nx.data.data() + b * in_image, col.data());
        detail::gemm_nt(out_ch, ckk, plane, gb, col.data(), nw.ensure_grad().data());
      }
      if (nx.requires_grad) {
        std::fill(dcol.begin(), dcol.end(), T(0));
        detail::gemm_tn(ckk, plane, out_ch, nw.data.data(), gb, dcol.data());
        col2im_add(g, dcol.data(), nx.ensure_grad().data() + b * in_image);
      }
      if (nb && nb->requires_grad) {
        auto& gbias = nb->ensure_grad();
        for (std::size_t o = 0; o < out_ch; ++o) {
          T acc = 0;
          for (std::size_t p = 0; p < plane; ++p) acc += gb[o * plane + p];
          gbias[o] += acc;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride, std::size_t padding) {
  const Shape& ws = weight.shape();
  if (ws.size() != 4 || ws[1] != 1 || ws[2] != ws[3]) {
    throw ShapeError("depthwise_conv2d: weight must be [C, 1, k, k], got " + shape_str(ws));
  }
  if (x.rank() != 4 || ws[0] != x.dim(1)) {
    throw ShapeError("depthwise_conv2d: channel mismatch, input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(ws));
  }
  const ConvGeometry g = conv_geometry(x.shape(), ws[2], stride, padding);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.channels)) {
    throw ShapeError("depthwise_conv2d: bias " + shape_str(bias.shape()) + " does not match channels");
  }
  const std::size_t k = g.kernel;
  auto xd = x.data();
  auto wd = weight.data();
  std::vector<T> out(g.batch * g.channels * g.out_h * g.out_w);

  // Visits every (output, input, weight) index triple that contributes.
  auto for_each_tap = [g, k](auto&& fn) {
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (std::size_t c = 0; c < g.channels; ++c) {
        const std::size_t in_base = (b * g.channels + c) * g.height * g.width;
        const std::size_t out_base = (b * g.channels + c) * g.out_h * g.out_w;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::size_t oi = out_base + oy * g.out_w + ox;
            for (std::size_t ki = 0; ki < k; ++ki) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
              for (std::size_t kj = 0; kj < k; ++kj) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
                fn(oi, in_base + static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix),
                   (c * k + ki) * k + kj, c);
              }
            }
          }
        }
      }
    }
  };

  if (bias.defined()) {
    const std::size_t plane = g.out_h * g.out_w;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = bias[(i / plane) % g.channels];
  }
  for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi, std::size_t) { out[oi] += xd[ii] * wd[wi]; });

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>("depthwise_conv2d", {g.batch, g.channels, g.out_h, g.out_w}, std::move(out),
                        std::move(inputs), [for_each_tap, g](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& nw = *self.inputs[1];
    Node<T>* nb = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    const auto& go = self.grad;
    if (nx.requires_grad) {
      auto& gx = nx.ensure_grad();
      for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi, std::size_t) { gx[ii] += go[oi] * nw.data[wi]; });
    }
    if (nw.requires_grad) {
      auto& gw = nw.ensure_grad();
      for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t wi, std::size_t) { gw[wi] += go[oi] * nx.data[ii]; });
    }
    if (nb && nb->requires_grad) {
      auto& gbias = nb->ensure_grad();
      const std::size_t plane = g.out_h * g.out_w;
      for (std::size_t i = 0; i < go.size(); ++i) gbias[(i / plane) % g.channels] += go[i];
    }
  });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride) {
  const ConvGeometry g = conv_geometry(x.shape(), kernel, stride, 0);
  auto xd = x.data();
  std::vector<T> out(g.batch * g.channels * g.out_h * g.out_w);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t bc = 0; bc < g.batch * g.channels; ++bc) {
    const std::size_t in_base = bc * g.height * g.width;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        std::size_t best = in_base + oy * stride * g.width + ox * stride;
        for (std::size_t ki = 0; ki < kernel; ++ki) {
          for (std::size_t kj = 0; kj < kernel; ++kj) {
            const std::size_t idx = in_base + (oy * stride + ki) * g.width + ox * stride + kj;
            if (xd[idx] > xd[best]) best = idx;
          }
        }
        const std::size_t oi = (bc * g.out_h + oy) * g.out_w + ox;
        out[oi] = xd[best];
        argmax[oi] = best;
      }
    }
  }
  return make_result<T>("max_pool2d", {g.batch, g.channels, g.out_h, g.out_w}, std::move(out), {x},
                        [argmax = std::move(argmax)](Node<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += self.grad[i];
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.shape().back() != weight.dim(0)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t in_f = weight.dim(0);
  const std::size_t out_f = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_f)) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(weight.shape()));
  }
  const std::size_t rows = x.numel() / in_f;
  std::vector<T> out(rows * out_f, T(0));
  if (bias.defined()) {
    for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data().begin(), bias.data().end(), out.begin() + r * out_f);
  }
  detail::gemm_nn(rows, out_f, in_f, x.data().data(), weight.data().data(), out.data());

  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>("linear", std::move(out_shape), std::move(out), std::move(inputs),
                        [rows, in_f, out_f](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& nw = *self.inputs[1];
    Node<T>* nb = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    const T* g = self.grad.data();
    if (nx.requires_grad) detail::gemm_nt(rows, in_f, out_f, g, nw.data.data(), nx.ensure_grad().data());
    if (nw.requires_grad) detail::gemm_tn(in_f, out_f, rows, nx.data.data(), g, nw.ensure_grad().data());
    if (nb && nb->requires_grad) {
      auto& gb = nb->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < out_f; ++j) gb[j] += g[r * out_f + j];
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double epsilon) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layer_norm: affine size does not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  auto xd = x.data();
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* v = xd.data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += v[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (v[j] - mu) * (v[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + static_cast<T>(epsilon));
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (v[j] - mu) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gamma[j] + beta[j];
    }
  }
  return make_result<T>("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                        [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& ng = *self.inputs[1];
    auto& nb = *self.inputs[2];
    const auto& g = self.grad;
    for (std::size_t r = 0; r < rows; ++r) {
      T sum_dh = 0, sum_dh_h = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t i = r * d + j;
        const T dh = g[i] * ng.data[j];
        sum_dh += dh;
        sum_dh_h += dh * xhat[i];
        if (ng.requires_grad) ng.ensure_grad()[j] += g[i] * xhat[i];
        if (nb.requires_grad) nb.ensure_grad()[j] += g[i];
      }
      if (nx.requires_grad) {
        auto& gx = nx.ensure_grad();
        const T scale_r = inv_std[r] / static_cast<T>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t i = r * d + j;
          const T dh = g[i] * ng.data[j];
          gx[i] += scale_r * (static_cast<T>(d) * dh - sum_dh - xhat[i] * sum_dh_h);
        }
      }
    }
  });
}

// ---- modules -------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride_,
                  std::size_t padding_, RandomSource& rng)
    : weight(kaiming_uniform<T>({out_channels, in_channels, kernel, kernel}, in_channels * kernel * kernel, rng)),
      bias(Tensor<T>::zeros({out_channels}, true)),
      stride(stride_),
      padding(padding_) {}

template <typename T>
void Conv2d<T>::visit(const TensorVisitor<T>& fn, const std::string& prefix) {
  fn(join_name(prefix, "weight"), weight, TensorRole::parameter);
  fn(join_name(prefix, "bias"), bias, TensorRole::parameter);
}

template <typename T>
SeparableConv2d<T>::SeparableConv2d(std::size_t channels, std::size_t out_channels, std::size_t kernel,
                                    RandomSource& rng)
    : depthwise_weight(kaiming_uniform<T>({channels, 1, kernel, kernel}, kernel * kernel, rng)),
      depthwise_bias(Tensor<T>::zeros({channels}, true)),
      pointwise_weight(kaiming_uniform<T>({out_channels, channels, 1, 1}, channels, rng)),
      pointwise_bias(Tensor<T>::zeros({out_channels}, true)),
      padding((kernel - 1) / 2) {}

template <typename T>
Tensor<T> SeparableConv2d<T>::forward(const Tensor<T>& x) const {
  auto spatial = depthwise_conv2d(x, depthwise_weight, depthwise_bias, 1, padding);
  return conv2d(spatial, pointwise_weight, pointwise_bias, 1, 0);
}

template <typename T>
void SeparableConv2d<T>::visit(const TensorVisitor<T>& fn, const std::string& prefix) {
  fn(join_name(prefix, "depthwise.weight"), depthwise_weight, TensorRole::parameter);
  fn(join_name(prefix, "depthwise.bias"), depthwise_bias, TensorRole::parameter);
  fn(join_name(prefix, "pointwise.weight"), pointwise_weight, TensorRole::parameter);
  fn(join_name(prefix, "pointwise.bias"), pointwise_bias, TensorRole::parameter);
}

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels, double momentum_, double epsilon_)
    : gamma(Tensor<T>::full({channels}, T(1), true)),
      beta(Tensor<T>::zeros({channels}, true)),
      running_mean(Tensor<T>::zeros({channels})),
      running_var(Tensor<T>::full({channels}, T(1))),
      tracked(Tensor<T>::zeros({1})),
      momentum(momentum_),
      epsilon(epsilon_) {
  if (!(epsilon > 0)) throw ConfigError("batch norm epsilon must be positive");
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() < 2 || x.dim(1) != gamma.numel()) {
    throw ShapeError("batch_norm: input " + shape_str(x.shape()) + " does not have " +
                     std::to_string(gamma.numel()) + " channels on axis 1");
  }
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t spatial = x.numel() / (batch * channels);
  const std::size_t count = batch * spatial;
  auto xd = x.data();
  auto at = [&](std::size_t b, std::size_t c, std::size_t s) { return (b * channels + c) * spatial + s; };

  std::vector<T> mean(channels), inv_std(channels);
  if (mode == Mode::train) {
    if (count < 2) {
      throw ShapeError("batch_norm: train mode needs at least 2 values per channel, input " + shape_str(x.shape()));
    }
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    const T mom = static_cast<T>(momentum);
    for (std::size_t c = 0; c < channels; ++c) {
      T mu = 0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < spatial; ++s) mu += xd[at(b, c, s)];
      mu /= static_cast<T>(count);
      T var = 0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t s = 0; s < spatial; ++s) var += (xd[at(b, c, s)] - mu) * (xd[at(b, c, s)] - mu);
      var /= static_cast<T>(count);
      mean[c] = mu;
      inv_std[c] = T(1) / std::sqrt(var + static_cast<T>(epsilon));
      const T unbiased = var * static_cast<T>(count) / static_cast<T>(count - 1);
      rm[c] = (T(1) - mom) * rm[c] + mom * mu;
      rv[c] = (T(1) - mom) * rv[c] + mom * unbiased;
    }
    tracked.mutable_data()[0] += T(1);
  } else {
    if (!has_running_stats()) {
      throw ConfigError("batch_norm: eval mode requested before any running statistics were collected");
    }
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = T(1) / std::sqrt(running_var[c] + static_cast<T>(epsilon));
    }
  }

  std::vector<T> xhat(x.numel()), out(x.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t i = at(b, c, s);
        xhat[i] = (xd[i] - mean[c]) * inv_std[c];
        out[i] = xhat[i] * gamma[c] + beta[c];
      }
    }
  }

  const bool batch_stats = mode == Mode::train;
  return make_result<T>("batch_norm", x.shape(), std::move(out), {x, gamma, beta},
                        [batch, channels, spatial, count, batch_stats, xhat = std::move(xhat),
                         inv_std = std::move(inv_std)](Node<T>& self) {
    auto& nx = *self.inputs[0];
    auto& ng = *self.inputs[1];
    auto& nb = *self.inputs[2];
    const auto& g = self.grad;
    auto at = [&](std::size_t b, std::size_t c, std::size_t s) { return (b * channels + c) * spatial + s; };
    for (std::size_t c = 0; c < channels; ++c) {
      T sum_g = 0, sum_g_h = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < spatial; ++s) {
          const std::size_t i = at(b, c, s);
          sum_g += g[i];
          sum_g_h += g[i] * xhat[i];
        }
      }
      if (ng.requires_grad) ng.ensure_grad()[c] += sum_g_h;
      if (nb.requires_grad) nb.ensure_grad()[c] += sum_g;
      if (!nx.requires_grad) continue;
      auto& gx = nx.ensure_grad();
      const T gi = ng.data[c] * inv_std[c];
      const T n = static_cast<T>(count);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < spatial; ++s) {
          const std::size_t i = at(b, c, s);
          gx[i] += batch_stats ? gi * (g[i] - sum_g / n - xhat[i] * sum_g_h / n) : gi * g[i];
        }
      }
    }
  });
}

template <typename T>
void BatchNorm<T>::visit(const TensorVisitor<T>& fn, const std::string& prefix) {
  fn(join_name(prefix, "gamma"), gamma, TensorRole::parameter);
  fn(join_name(prefix, "beta"), beta, TensorRole::parameter);
  fn(join_name(prefix, "running_mean"), running_mean, TensorRole::buffer);
  fn(join_name(prefix, "running_var"), running_var, TensorRole::buffer);
  fn(join_name(prefix, "tracked"), tracked, TensorRole::buffer);
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t dim, double epsilon_)
    : gamma(Tensor<T>::full({dim}, T(1), true)), beta(Tensor<T>::zeros({dim}, true)), epsilon(epsilon_) {
  if (!(epsilon > 0)) throw ConfigError("layer norm epsilon must be positive");
}

template <typename T>
Tensor<T> LayerNorm<T>::forward(const Tensor<T>& x) const {
  return layer_norm(x, gamma, beta, epsilon);
}

template <typename T>
void LayerNorm<T>::visit(const TensorVisitor<T>& fn, const std::string& prefix) {
  fn(join_name(prefix, "gamma"), gamma, TensorRole::parameter);
  fn(join_name(prefix, "beta"), beta, TensorRole::parameter);
}

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features, RandomSource& rng)
    : weight(kaiming_uniform<T>({in_features, out_features}, in_features, rng)),
      bias(Tensor<T>::zeros({out_features}, true)) {}

template <typename T>
void Linear<T>::visit(const TensorVisitor<T>& fn, const std::string& prefix) {
  fn(join_name(prefix, "weight"), weight, TensorRole::parameter);
  fn(join_name(prefix, "bias"), bias, TensorRole::parameter);
}

#define DCPT_INSTANTIATE_LAYERS(T)                                                                         \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,     \
                                      std::size_t);                                                        \
  template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t, std::size_t);                               \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);             \
  template class Conv2d<T>;                                                                                \
  template class SeparableConv2d<T>;                                                                       \
  template class BatchNorm<T>;                                                                             \
  template class LayerNorm<T>;                                                                             \
  template class Linear<T>;

DCPT_INSTANTIATE_LAYERS(float)
DCPT_INSTANTIATE_LAYERS(double)

}  // namespace dcpt
