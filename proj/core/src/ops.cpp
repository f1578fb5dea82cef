#include "dcpt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gemm.hpp"

namespace dcpt {

namespace {

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// For every flat index of `out`, the flat index into a tensor of shape `small`
// right-aligned against it with size-1 axes stretched.
std::vector<std::size_t> broadcast_index(const Shape& out, const Shape& small) {
  const std::size_t rank = out.size();
  const std::size_t offset = rank - small.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = small.size(); i-- > 0;) {
    strides[offset + i] = small[i] == 1 ? 0 : stride;
    stride *= small[i];
  }
  std::vector<std::size_t> index(shape_numel(out));
  std::vector<std::size_t> counter(rank, 0);
  std::size_t current = 0;
  for (std::size_t flat = 0; flat < index.size(); ++flat) {
    index[flat] = current;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      current += strides[ax];
      if (counter[ax] < out[ax]) break;
      current -= strides[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  return index;
}

bool broadcastable(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  const std::size_t offset = a.size() - b.size();
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[i] != a[offset + i] && b[i] != 1) return false;
  }
  return true;
}

const char* op_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "add";
    case BinaryOp::sub: return "sub";
    case BinaryOp::mul: return "mul";
  }
  return "?";
}

}  // namespace

template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (!broadcastable(sa, sb)) {
    throw ShapeError(std::string(op_name(op)) + ": cannot broadcast " + shape_str(sb) + " onto " +
                     shape_str(sa));
  }
  const std::size_t n = a.numel();
  const bool same = sa == sb;
  std::vector<std::size_t> bidx;
  if (!same) bidx = broadcast_index(sa, sb);
  auto bi = [&](std::size_t i) { return same ? i : bidx[i]; };

  auto ad = a.data();
  auto bd = b.data();
  std::vector<T> out(n);
  switch (op) {
    case BinaryOp::add: for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] + bd[bi(i)]; break;
    case BinaryOp::sub: for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] - bd[bi(i)]; break;
    case BinaryOp::mul: for (std::size_t i = 0; i < n; ++i) out[i] = ad[i] * bd[bi(i)]; break;
  }

  return make_result<T>(
      op_name(op), sa, std::move(out), {a, b},
      [op, same, bidx = std::move(bidx)](Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        const auto& g = self.grad;
        const std::size_t n = g.size();
        auto bi = [&](std::size_t i) { return same ? i : bidx[i]; };
        if (na.requires_grad) {
          auto& ga = na.ensure_grad();
          if (op == BinaryOp::mul) {
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * nb.data[bi(i)];
          } else {
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
          }
        }
        if (nb.requires_grad) {
          auto& gb = nb.ensure_grad();
          switch (op) {
            case BinaryOp::add: for (std::size_t i = 0; i < n; ++i) gb[bi(i)] += g[i]; break;
            case BinaryOp::sub: for (std::size_t i = 0; i < n; ++i) gb[bi(i)] -= g[i]; break;
            case BinaryOp::mul:
              for (std::size_t i = 0; i < n; ++i) gb[bi(i)] += g[i] * na.data[i];
              break;
          }
        }
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result<T>("scale", x.shape(), std::move(out), {x}, [factor](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& g = in.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return make_result<T>("sum", {1}, {total}, {x}, [](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sa.size() != sb.size()) {
    throw ShapeError("matmul: incompatible ranks " + shape_str(sa) + " and " + shape_str(sb));
  }
  const std::size_t r = sa.size();
  for (std::size_t i = 0; i + 2 < r; ++i) {
    if (sa[i] != sb[i]) {
      throw ShapeError("matmul: batch dims differ " + shape_str(sa) + " vs " + shape_str(sb));
    }
  }
  const std::size_t m = sa[r - 2];
  const std::size_t k = sa[r - 1];
  const std::size_t kb = transpose_b ? sb[r - 1] : sb[r - 2];
  const std::size_t n = transpose_b ? sb[r - 2] : sb[r - 1];
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(sa) + " vs " + shape_str(sb) +
                     (transpose_b ? " (transposed)" : ""));
  }
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < r; ++i) batch *= sa[i];

  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(batch * m * n, T(0));
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t bt = 0; bt < batch; ++bt) {
    if (transpose_b) {
      detail::gemm_nt(m, n, k, ad + bt * m * k, bd + bt * n * k, out.data() + bt * m * n);
    } else {
      detail::gemm_nn(m, n, k, ad + bt * m * k, bd + bt * k * n, out.data() + bt * m * n);
    }
  }

  return make_result<T>("matmul", std::move(out_shape), std::move(out), {a, b},
                        [batch, m, n, k, transpose_b](Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const T* g = self.grad.data();
    for (std::size_t bt = 0; bt < batch; ++bt) {
      const T* gb = g + bt * m * n;
      if (na.requires_grad) {
        T* ga = na.ensure_grad().data() + bt * m * k;
        if (transpose_b) {
          detail::gemm_nn(m, k, n, gb, nb.data.data() + bt * n * k, ga);  // dC . B
        } else {
          detail::gemm_nt(m, k, n, gb, nb.data.data() + bt * k * n, ga);  // dC . B^T
        }
      }
      if (nb.requires_grad) {
        if (transpose_b) {
          T* gbw = nb.ensure_grad().data() + bt * n * k;
          detail::gemm_tn(n, k, m, gb, na.data.data() + bt * m * k, gbw);  // dC^T . A
        } else {
          T* gbw = nb.ensure_grad().data() + bt * k * n;
          detail::gemm_tn(k, n, m, na.data.data() + bt * m * k, gb, gbw);  // A^T . dC
        }
      }
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  auto xd = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T mx = xd[base];
      for (std::size_t j = 1; j < s.len; ++j) mx = std::max(mx, xd[base + j * s.inner]);
      T total = 0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const T e = std::exp(xd[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= total;
    }
  }
  return make_result<T>("softmax", x.shape(), std::move(out), {x}, [s](Node<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    const auto& y = self.data;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < s.len; ++j) dot += g[base + j * s.inner] * y[base + j * s.inner];
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t idx = base + j * s.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  auto xd = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T mx = xd[base];
      for (std::size_t j = 1; j < s.len; ++j) mx = std::max(mx, xd[base + j * s.inner]);
      T total = 0;
      for (std::size_t j = 0; j < s.len; ++j) total += std::exp(xd[base + j * s.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] = xd[base + j * s.inner] - lse;
    }
  }
  return make_result<T>("log_softmax", x.shape(), std::move(out), {x}, [s](Node<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    const auto& y = self.data;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        T gsum = 0;
        for (std::size_t j = 0; j < s.len; ++j) gsum += g[base + j * s.inner];
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t idx = base + j * s.inner;
          gx[idx] += g[idx] - std::exp(y[idx]) * gsum;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  auto xd = x.data();
  std::vector<T> out(x.numel());
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = T(0.5) * xd[i] * (T(1) + std::erf(xd[i] * inv_sqrt2));
  }
  return make_result<T>("gelu", x.shape(), std::move(out), {x}, [inv_sqrt2](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& gx = in.ensure_grad();
    const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T v = in.data[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      gx[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {x}, [](Node<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, std::span<const std::size_t> axes) {
  const Shape& in_shape = x.shape();
  const std::size_t r = in_shape.size();
  if (axes.size() != r) throw ShapeError("permute: axis count does not match rank of " + shape_str(in_shape));
  std::vector<bool> used(r, false);
  for (auto ax : axes) {
    if (ax >= r || used[ax]) throw ShapeError("permute: invalid axis list for " + shape_str(in_shape));
    used[ax] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[axes[i]];

  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  // source flat index for every destination flat index
  std::vector<std::size_t> src(x.numel());
  std::vector<std::size_t> counter(r, 0);
  std::size_t current = 0;
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    src[flat] = current;
    for (std::size_t d = r; d-- > 0;) {
      ++counter[d];
      current += in_strides[axes[d]];
      if (counter[d] < out_shape[d]) break;
      current -= in_strides[axes[d]] * counter[d];
      counter[d] = 0;
    }
  }
  auto xd = x.data();
  std::vector<T> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = xd[src[i]];
  return make_result<T>("permute", std::move(out_shape), std::move(out), {x},
                        [src = std::move(src)](Node<T>& self) {
    auto& gx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += self.grad[i];
  });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  const AxisSplit s0 = split_at(first, axis);
  std::vector<std::size_t> lens;
  std::size_t total_len = 0;
  for (const auto& p : parts) {
    const Shape& sp = p.shape();
    bool ok = sp.size() == first.size();
    for (std::size_t i = 0; ok && i < sp.size(); ++i) ok = i == axis || sp[i] == first[i];
    if (!ok) throw ShapeError("concat: " + shape_str(sp) + " incompatible with " + shape_str(first));
    lens.push_back(sp[axis]);
    total_len += sp[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total_len;
  std::vector<T> out(shape_numel(out_shape));
  const std::size_t row = total_len * s0.inner;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pd = parts[p].data();
    const std::size_t chunk = lens[p] * s0.inner;
    for (std::size_t o = 0; o < s0.outer; ++o) {
      std::copy_n(pd.begin() + o * chunk, chunk, out.begin() + o * row + offset);
    }
    offset += chunk;
  }
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return make_result<T>("concat", std::move(out_shape), std::move(out), std::move(inputs),
                        [lens, outer = s0.outer, inner = s0.inner, row](Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < self.inputs.size(); ++p) {
      const std::size_t chunk = lens[p] * inner;
      auto& in = *self.inputs[p];
      if (in.requires_grad) {
        auto& g = in.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t j = 0; j < chunk; ++j) g[o * chunk + j] += self.grad[o * row + offset + j];
        }
      }
      offset += chunk;
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  const AxisSplit s = split_at(x.shape(), axis);
  if (length == 0 || start + length > s.len) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range on axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  const std::size_t chunk = length * s.inner;
  const std::size_t row = s.len * s.inner;
  const std::size_t off = start * s.inner;
  auto xd = x.data();
  std::vector<T> out(s.outer * chunk);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xd.begin() + o * row + off, chunk, out.begin() + o * chunk);
  }
  return make_result<T>("slice", std::move(out_shape), std::move(out), {x},
                        [outer = s.outer, chunk, row, off](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < chunk; ++j) g[o * row + off + j] += self.grad[o * chunk + j];
    }
  });
}

#define DCPT_INSTANTIATE_OPS(T)                                                                \
  template Tensor<T> elementwise(BinaryOp, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                 \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool);                       \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> log_softmax(const Tensor<T>&, std::size_t);                             \
  template Tensor<T> gelu(const Tensor<T>&);                                                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                       \
  template Tensor<T> permute(const Tensor<T>&, std::span<const std::size_t>);                \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                        \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);

DCPT_INSTANTIATE_OPS(float)
DCPT_INSTANTIATE_OPS(double)

}  // namespace dcpt
