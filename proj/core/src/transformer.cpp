#include "dcpt/transformer.hpp"

#include <cmath>

#include "dcpt/ops.hpp"

namespace dcpt {

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::vanilla: return "vanilla";
    case Ablation::pooling: return "pooling";
    case Ablation::conv_projection: return "convproj";
    case Ablation::re_attention: return "reattention";
  }
  return "?";
}

std::optional<Ablation> parse_ablation(std::string_view text) {
  if (text == "vanilla") return Ablation::vanilla;
  if (text == "pooling") return Ablation::pooling;
  if (text == "convproj" || text == "conv_projection") return Ablation::conv_projection;
  if (text == "reattention" || text == "re_attention") return Ablation::re_attention;
  return std::nullopt;
}

std::array<PhasePlan, 3> plan_phases(const TransformerConfig& config, std::size_t channels, std::size_t side) {
  if (config.ffn_ratio == 0 || config.num_classes < 2 || !(config.lambda > 0)) {
    throw ConfigError("transformer needs ffn_ratio >= 1, num_classes >= 2 and lambda > 0");
  }
  std::array<PhasePlan, 3> plan;
  std::size_t width = channels;
  for (std::size_t p = 0; p < 3; ++p) {
    if (config.phase_depths[p] == 0 || config.phase_heads[p] == 0) {
      throw ConfigError("phase depths and head counts must be positive");
    }
    PhasePlan& ph = plan[p];
    ph.depth = config.phase_depths[p];
    if (config.pooling()) {
      ph.width = width;
      ph.heads = config.phase_heads[p];
      ph.side = side;
      width *= 2;
      side = (side - 1) / 2 + 1;
    } else {
      ph.width = channels;
      ph.heads = config.phase_heads[0];
      ph.side = side;
    }
    if (ph.width % ph.heads != 0) {
      throw ConfigError("phase " + std::to_string(p + 1) + ": width " + std::to_string(ph.width) +
                        " not divisible by " + std::to_string(ph.heads) + " heads");
    }
    if (ph.width % 2 != 0) throw ConfigError("token width must be even for sinusoidal encoding");
    if (p > 0 && ph.head_width() != plan[0].head_width()) {
      throw ConfigError("per-head width changes between phases (" + std::to_string(plan[0].head_width()) + " vs " +
                        std::to_string(ph.head_width()) + ")");
    }
  }
  return plan;
}

template <typename T>
Tensor<T> positional_encoding(std::size_t side, std::size_t channels, double lambda) {
  if (channels % 2 != 0) throw ShapeError("positional encoding needs an even channel count");
  const std::size_t positions = side * side;
  std::vector<T> pe(positions * channels);
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t i = 0; i < channels / 2; ++i) {
      const double angle =
          static_cast<double>(p) / std::pow(lambda, static_cast<double>(2 * i) / static_cast<double>(channels));
      pe[p * channels + 2 * i] = static_cast<T>(std::sin(angle));
      pe[p * channels + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return Tensor<T>::from_data({positions, channels}, std::move(pe));
}

namespace {

// [B, c, w, w] -> [B, w*w, c]
template <typename T>
Tensor<T> map_to_rows(const Tensor<T>& map) {
  const std::size_t b = map.dim(0), c = map.dim(1), w = map.dim(2);
  return permute(reshape(map, {b, c, w * w}), {0, 2, 1});
}

// [B, w*w, c] -> [B, c, w, w]
template <typename T>
Tensor<T> rows_to_map(const Tensor<T>& rows, std::size_t side) {
  const std::size_t b = rows.dim(0), c = rows.dim(2);
  return reshape(permute(rows, {0, 2, 1}), {b, c, side, side});
}

template <typename T>
Tensor<T> patch_rows(const TokenBatch<T>& x) {
  return slice(x.tokens, 1, 1, x.token_count() - 1);
}

}  // namespace

template <typename T>
TokenBatch<T> tokenize(const Tensor<T>& features, const Tensor<T>& cls, double lambda) {
  if (features.rank() != 4 || features.dim(2) != features.dim(3)) {
    throw ShapeError("tokenize expects a square [B, c, w, w] map, got " + shape_str(features.shape()));
  }
  const std::size_t b = features.dim(0), c = features.dim(1), w = features.dim(2);
  if (cls.numel() != c) throw ShapeError("CLS token width does not match feature channels");
  auto rows = add(map_to_rows(features), positional_encoding<T>(w, c, lambda));
  auto cls_rows = add(Tensor<T>::zeros({b, 1, c}), reshape(cls, {c}));
  const std::array<Tensor<T>, 2> parts{cls_rows, rows};
  return {concat<T>(parts, 1), w};
}

template <typename T>
Tensor<T> detokenize(const TokenBatch<T>& batch) {
  if (batch.token_count() != batch.side * batch.side + 1) {
    throw ShapeError("token count " + std::to_string(batch.token_count()) + " does not match side " +
                     std::to_string(batch.side));
  }
  return rows_to_map(patch_rows(batch), batch.side);
}

template <typename T>
Tensor<T> cls_tokens(const TokenBatch<T>& batch) {
  return slice(batch.tokens, 1, 0, 1);
}

template <typename T>
TokenBatch<T> assemble_tokens(const Tensor<T>& cls, const Tensor<T>& map) {
  const std::array<Tensor<T>, 2> parts{cls, map_to_rows(map)};
  return {concat<T>(parts, 1), map.dim(2)};
}

template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  const std::size_t b = x.dim(0), t = x.dim(1), c = x.dim(2);
  if (heads == 0 || c % heads != 0) {
    throw ShapeError("width " + std::to_string(c) + " not divisible by " + std::to_string(heads) + " heads");
  }
  return permute(reshape(x, {b, t, heads, c / heads}), {0, 2, 1, 3});
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  const std::size_t b = x.dim(0), h = x.dim(1), t = x.dim(2), e = x.dim(3);
  return reshape(permute(x, {0, 2, 1, 3}), {b, t, h * e});
}

template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads) {
  if (q.rank() != 3 || q.shape() != k.shape()) {
    throw ShapeError("attention expects matching [B, T, c] Q and K, got " + shape_str(q.shape()) + " and " +
                     shape_str(k.shape()));
  }
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(q.dim(2) / heads));
  auto scores = scale(matmul(split_heads(q, heads), split_heads(k, heads), true), inv_sqrt_dk);
  return softmax(scores, 3);
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads) {
  if (v.shape() != q.shape()) throw ShapeError("attention: V shape " + shape_str(v.shape()) + " differs from Q");
  auto weights = attention_weights(q, k, heads);
  return merge_heads(matmul(weights, split_heads(v, heads)));
}

template <typename T>
Tensor<T> mix_heads(const Tensor<T>& maps, const Tensor<T>& theta) {
  if (maps.rank() != 4) throw ShapeError("mix_heads expects [B, h, T, T] maps, got " + shape_str(maps.shape()));
  const std::size_t b = maps.dim(0), h = maps.dim(1);
  const std::size_t plane = maps.dim(2) * maps.dim(3);
  if (theta.rank() != 2 || theta.dim(0) != h || theta.dim(1) != h) {
    throw ShapeError("re-attention theta " + shape_str(theta.shape()) + " does not match " + std::to_string(h) +
                     " heads");
  }
  auto md = maps.data();
  auto th = theta.data();
  std::vector<T> out(maps.numel(), T(0));
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t g = 0; g < h; ++g) {
      T* dst = out.data() + (bi * h + g) * plane;
      for (std::size_t src = 0; src < h; ++src) {
        const T w = th[src * h + g];
        const T* from = md.data() + (bi * h + src) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += w * from[i];
      }
    }
  }
  return make_result<T>("mix_heads", maps.shape(), std::move(out), {maps, theta}, [b, h, plane](Node<T>& self) {
    auto& nm = *self.inputs[0];
    auto& nt = *self.inputs[1];
    const auto& go = self.grad;
    for (std::size_t bi = 0; bi < b; ++bi) {
      for (std::size_t g = 0; g < h; ++g) {
        const T* gd = go.data() + (bi * h + g) * plane;
        for (std::size_t src = 0; src < h; ++src) {
          const std::size_t base = (bi * h + src) * plane;
          if (nm.requires_grad) {
            auto& gm = nm.ensure_grad();
            const T w = nt.data[src * h + g];
            for (std::size_t i = 0; i < plane; ++i) gm[base + i] += w * gd[i];
          }
          if (nt.requires_grad) {
            T acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += nm.data[base + i] * gd[i];
            nt.ensure_grad()[src * h + g] += acc;
          }
        }
      }
    }
  });
}

template <typename T>
Tensor<T> re_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& theta,
                       std::size_t heads) {
  if (v.shape() != q.shape()) throw ShapeError("attention: V shape " + shape_str(v.shape()) + " differs from Q");
  auto mixed = mix_heads(attention_weights(q, k, heads), theta);
  return merge_heads(matmul(mixed, split_heads(v, heads)));
}

// ---- QKV projection --------------------------------------------------------

template <typename T>
QkvProjection<T>::QkvProjection(std::size_t width, QkvMode mode, RandomSource& rng) : mode_(mode) {
  for (std::size_t i = 0; i < 3; ++i) {
    if (mode == QkvMode::linear) {
      linear[i] = Linear<T>(width, width, rng);
    } else {
      conv[i] = SeparableConv2d<T>(width, width, 3, rng);
      norm[i] = BatchNorm<T>(width);
      cls[i] = Linear<T>(width, width, rng);
    }
  }
}

template <typename T>
Qkv<T> QkvProjection<T>::forward(const TokenBatch<T>& x, Mode mode) {
  std::array<Tensor<T>, 3> out;
  if (mode_ == QkvMode::linear) {
    for (std::size_t i = 0; i < 3; ++i) out[i] = linear[i].forward(x.tokens);
    return {out[0], out[1], out[2]};
  }
  if (x.side == 0 || x.token_count() != x.side * x.side + 1) {
    throw ShapeError("separable-conv projection needs the spatial side of the token batch");
  }
  auto map = detokenize(x);
  auto cls_in = cls_tokens(x);
  for (std::size_t i = 0; i < 3; ++i) {
    auto projected = norm[i].forward(conv[i].forward(map), mode);
    out[i] = assemble_tokens(cls[i].forward(cls_in), projected).tokens;
  }
  return {out[0], out[1], out[2]};
}

template <typename T>
void QkvProjection<T>::visit(const TensorVisitor<T>& fn, const std::string& prefix) {
  static constexpr std::array<const char*, 3> names{"q", "k", "v"};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string base = join_name(prefix, names[i]);
    if (mode_ == QkvMode::linear) {
      linear[i].visit(fn, base);
    } else {
      conv[i].visit(fn, base + ".sepconv");
      norm[i].visit(fn, base + ".bn");
      cls[i].visit(fn, base + ".cls");
    }
  }
}

// ---- block ------------------------------------------------------------------

template <typename T>
TransformerBlock<T>::TransformerBlock(std::size_t width, std::size_t heads, std::size_t ffn_ratio,
                                      Ablation ablation, RandomSource& rng)
    : qkv(width, ablation >= Ablation::conv_projection ? QkvMode::separable_conv : QkvMode::linear, rng),
      out(width, width, rng),
      norm1(width),
      ffn_in(width, width * ffn_ratio, rng),
      ffn_out(width * ffn_ratio, width, rng),
      norm2(width),
      heads_(heads) {
  if (width % heads != 0) throw ConfigError("block width not divisible by head count");
  if (ablation >= Ablation::re_attention) {
    std::vector<T> eye(heads * heads, T(0));
    for (std::size_t i = 0; i < heads; ++i) eye[i * heads + i] = T(1);
    theta = Tensor<T>::from_data({heads, heads}, std::move(eye), true);
  }
}

template <typename T>
TokenBatch<T> TransformerBlock<T>::forward(const TokenBatch<T>& x, Mode mode) {
  auto p = qkv.forward(x, mode);
  auto attended = uses_re_attention() ? re_attention(p.q, p.k, p.v, theta, heads_)
                                      : multi_head_attention(p.q, p.k, p.v, heads_);
  auto h = norm1.forward(add(x.tokens, out.forward(attended)));
  auto f = ffn_out.forward(gelu(ffn_in.forward(h)));
  return {norm2.forward(add(h, f)), x.side};
}

template <typename T>
void TransformerBlock<T>::visit(const TensorVisitor<T>& fn, const std::string& prefix) {
  qkv.visit(fn, join_name(prefix, "qkv"));
  if (theta.defined()) fn(join_name(prefix, "theta"), theta, TensorRole::parameter);
  out.visit(fn, join_name(prefix, "attn_out"));
  norm1.visit(fn, join_name(prefix, "ln1"));
  ffn_in.visit(fn, join_name(prefix, "ffn.in"));
  ffn_out.visit(fn, join_name(prefix, "ffn.out"));
  norm2.visit(fn, join_name(prefix, "ln2"));
}

// ---- pooling and head --------------------------------------------------------

template <typename T>
ConvPooling<T>::ConvPooling(std::size_t width, RandomSource& rng)
    : conv(width, 2 * width, 3, 2, 1, rng), cls(width, 2 * width, rng) {}

template <typename T>
TokenBatch<T> ConvPooling<T>::forward(const TokenBatch<T>& x) const {
  auto pooled = gelu(conv.forward(detokenize(x)));
  return assemble_tokens(cls.forward(cls_tokens(x)), pooled);
}

template <typename T>
void ConvPooling<T>::visit(const TensorVisitor<T>& fn, const std::string& prefix) {
  conv.visit(fn, join_name(prefix, "conv"));
  cls.visit(fn, join_name(prefix, "cls"));
}

template <typename T>
ClassifierHead<T>::ClassifierHead(std::size_t width, std::size_t classes) {
  fc.weight = Tensor<T>::zeros({width, classes}, true);
  fc.bias = Tensor<T>::zeros({classes}, true);
}

template <typename T>
Tensor<T> ClassifierHead<T>::forward(const TokenBatch<T>& x) const {
  auto cls = cls_tokens(x);
  return fc.forward(reshape(cls, {x.batch(), x.channels()}));
}

template <typename T>
void ClassifierHead<T>::visit(const TensorVisitor<T>& fn, const std::string& prefix) {
  fc.visit(fn, prefix);
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " + std::to_string(targets.size()) +
                     " targets");
  }
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(c) + ")");
    }
  }
  auto ld = logits.data();
  std::vector<T> probs(b * c);
  T loss = 0;
  for (std::size_t r = 0; r < b; ++r) {
    const T* row = ld.data() + r * c;
    T mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T total = 0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] = std::exp(row[j] - lse);
    loss -= row[targets[r]] - lse;
  }
  loss /= static_cast<T>(b);
  std::vector<int> tgt(targets.begin(), targets.end());
  return make_result<T>("cross_entropy", {1}, {loss}, {logits},
                        [b, c, probs = std::move(probs), tgt = std::move(tgt)](Node<T>& self) {
    auto& gl = self.inputs[0]->ensure_grad();
    const T scale_ = self.grad[0] / static_cast<T>(b);
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t j = 0; j < c; ++j) {
        const T onehot = static_cast<int>(j) == tgt[r] ? T(1) : T(0);
        gl[r * c + j] += scale_ * (probs[r * c + j] - onehot);
      }
    }
  });
}

// ---- full transformer --------------------------------------------------------

template <typename T>
PoolingTransformer<T>::PoolingTransformer(const TransformerConfig& config, std::size_t channels, std::size_t side,
                                          RandomSource& rng)
    : config_(config),
      plan_(plan_phases(config, channels, side)),
      head_(config.pooling() ? plan_[2].width : plan_[0].width, config.num_classes) {
  std::vector<T> cls(channels);
  for (auto& v : cls) v = static_cast<T>(rng.uniform(-0.02, 0.02));
  cls_ = Tensor<T>::from_data({channels}, std::move(cls), true);
  for (std::size_t p = 0; p < 3; ++p) {
    if (p > 0 && config_.pooling()) poolings_.emplace_back(plan_[p - 1].width, rng);
    for (std::size_t i = 0; i < plan_[p].depth; ++i) {
      phases_[p].emplace_back(plan_[p].width, plan_[p].heads, config_.ffn_ratio, config_.ablation, rng);
    }
  }
}

template <typename T>
Tensor<T> PoolingTransformer<T>::forward(const Tensor<T>& features, Mode mode, PhaseTrace* trace) {
  if (features.rank() != 4 || features.dim(1) != plan_[0].width || features.dim(2) != plan_[0].side ||
      features.dim(3) != plan_[0].side) {
    throw ShapeError("transformer expects [B, " + std::to_string(plan_[0].width) + ", " +
                     std::to_string(plan_[0].side) + ", " + std::to_string(plan_[0].side) + "] features, got " +
                     shape_str(features.shape()));
  }
  TokenBatch<T> x = tokenize(features, cls_, config_.lambda);
  for (std::size_t p = 0; p < 3; ++p) {
    if (p > 0 && config_.pooling()) x = poolings_[p - 1].forward(x);
    for (auto& block : phases_[p]) x = block.forward(x, mode);
    if (trace) trace->phase_tokens.push_back(x.tokens.shape());
  }
  return head_.forward(x);
}

template <typename T>
void PoolingTransformer<T>::visit(const TensorVisitor<T>& fn, const std::string& prefix) {
  fn(join_name(prefix, "cls"), cls_, TensorRole::parameter);
  for (std::size_t p = 0; p < 3; ++p) {
    if (p > 0 && config_.pooling()) poolings_[p - 1].visit(fn, join_name(prefix, "pool" + std::to_string(p)));
    for (std::size_t i = 0; i < phases_[p].size(); ++i) {
      phases_[p][i].visit(fn, join_name(prefix, "p" + std::to_string(p) + ".b" + std::to_string(i)));
    }
  }
  head_.visit(fn, join_name(prefix, "head"));
}

#define DCPT_INSTANTIATE_TRANSFORMER(T)                                                                      \
  template Tensor<T> positional_encoding<T>(std::size_t, std::size_t, double);                               \
  template TokenBatch<T> tokenize(const Tensor<T>&, const Tensor<T>&, double);                               \
  template Tensor<T> detokenize(const TokenBatch<T>&);                                                       \
  template Tensor<T> cls_tokens(const TokenBatch<T>&);                                                       \
  template TokenBatch<T> assemble_tokens(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> split_heads(const Tensor<T>&, std::size_t);                                             \
  template Tensor<T> merge_heads(const Tensor<T>&);                                                          \
  template Tensor<T> attention_weights(const Tensor<T>&, const Tensor<T>&, std::size_t);                     \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t); \
  template Tensor<T> mix_heads(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> re_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                  std::size_t);                                                              \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                                  \
  template class QkvProjection<T>;                                                                           \
  template class TransformerBlock<T>;                                                                        \
  template class ConvPooling<T>;                                                                             \
  template class ClassifierHead<T>;                                                                          \
  template class PoolingTransformer<T>;

DCPT_INSTANTIATE_TRANSFORMER(float)
DCPT_INSTANTIATE_TRANSFORMER(double)

}  // namespace dcpt
