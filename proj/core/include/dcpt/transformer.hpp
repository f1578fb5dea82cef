#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dcpt/layers.hpp"

namespace dcpt {

/// Cumulative ablation levels; each level includes everything before it.
enum class Ablation { vanilla = 0, pooling = 1, conv_projection = 2, re_attention = 3 };

std::string_view ablation_name(Ablation a);
/// Accepts "vanilla", "pooling", "convproj"/"conv_projection", "reattention"/"re_attention".
std::optional<Ablation> parse_ablation(std::string_view text);

enum class QkvMode { linear, separable_conv };

struct TransformerConfig {
  std::array<std::size_t, 3> phase_depths{8, 8, 8};
  std::array<std::size_t, 3> phase_heads{4, 8, 16};
  double lambda = 10000.0;
  std::size_t ffn_ratio = 4;
  Ablation ablation = Ablation::re_attention;
  std::size_t num_classes = 2;

  bool pooling() const { return ablation >= Ablation::pooling; }
  bool conv_projection() const { return ablation >= Ablation::conv_projection; }
  bool re_attention() const { return ablation >= Ablation::re_attention; }
  QkvMode qkv_mode() const { return conv_projection() ? QkvMode::separable_conv : QkvMode::linear; }

  bool operator==(const TransformerConfig&) const = default;
};

/// Width, head count, depth and spatial side of one phase.
struct PhasePlan {
  std::size_t width = 0;
  std::size_t heads = 0;
  std::size_t depth = 0;
  std::size_t side = 0;
  std::size_t tokens() const { return side * side + 1; }
  std::size_t head_width() const { return width / heads; }
};

/// Pooling halves the side as floor((w - 1) / 2) + 1 (k3/s2/p1) and doubles
/// the width. Without pooling every phase keeps phase-1 width and heads.
/// Throws ConfigError when a width is not divisible by its head count or the
/// per-head width changes between phases.
std::array<PhasePlan, 3> plan_phases(const TransformerConfig& config, std::size_t channels, std::size_t side);

/// PE(p, 2i) = sin(p / lambda^(2i/c)), PE(p, 2i+1) = cos(p / lambda^(2i/c)),
/// p the row-major patch index. Returns [side^2, channels]; channels must be even.
template <typename T>
Tensor<T> positional_encoding(std::size_t side, std::size_t channels, double lambda);

/// Tokens [B, side^2 + 1, c] with the CLS token at index 0.
template <typename T>
struct TokenBatch {
  Tensor<T> tokens;
  std::size_t side = 0;

  std::size_t batch() const { return tokens.dim(0); }
  std::size_t token_count() const { return tokens.dim(1); }
  std::size_t channels() const { return tokens.dim(2); }
};

/// Row-major flatten of a square map, CLS prepended, PE added to patch rows.
template <typename T>
TokenBatch<T> tokenize(const Tensor<T>& features, const Tensor<T>& cls, double lambda);

/// Patch tokens back to map form [B, c, side, side] (CLS dropped).
template <typename T>
Tensor<T> detokenize(const TokenBatch<T>& batch);

/// CLS rows [B, 1, c].
template <typename T>
Tensor<T> cls_tokens(const TokenBatch<T>& batch);

/// Assembles a token batch from CLS rows [B, 1, c] and a map [B, c, w, w] (no PE).
template <typename T>
TokenBatch<T> assemble_tokens(const Tensor<T>& cls, const Tensor<T>& map);

/// [B, T, c] -> [B, h, T, c/h] and back.
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads);
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x);

/// Per-head softmax(Q K^T / sqrt(c/h)), shape [B, h, T, T].
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k, std::size_t heads);

/// Heads concatenated back to [B, T, c]; the output projection is applied by
/// the enclosing block.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads);

/// out[b, g] = sum_h theta[h, g] * maps[b, h] for maps [B, h, T, T].
template <typename T>
Tensor<T> mix_heads(const Tensor<T>& maps, const Tensor<T>& theta);

/// Attention maps mixed across heads by theta before weighting V. No row
/// renormalisation follows the mixing.
template <typename T>
Tensor<T> re_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const Tensor<T>& theta,
                       std::size_t heads);

template <typename T>
struct Qkv {
  Tensor<T> q, k, v;
};

/// Linear mode: three affine maps over all tokens. Separable-conv mode: patch
/// tokens go through depth-wise separable conv + batch norm in map form,
/// while the CLS token gets its own affine map per projection.
template <typename T>
class QkvProjection {
 public:
  QkvProjection() = default;
  QkvProjection(std::size_t width, QkvMode mode, RandomSource& rng);

  Qkv<T> forward(const TokenBatch<T>& x, Mode mode);
  void visit(const TensorVisitor<T>& fn, const std::string& prefix);
  QkvMode mode() const { return mode_; }

  std::array<Linear<T>, 3> linear;       // linear mode
  std::array<SeparableConv2d<T>, 3> conv;  // separable-conv mode
  std::array<BatchNorm<T>, 3> norm;
  std::array<Linear<T>, 3> cls;

 private:
  QkvMode mode_ = QkvMode::linear;
};

template <typename T>
Qkv<T> qkv_projection(const TokenBatch<T>& x, QkvProjection<T>& projection, Mode mode) {
  return projection.forward(x, mode);
}

/// Post-norm block: x = LN(x + Attn(x)); x = LN(x + FFN(x)).
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock(std::size_t width, std::size_t heads, std::size_t ffn_ratio, Ablation ablation, RandomSource& rng);

  TokenBatch<T> forward(const TokenBatch<T>& x, Mode mode);
  void visit(const TensorVisitor<T>& fn, const std::string& prefix);

  std::size_t heads() const { return heads_; }
  bool uses_re_attention() const { return theta.defined(); }

  QkvProjection<T> qkv;
  Tensor<T> theta;  // [h, h], identity at init; undefined unless re-attention is on
  Linear<T> out;
  LayerNorm<T> norm1;
  Linear<T> ffn_in;
  Linear<T> ffn_out;
  LayerNorm<T> norm2;

 private:
  std::size_t heads_;
};

template <typename T>
TokenBatch<T> transformer_block(const TokenBatch<T>& x, TransformerBlock<T>& block, Mode mode) {
  return block.forward(x, mode);
}

/// Strided 3x3 conv (stride 2, pad 1) doubling channels, then GELU, on the
/// patch map; CLS is mapped c -> 2c by its own affine map.
template <typename T>
class ConvPooling {
 public:
  ConvPooling(std::size_t width, RandomSource& rng);

  TokenBatch<T> forward(const TokenBatch<T>& x) const;
  void visit(const TensorVisitor<T>& fn, const std::string& prefix);

  Conv2d<T> conv;
  Linear<T> cls;
};

template <typename T>
TokenBatch<T> conv_pooling(const TokenBatch<T>& x, const ConvPooling<T>& pooling) {
  return pooling.forward(x);
}

/// Single affine map on the CLS token to class logits [B, classes]. Weights
/// start at zero so an untrained model predicts the uniform distribution.
template <typename T>
class ClassifierHead {
 public:
  ClassifierHead(std::size_t width, std::size_t classes);

  Tensor<T> forward(const TokenBatch<T>& x) const;
  void visit(const TensorVisitor<T>& fn, const std::string& prefix);

  Linear<T> fc;
};

template <typename T>
Tensor<T> classify(const TokenBatch<T>& x, const ClassifierHead<T>& head) {
  return head.forward(x);
}

/// Mean over the batch of -log softmax(logits)[target].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets);

/// Token shapes observed at the end of each phase, for shape assertions.
struct PhaseTrace {
  std::vector<Shape> phase_tokens;
};

template <typename T>
class PoolingTransformer {
 public:
  PoolingTransformer(const TransformerConfig& config, std::size_t channels, std::size_t side, RandomSource& rng);

  /// features: [B, c, w, w] -> logits [B, classes]
  Tensor<T> forward(const Tensor<T>& features, Mode mode, PhaseTrace* trace = nullptr);
  void visit(const TensorVisitor<T>& fn, const std::string& prefix);

  const TransformerConfig& config() const { return config_; }
  const std::array<PhasePlan, 3>& plan() const { return plan_; }
  std::vector<TransformerBlock<T>>& phase(std::size_t p) { return phases_.at(p); }

 private:
  TransformerConfig config_;
  std::array<PhasePlan, 3> plan_;
  Tensor<T> cls_;
  std::array<std::vector<TransformerBlock<T>>, 3> phases_;
  std::vector<ConvPooling<T>> poolings_;
  ClassifierHead<T> head_;
};

}  // namespace dcpt
