#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dcpt/extractor.hpp"
#include "dcpt/transformer.hpp"

namespace dcpt {

enum class Precision { f32, f64 };

struct ModelConfig {
  ExtractorConfig extractor;
  TransformerConfig transformer;
  Precision precision = Precision::f32;

  /// Architecture constants from the original full-size setup (224 px input, 32 base channels).
  static ModelConfig full_scale() { return {}; }
  /// Laptop-sized default: 64 px input, 4 base channels, same depths and heads.
  static ModelConfig desk_scale();

  void validate() const;

  /// Flat JSON object with keys image_size, base_channels, group_layer_counts,
  /// phase_depths, phase_heads, lambda, ffn_ratio, ablation, precision
  /// (plus in_channels, total_layers, num_classes).
  std::string to_json() const;
  /// Missing keys keep the values already in `base`.
  static ModelConfig from_json(std::string_view text, const ModelConfig& base = desk_scale());

  bool operator==(const ModelConfig&) const = default;
};

/// Intermediate values captured during a forward pass.
template <typename T>
struct ForwardTrace {
  std::vector<Tensor<T>> group_activations;  // extractor group outputs before pooling
  Shape features;
  PhaseTrace phases;
};

/// Extractor followed by the pooling transformer. Copying is disabled since
/// tensors are shared handles and a copy would alias every parameter.
template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  /// images: [B, 3, S, S] -> logits [B, classes]
  Tensor<T> forward(const Tensor<T>& images, Mode mode, ForwardTrace<T>* trace = nullptr);

  void visit(const TensorVisitor<T>& fn, const std::string& prefix = "");

  const ModelConfig& config() const { return config_; }
  FeatureExtractor<T>& extractor() { return extractor_; }
  PoolingTransformer<T>& transformer() { return transformer_; }

 private:
  ModelConfig config_;
  FeatureExtractor<T> extractor_;
  PoolingTransformer<T> transformer_;
};

}  // namespace dcpt
