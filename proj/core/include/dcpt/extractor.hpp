#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dcpt/layers.hpp"

namespace dcpt {

/// Convolutional stack: five groups of 3x3 conv + batch norm + GELU, each
/// group closed by a 2x2/2 max pool. Group g outputs base_channels * 2^g
/// channels; only the first conv of a group changes the channel count.
struct ExtractorConfig {
  std::size_t in_channels = 3;
  std::size_t base_channels = 32;
  std::vector<std::size_t> group_layer_counts{3, 3, 3, 4, 4};
  std::size_t total_layers = 17;
  std::size_t input_size = 224;

  static constexpr std::size_t kGroups = 5;

  void validate() const;
  std::size_t group_channels(std::size_t group) const { return base_channels << group; }
  std::size_t output_channels() const { return group_channels(kGroups - 1); }
  /// Side after the five pools (floor semantics on odd sides).
  std::size_t output_side() const;

  bool operator==(const ExtractorConfig&) const = default;
};

template <typename T>
class FeatureExtractor {
 public:
  struct ConvUnit {
    Conv2d<T> conv;
    BatchNorm<T> norm;
  };

  FeatureExtractor(const ExtractorConfig& config, RandomSource& rng);

  /// x: [B, in_channels, S, S] with S == input_size. When `group_outputs` is
  /// given it receives each group's last activation (before pooling).
  Tensor<T> forward(const Tensor<T>& x, Mode mode, std::vector<Tensor<T>>* group_outputs = nullptr);

  void visit(const TensorVisitor<T>& fn, const std::string& prefix);

  const ExtractorConfig& config() const { return config_; }
  std::size_t conv_layer_count() const;
  std::size_t pool_count() const { return groups_.size(); }

 private:
  ExtractorConfig config_;
  std::vector<std::vector<ConvUnit>> groups_;
};

}  // namespace dcpt
