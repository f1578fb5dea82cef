#include "dcpt/extractor.hpp"

#include <numeric>

#include "dcpt/ops.hpp"

namespace dcpt {

void ExtractorConfig::validate() const {
  if (in_channels == 0 || base_channels == 0 || input_size == 0) {
    throw ConfigError("extractor sizes must be positive");
  }
  if (group_layer_counts.size() != kGroups) {
    throw ConfigError("extractor needs exactly 5 layer groups, got " + std::to_string(group_layer_counts.size()));
  }
  std::size_t total = 0;
  for (auto n : group_layer_counts) {
    if (n == 0) throw ConfigError("every extractor group needs at least one conv layer");
    total += n;
  }
  if (total != total_layers) {
    throw ConfigError("extractor group layer counts sum to " + std::to_string(total) + ", expected " +
                      std::to_string(total_layers));
  }
  if (input_size < (std::size_t{1} << kGroups)) {
    throw ConfigError("input_size " + std::to_string(input_size) + " is too small for five 2x2 pools");
  }
}

std::size_t ExtractorConfig::output_side() const {
  std::size_t side = input_size;
  for (std::size_t g = 0; g < kGroups; ++g) side /= 2;
  return side;
}

template <typename T>
FeatureExtractor<T>::FeatureExtractor(const ExtractorConfig& config, RandomSource& rng) : config_(config) {
  config_.validate();
  std::size_t channels = config_.in_channels;
  groups_.resize(ExtractorConfig::kGroups);
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    const std::size_t out = config_.group_channels(g);
    for (std::size_t l = 0; l < config_.group_layer_counts[g]; ++l) {
      groups_[g].push_back({Conv2d<T>(channels, out, 3, 1, 1, rng), BatchNorm<T>(out)});
      channels = out;
    }
  }
}

template <typename T>
Tensor<T> FeatureExtractor<T>::forward(const Tensor<T>& x, Mode mode, std::vector<Tensor<T>>* group_outputs) {
  if (x.rank() != 4 || x.dim(1) != config_.in_channels || x.dim(2) != config_.input_size ||
      x.dim(3) != config_.input_size) {
    throw ShapeError("extractor expects [B, " + std::to_string(config_.in_channels) + ", " +
                     std::to_string(config_.input_size) + ", " + std::to_string(config_.input_size) + "], got " +
                     shape_str(x.shape()));
  }
  Tensor<T> h = x;
  for (auto& group : groups_) {
    for (auto& unit : group) h = gelu(unit.norm.forward(unit.conv.forward(h), mode));
    if (group_outputs) group_outputs->push_back(h);
    h = max_pool2d(h, 2, 2);
  }
  return h;
}

template <typename T>
void FeatureExtractor<T>::visit(const TensorVisitor<T>& fn, const std::string& prefix) {
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    for (std::size_t l = 0; l < groups_[g].size(); ++l) {
      const std::string base = join_name(prefix, "g" + std::to_string(g) + ".l" + std::to_string(l));
      groups_[g][l].conv.visit(fn, base + ".conv");
      groups_[g][l].norm.visit(fn, base + ".bn");
    }
  }
}

template <typename T>
std::size_t FeatureExtractor<T>::conv_layer_count() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.size();
  return n;
}

template class FeatureExtractor<float>;
template class FeatureExtractor<double>;

}  // namespace dcpt
