#pragma once

#include <span>
#include <vector>

#include "dcpt/image.hpp"
#include "dcpt/model.hpp"

namespace dcpt {

struct Heatmap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major, in [0, 1]

  /// 8-bit grayscale, value * 255 rounded.
  Image to_image() const;
};

/// Core of Grad-CAM on one sample. activation and grad are [C, H, W]:
/// alpha_k = mean over (h, w) of grad_k, map = ReLU(sum_k alpha_k A_k), then
/// min-max normalised. A map that is zero everywhere stays zero; a constant
/// positive map becomes all ones.
Heatmap gradcam_from_activation(std::span<const double> activation, std::span<const double> grad, std::size_t channels,
                                std::size_t height, std::size_t width);

Heatmap upsample_nearest(const Heatmap& map, std::size_t height, std::size_t width);

/// image: [3, S, S]. layer indexes the extractor groups (0..4); the
/// activation used is the group output before its max-pool. Runs in eval
/// mode. The returned map is S x S.
template <typename T>
Heatmap gradcam_heatmap(Model<T>& model, const Tensor<T>& image, std::size_t layer, int target_class);

}  // namespace dcpt
