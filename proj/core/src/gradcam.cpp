#include "dcpt/gradcam.hpp"

#include <algorithm>
#include <cmath>

#include "dcpt/ops.hpp"

namespace dcpt {

Image Heatmap::to_image() const {
  Image im;
  im.width = width;
  im.height = height;
  im.channels = 1;
  im.pixels.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    im.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i], 0.0, 1.0) * 255.0));
  }
  return im;
}

Heatmap gradcam_from_activation(std::span<const double> activation, std::span<const double> grad, std::size_t channels,
                                std::size_t height, std::size_t width) {
  const std::size_t plane = height * width;
  if (activation.size() != channels * plane || grad.size() != channels * plane) {
    throw ShapeError("activation and gradient must both be [C, H, W]");
  }
  Heatmap map{height, width, std::vector<double>(plane, 0.0)};
  for (std::size_t k = 0; k < channels; ++k) {
    double alpha = 0;
    for (std::size_t i = 0; i < plane; ++i) alpha += grad[k * plane + i];
    alpha /= static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) map.values[i] += alpha * activation[k * plane + i];
  }
  for (auto& v : map.values) v = std::max(v, 0.0);
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double mn = *lo, mx = *hi;
  if (mx <= 0) return map;
  for (auto& v : map.values) v = mx > mn ? (v - mn) / (mx - mn) : 1.0;
  return map;
}

Heatmap upsample_nearest(const Heatmap& map, std::size_t height, std::size_t width) {
  Heatmap out{height, width, std::vector<double>(height * width)};
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * map.height / height;
    for (std::size_t x = 0; x < width; ++x) out.values[y * width + x] = map.values[sy * map.width + x * map.width / width];
  }
  return out;
}

template <typename T>
Heatmap gradcam_heatmap(Model<T>& model, const Tensor<T>& image, std::size_t layer, int target_class) {
  const auto& cfg = model.config();
  if (layer >= ExtractorConfig::kGroups) {
    throw ConfigError("Grad-CAM layer must be an extractor group in [0, " + std::to_string(ExtractorConfig::kGroups) +
                      "), got " + std::to_string(layer));
  }
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= cfg.transformer.num_classes) {
    throw ConfigError("Grad-CAM target class " + std::to_string(target_class) + " is out of range");
  }
  const std::size_t side = cfg.extractor.input_size;
  if (image.shape() != Shape{3, side, side}) {
    throw ShapeError("Grad-CAM expects a [3, " + std::to_string(side) + ", " + std::to_string(side) + "] image, got " +
                     shape_str(image.shape()));
  }
  ForwardTrace<T> trace;
  auto logits = model.forward(reshape(image, {1, 3, side, side}), Mode::eval, &trace);
  auto target = sum(slice(logits, 1, static_cast<std::size_t>(target_class), 1));
  backward(target);

  const auto& act = trace.group_activations.at(layer);
  const std::size_t c = act.dim(1), h = act.dim(2), w = act.dim(3);
  std::vector<double> a(act.data().begin(), act.data().end());
  std::vector<double> g(act.numel(), 0.0);
  if (act.has_grad()) std::copy(act.grad().begin(), act.grad().end(), g.begin());
  for (auto& p : parameters<T>(model)) p.zero_grad();
  return upsample_nearest(gradcam_from_activation(a, g, c, h, w), side, side);
}

template Heatmap gradcam_heatmap(Model<float>&, const Tensor<float>&, std::size_t, int);
template Heatmap gradcam_heatmap(Model<double>&, const Tensor<double>&, std::size_t, int);

}  // namespace dcpt
