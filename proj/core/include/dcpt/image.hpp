#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dcpt/tensor.hpp"

namespace dcpt {

/// 8-bit interleaved raster. channels is 1 (gray) or 3 (RGB).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
};

/// Any PNG libpng understands, converted to 8-bit RGB. Throws DataError naming the path.
Image read_png_rgb(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
/// Binary PGM (P5); image must be single-channel.
void write_pgm(const std::filesystem::path& path, const Image& image);

/// [3, S, S] with values in [0, 1]. Throws DataError if the image is not S x S.
template <typename T>
Tensor<T> image_to_tensor(const Image& image, std::size_t side, const std::string& source = "image");

template <typename T>
Tensor<T> load_image(const std::filesystem::path& path, std::size_t side) {
  return image_to_tensor<T>(read_png_rgb(path), side, path.string());
}

}  // namespace dcpt
