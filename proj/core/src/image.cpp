#include "dcpt/image.hpp"

#include <fstream>

#include <png.h>

namespace dcpt {

Image read_png_rgb(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw DataError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  Image image;
  image.width = png.width;
  image.height = png.height;
  image.channels = 3;
  image.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw DataError("PNG writer supports 1 or 3 channels");
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw DataError("image buffer size does not match its dimensions");
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1) throw DataError("PGM output needs a single-channel image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw DataError("short write to " + path.string());
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image, std::size_t side, const std::string& source) {
  if (image.width != side || image.height != side) {
    throw DataError(source + " is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                    ", expected " + std::to_string(side) + "x" + std::to_string(side));
  }
  if (image.channels != 3) throw DataError(source + " is not RGB");
  const std::size_t plane = side * side;
  std::vector<T> data(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) data[c * plane + i] = static_cast<T>(image.pixels[i * 3 + c]) / T(255);
  }
  return Tensor<T>::from_data({3, side, side}, std::move(data));
}

template Tensor<float> image_to_tensor<float>(const Image&, std::size_t, const std::string&);
template Tensor<double> image_to_tensor<double>(const Image&, std::size_t, const std::string&);

}  // namespace dcpt
