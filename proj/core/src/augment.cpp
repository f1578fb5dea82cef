#include "dcpt/augment.hpp"

namespace dcpt {

namespace {

template <typename T, typename Map>
Tensor<T> remap(const Tensor<T>& image, Map source_of) {
  if (image.rank() != 3 || image.dim(1) != image.dim(2)) {
    throw ShapeError("augmentation needs a square [C, S, S] image, got " + shape_str(image.shape()));
  }
  const std::size_t c = image.dim(0), s = image.dim(1);
  const auto src = image.data();
  std::vector<T> out(src.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const std::size_t base = ch * s * s;
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        const auto [sy, sx] = source_of(y, x, s);
        out[base + y * s + x] = src[base + sy * s + sx];
      }
    }
  }
  return Tensor<T>::from_data(image.shape(), std::move(out));
}

struct Pos {
  std::size_t y, x;
};

}  // namespace

template <typename T>
Tensor<T> rotate90(const Tensor<T>& image, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  return remap(image, [k](std::size_t y, std::size_t x, std::size_t s) {
    switch (k) {
      case 1: return Pos{x, s - 1 - y};
      case 2: return Pos{s - 1 - y, s - 1 - x};
      case 3: return Pos{s - 1 - x, y};
      default: return Pos{y, x};
    }
  });
}

template <typename T>
Tensor<T> hflip(const Tensor<T>& image) {
  return remap(image, [](std::size_t y, std::size_t x, std::size_t s) { return Pos{y, s - 1 - x}; });
}

template <typename T>
Tensor<T> vflip(const Tensor<T>& image) {
  return remap(image, [](std::size_t y, std::size_t x, std::size_t s) { return Pos{s - 1 - y, x}; });
}

template <typename T>
Tensor<T> transpose_image(const Tensor<T>& image) {
  return remap(image, [](std::size_t y, std::size_t x, std::size_t) { return Pos{x, y}; });
}

template <typename T>
Tensor<T> apply_dihedral(const Tensor<T>& image, int index) {
  if (index < 0 || index >= kDihedralCount) throw std::out_of_range("dihedral index must be in [0, 8)");
  auto rotated = rotate90(image, index % 4);
  return index >= 4 ? hflip(rotated) : rotated;
}

#define DCPT_INSTANTIATE_AUGMENT(T)                        \
  template Tensor<T> rotate90(const Tensor<T>&, int);      \
  template Tensor<T> hflip(const Tensor<T>&);              \
  template Tensor<T> vflip(const Tensor<T>&);              \
  template Tensor<T> transpose_image(const Tensor<T>&);    \
  template Tensor<T> apply_dihedral(const Tensor<T>&, int);

DCPT_INSTANTIATE_AUGMENT(float)
DCPT_INSTANTIATE_AUGMENT(double)

}  // namespace dcpt
