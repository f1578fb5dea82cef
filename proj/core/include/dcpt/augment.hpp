#pragma once

#include "dcpt/random.hpp"
#include "dcpt/tensor.hpp"

namespace dcpt {

// Square-image symmetries on [C, S, S] tensors. Results are fresh constants.
// Rotations, flips and the transpose together form the 8-element dihedral
// group, so sampling an element uniformly covers every composition.

template <typename T>
Tensor<T> rotate90(const Tensor<T>& image, int quarter_turns);  // counter-clockwise
template <typename T>
Tensor<T> hflip(const Tensor<T>& image);
template <typename T>
Tensor<T> vflip(const Tensor<T>& image);
template <typename T>
Tensor<T> transpose_image(const Tensor<T>& image);

constexpr int kDihedralCount = 8;

/// index in [0, 8): rotate by (index % 4) quarter turns, then flip horizontally if index >= 4.
template <typename T>
Tensor<T> apply_dihedral(const Tensor<T>& image, int index);

template <typename T>
Tensor<T> augment(const Tensor<T>& image, RandomSource& rng) {
  return apply_dihedral(image, static_cast<int>(rng.below(kDihedralCount)));
}

}  // namespace dcpt
