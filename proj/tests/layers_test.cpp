#include <gtest/gtest.h>

#include <cmath>

#include "dcpt/grad_check.hpp"
#include "dcpt/layers.hpp"
#include "dcpt/ops.hpp"
#include "fixtures.hpp"

using namespace dcpt;
using fixtures::random_tensor;

namespace {

constexpr double kTol = 1e-6;

// Dense [C, C, k, k] kernel with the depthwise kernel on its diagonal.
Tensor<double> dense_from_depthwise(const Tensor<double>& dw) {
  const std::size_t c = dw.dim(0), k = dw.dim(2);
  std::vector<double> w(c * c * k * k, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < k * k; ++i) w[(ch * c + ch) * k * k + i] = dw[ch * k * k + i];
  return Tensor<double>::from_data({c, c, k, k}, std::move(w));
}

}  // namespace

TEST(Conv, OutputSizeArithmetic) {
  EXPECT_EQ(conv_output_size(7, 3, 2, 1), 4u);
  EXPECT_EQ(conv_output_size(224, 3, 1, 1), 224u);
  EXPECT_THROW(conv_output_size(2, 5, 1, 0), ShapeError);
}

TEST(Conv, MatchesLoopNestOracle) {
  RandomSource rng(1);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 1}, {1, 0}, {2, 0}}) {
    auto x = random_tensor<double>({2, 3, 7, 6}, rng);
    auto w = random_tensor<double>({4, 3, 3, 3}, rng);
    auto b = random_tensor<double>({4}, rng);
    auto got = conv2d(x, w, b, stride, pad);
    auto want = oracle::conv2d(x, w, &b, stride, pad);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv, DepthwiseMatchesBlockDiagonalDenseConv) {
  RandomSource rng(2);
  auto x = random_tensor<double>({2, 3, 5, 5}, rng);
  auto w = random_tensor<double>({3, 1, 3, 3}, rng);
  auto got = depthwise_conv2d(x, w, Tensor<double>{}, 1, 1);
  auto want = oracle::conv2d(x, dense_from_depthwise(w), nullptr, 1, 1);
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Conv, SeparableEqualsTwoDenseStages) {
  RandomSource rng(3);
  SeparableConv2d<double> sep(4, 6, 3, rng);
  auto x = random_tensor<double>({2, 4, 5, 5}, rng);
  auto got = separable_conv2d(x, sep);
  auto mid = oracle::conv2d(x, dense_from_depthwise(sep.depthwise_weight), &sep.depthwise_bias, 1, 1);
  auto want = oracle::conv2d(mid, sep.pointwise_weight, &sep.pointwise_bias, 1, 0);
  ASSERT_EQ(got.shape(), (Shape{2, 6, 5, 5}));
  for (std::size_t i = 0; i < got.numel(); ++i) EXPECT_NEAR(got[i], want[i], 1e-10);
}

TEST(Conv, SeparableIdentityKernelsAreANoOp) {
  RandomSource rng(4);
  SeparableConv2d<double> sep(3, 3, 3, rng);
  std::fill(sep.depthwise_weight.mutable_data().begin(), sep.depthwise_weight.mutable_data().end(), 0.0);
  for (std::size_t c = 0; c < 3; ++c) sep.depthwise_weight.mutable_data()[c * 9 + 4] = 1.0;
  std::fill(sep.pointwise_weight.mutable_data().begin(), sep.pointwise_weight.mutable_data().end(), 0.0);
  for (std::size_t c = 0; c < 3; ++c) sep.pointwise_weight.mutable_data()[c * 3 + c] = 1.0;
  std::fill(sep.depthwise_bias.mutable_data().begin(), sep.depthwise_bias.mutable_data().end(), 0.0);
  std::fill(sep.pointwise_bias.mutable_data().begin(), sep.pointwise_bias.mutable_data().end(), 0.0);
  auto x = random_tensor<double>({1, 3, 4, 4}, rng);
  auto y = sep.forward(x);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(ConvGrad, InputWeightAndBias) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    RandomSource rng(100 + s);
    auto w = random_tensor<double>({2, 3, 3, 3}, rng);
    auto b = random_tensor<double>({2}, rng);
    auto x = random_tensor<double>({2, 3, 5, 4}, rng);
    EXPECT_LT(grad_check([&](const Tensor<double>& v) { return sum(gelu(conv2d(v, w, b, 2, 1))); }, x), kTol);
    EXPECT_LT(grad_check([&](const Tensor<double>& v) { return sum(gelu(conv2d(x, v, b, 1, 1))); }, w), kTol);
    EXPECT_LT(grad_check([&](const Tensor<double>& v) { return sum(gelu(conv2d(x, w, v, 1, 0))); }, b), kTol);
    auto dw = random_tensor<double>({3, 1, 3, 3}, rng);
    auto db = random_tensor<double>({3}, rng);
    EXPECT_LT(grad_check([&](const Tensor<double>& v) { return sum(gelu(depthwise_conv2d(v, dw, db, 1, 1))); }, x,
                         1e-5),
              kTol);
    EXPECT_LT(grad_check([&](const Tensor<double>& v) { return sum(gelu(depthwise_conv2d(x, v, Tensor<double>{}, 2, 1))); },
                         dw),
              kTol);
  }
}

TEST(MaxPool, FloorsOddExtentsAndPicksFirstMaximum) {
  auto x = Tensor<double>::from_data({1, 1, 3, 3}, {1, 5, 2, 5, 0, 9, 3, 4, 8}, true);
  auto y = max_pool2d(x);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 5);
  backward(sum(y));
  EXPECT_EQ(x.grad()[1], 1.0);  // first of the tied 5s
  EXPECT_EQ(x.grad()[3], 0.0);
}

TEST(MaxPoolGrad, DistinctValues) {
  RandomSource rng(5);
  auto x = random_tensor<double>({2, 2, 4, 5}, rng);
  EXPECT_LT(grad_check([](const Tensor<double>& v) { return sum(gelu(max_pool2d(v))); }, x), kTol);
}

TEST(Linear, AffineOverLastAxis) {
  RandomSource rng(6);
  auto x = random_tensor<double>({2, 3, 4}, rng);
  auto w = random_tensor<double>({4, 5}, rng);
  auto b = random_tensor<double>({5}, rng);
  auto y = linear(x, w, b);
  ASSERT_EQ(y.shape(), (Shape{2, 3, 5}));
  double s = b[2];
  for (std::size_t k = 0; k < 4; ++k) s += x[12 + 4 + k] * w[k * 5 + 2];
  EXPECT_NEAR(y[(1 * 3 + 1) * 5 + 2], s, 1e-14);
  EXPECT_LT(grad_check([&](const Tensor<double>& v) { return sum(gelu(linear(x, v, b))); }, w), kTol);
  EXPECT_LT(grad_check([&](const Tensor<double>& v) { return sum(gelu(linear(v, w, b))); }, x), kTol);
}

TEST(LayerNorm, NormalisesAndBackpropagates) {
  RandomSource rng(7);
  LayerNorm<double> ln(6);
  auto x = random_tensor<double>({3, 6}, rng, -2, 3);
  auto y = ln.forward(x);
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 6; ++i) m += y[r * 6 + i];
    m /= 6;
    for (std::size_t i = 0; i < 6; ++i) v += (y[r * 6 + i] - m) * (y[r * 6 + i] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 6, 1.0, 1e-4);
  }
  auto g = random_tensor<double>({6}, rng);
  auto w = random_tensor<double>({3, 6}, rng);
  EXPECT_LT(grad_check([&](const Tensor<double>& v) { return sum(layer_norm(v, g, ln.beta, 1e-5) * w); }, x), kTol);
  EXPECT_LT(grad_check([&](const Tensor<double>& v) { return sum(layer_norm(x, v, ln.beta, 1e-5) * w); }, g), kTol);
}

TEST(BatchNorm, TrainStatisticsAndRunningUpdate) {
  RandomSource rng(8);
  BatchNorm<double> bn(2);
  EXPECT_FALSE(bn.has_running_stats());
  auto x = random_tensor<double>({3, 2, 2, 2}, rng, 0, 4);
  EXPECT_THROW(bn.forward(x, Mode::eval), ConfigError);
  auto y = bn.forward(x, Mode::train);
  // Oracle: per-channel mean / biased variance over 12 values.
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> vals;
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t i = 0; i < 4; ++i) vals.push_back(x[(b * 2 + c) * 4 + i]);
    double m = 0;
    for (auto v : vals) m += v;
    m /= 12;
    double var = 0;
    for (auto v : vals) var += (v - m) * (v - m);
    EXPECT_NEAR(y[(0 * 2 + c) * 4], (vals[0] - m) / std::sqrt(var / 12 + 1e-5), 1e-12);
    EXPECT_NEAR(bn.running_mean[c], 0.1 * m, 1e-12);
    EXPECT_NEAR(bn.running_var[c], 0.9 + 0.1 * var / 11, 1e-12);
  }
  EXPECT_TRUE(bn.has_running_stats());
  auto e = bn.forward(x, Mode::eval);
  EXPECT_NEAR(e[0], (x[0] - bn.running_mean[0]) / std::sqrt(bn.running_var[0] + 1e-5), 1e-12);
}

TEST(BatchNormGrad, TrainMode) {
  RandomSource rng(9);
  auto x = random_tensor<double>({2, 3, 2, 2}, rng);
  auto w = random_tensor<double>({2, 3, 2, 2}, rng);
  EXPECT_LT(grad_check(
                [&](const Tensor<double>& v) {
                  BatchNorm<double> bn(3);
                  return sum(bn.forward(v, Mode::train) * w);
                },
                x),
            kTol);
}
