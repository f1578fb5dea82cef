#include <benchmark/benchmark.h>

#include <span>
#include <vector>

#include "dcpt/layers.hpp"
#include "dcpt/model.hpp"
#include "dcpt/ops.hpp"
#include "dcpt/transformer.hpp"

using namespace dcpt;

namespace {

template <typename T>
Tensor<T> filled(Shape shape, std::uint64_t seed, bool grad = false) {
  RandomSource rng(seed);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1, 1));
  return Tensor<T>::from_data(std::move(shape), std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = filled<float>({n, n}, 1), b = filled<float>({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  auto x = filled<float>({8, c, 32, 32}, 3), w = filled<float>({c, c, 3, 3}, 4), b = filled<float>({c}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
}
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(32);

void BM_Attention(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  auto q = filled<float>({8, t, 64}, 6), k = filled<float>({8, t, 64}, 7), v = filled<float>({8, t, 64}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(multi_head_attention(q, k, v, 4));
}
BENCHMARK(BM_Attention)->Arg(17)->Arg(50);

void BM_DeskModelStep(benchmark::State& state) {
  Model<float> model(ModelConfig::desk_scale(), 9);
  auto x = filled<float>({8, 3, 64, 64}, 10);
  const std::vector<int> t{0, 1, 0, 1, 0, 1, 0, 1};
  for (auto _ : state) {
    auto loss = cross_entropy(model.forward(x, Mode::train), std::span<const int>(t));
    backward(loss);
    for (auto& p : parameters<float>(model)) p.zero_grad();
  }
}
BENCHMARK(BM_DeskModelStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
