#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "brainseg/conv.hpp"

namespace {

using brainseg::kernels::ConvGeometry;

std::vector<float> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

// Args: channels (in == out), side.
ConvGeometry geometry(const benchmark::State& state, std::size_t kernel = 3) {
  ConvGeometry g;
  g.in_channels = g.out_channels = static_cast<std::size_t>(state.range(0));
  g.height = g.width = static_cast<std::size_t>(state.range(1));
  g.kernel = kernel;
  return g;
}

void BM_Conv3x3Forward(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  const auto x = random_buffer(g.in_channels * g.height * g.width, 1);
  const auto w = random_buffer(g.out_channels * g.in_channels * 9, 2);
  const auto b = random_buffer(g.out_channels, 3);
  std::vector<float> y(g.out_channels * g.height * g.width);
  for (auto _ : state) {
    brainseg::kernels::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(g.out_channels * g.in_channels * 9 * g.height * g.width));
}

void BM_Conv3x3Backward(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  const std::size_t n = g.in_channels * g.height * g.width;
  const auto x = random_buffer(n, 1);
  const auto w = random_buffer(g.out_channels * g.in_channels * 9, 2);
  const auto dy = random_buffer(g.out_channels * g.height * g.width, 3);
  std::vector<float> dx(n), dw(w.size()), db(g.out_channels);
  for (auto _ : state) {
    brainseg::kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(),
                                       db.data());
    benchmark::DoNotOptimize(dx.data());
  }
}

void BM_Upconv2x2Forward(benchmark::State& state) {
  ConvGeometry g = geometry(state, 2);
  g.in_channels *= 2;
  const auto x = random_buffer(g.in_channels * g.height * g.width, 1);
  const auto w = random_buffer(g.in_channels * g.out_channels * 4, 2);
  const auto b = random_buffer(g.out_channels, 3);
  std::vector<float> y(g.out_channels * 4 * g.height * g.width);
  for (auto _ : state) {
    brainseg::kernels::upconv2x2_forward(g, x.data(), w.data(), b.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

void BM_Upconv2x2Backward(benchmark::State& state) {
  ConvGeometry g = geometry(state, 2);
  g.in_channels *= 2;
  const auto x = random_buffer(g.in_channels * g.height * g.width, 1);
  const auto w = random_buffer(g.in_channels * g.out_channels * 4, 2);
  const auto dy = random_buffer(g.out_channels * 4 * g.height * g.width, 3);
  std::vector<float> dx(x.size()), dw(w.size()), db(g.out_channels);
  for (auto _ : state) {
    brainseg::kernels::upconv2x2_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(),
                                          db.data());
    benchmark::DoNotOptimize(dx.data());
  }
}

// Level shapes of a base-8 U-Net at 128x128 and 256x256.
void conv_args(benchmark::internal::Benchmark* b) {
  for (auto [c, s] : {std::pair{8, 128}, {16, 64}, {64, 16}, {8, 256}, {32, 64}}) b->Args({c, s});
}

BENCHMARK(BM_Conv3x3Forward)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Conv3x3Backward)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Upconv2x2Forward)->Args({8, 64})->Args({32, 16})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Upconv2x2Backward)->Args({8, 64})->Args({32, 16})->Unit(benchmark::kMicrosecond);

}  // namespace
