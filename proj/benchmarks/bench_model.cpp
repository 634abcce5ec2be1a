#include <benchmark/benchmark.h>

#include <random>

#include "brainseg/architectures.hpp"
#include "brainseg/autodiff.hpp"

namespace {

using namespace brainseg;

// Args: variant index, side. Base 8, depth 4, batch 8.
ModelConfig config(const benchmark::State& state) {
  static constexpr Variant kinds[] = {Variant::UNet, Variant::UNetSkip, Variant::MNet};
  ModelConfig m;
  m.variant = kinds[state.range(0)];
  m.input_size = static_cast<std::size_t>(state.range(1));
  m.base_channels = 8;
  m.depth = 4;
  return m;
}

Tensor random_batch(std::size_t side, unsigned seed) {
  Tensor t(Shape{8, 1, side, side});
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : t.values()) v = u(gen);
  return t;
}

void BM_ModelPredict(benchmark::State& state) {
  const Model model = build_model(config(state));
  const Tensor batch = random_batch(model.config().input_size, 1);
  state.SetLabel(to_string(model.config().variant));
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(batch));
}

// Forward, loss and backward: one training step without the optimizer update.
void BM_ModelTrainStep(benchmark::State& state) {
  Model model = build_model(config(state));
  const std::size_t side = model.config().input_size;
  const Tensor batch = random_batch(side, 1);
  Tensor target = random_batch(side, 2);
  for (auto& v : target.values()) v = v > 0.9f ? 1.0f : 0.0f;
  state.SetLabel(to_string(model.config().variant));
  for (auto _ : state) {
    nn::Tape tape;
    const nn::Var prob = model.forward(tape, tape.constant(batch));
    const nn::Var loss = nn::combined_loss(tape, prob, target, 1.0);
    model.zero_grad();
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.value().values().data());
  }
}

BENCHMARK(BM_ModelPredict)->Args({0, 128})->Args({2, 128})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ModelTrainStep)
    ->Args({0, 128})
    ->Args({1, 128})
    ->Args({2, 128})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
