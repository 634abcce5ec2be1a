#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "brainseg/architectures.hpp"
#include "brainseg/error.hpp"

namespace brainseg {
namespace {

ModelConfig cfg_of(Variant v, std::size_t size, std::size_t base, std::size_t depth) {
  ModelConfig c;
  c.variant = v;
  c.input_size = size;
  c.base_channels = base;
  c.depth = depth;
  return c;
}

Tensor random_batch(std::size_t n, std::size_t size, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  Tensor t(Shape{n, 1, size, size});
  for (auto& v : t.values()) v = d(gen);
  return t;
}

const Variant kVariants[] = {Variant::UNet, Variant::UNetSkip, Variant::MNet};

TEST(Variant, NamesRoundTrip) {
  for (Variant v : kVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_EQ(display_name(Variant::MNet), "M-Net");
  try {
    parse_variant("resnet");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownVariant);
  }
}

TEST(ModelConfig, IncompatibleSize) {
  try {
    build_model(cfg_of(Variant::MNet, 250, 64, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IncompatibleSize);
  }
  EXPECT_THROW(build_model(cfg_of(Variant::UNet, 64, 0, 4)), Error);
  EXPECT_THROW(build_model(cfg_of(Variant::UNet, 64, 4, 0)), Error);
}

// Frozen from tests/oracles/param_count.py, which counts every layer from
// the architecture description without using this library.
struct CountCase {
  std::size_t base, depth, unet, mnet;
};

class ParameterCount : public ::testing::TestWithParam<CountCase> {};

TEST_P(ParameterCount, MatchesIndependentOracle) {
  const auto p = GetParam();
  const std::size_t size = std::size_t{1} << p.depth;
  EXPECT_EQ(build_model(cfg_of(Variant::UNet, size * 2, p.base, p.depth)).parameter_count(), p.unet);
  EXPECT_EQ(build_model(cfg_of(Variant::UNetSkip, size * 2, p.base, p.depth)).parameter_count(), p.unet);
  EXPECT_EQ(build_model(cfg_of(Variant::MNet, size * 2, p.base, p.depth)).parameter_count(), p.mnet);
}

INSTANTIATE_TEST_SUITE_P(Oracle, ParameterCount,
                         ::testing::Values(CountCase{1, 1, 118, 136}, CountCase{2, 2, 1883, 2011},
                                           CountCase{4, 4, 121653, 124095},
                                           CountCase{8, 4, 485673, 493271},
                                           CountCase{16, 4, 1940817, 1966887},
                                           CountCase{32, 4, 7759521, 7855175},
                                           CountCase{64, 4, 31030593, 31395975}));

TEST(ParameterCountProperties, SingleConvHasTenParameters) {
  nn::Parameter w("c.weight", Shape{1, 1, 3, 3}), b("c.bias", Shape{1, 1, 1, 1});
  EXPECT_EQ(w.value.numel() + b.value.numel(), 10u);
}

TEST(ParameterCountProperties, DoublingBaseRoughlyQuadruples) {
  for (Variant v : kVariants) {
    for (std::size_t base : {8u, 16u, 32u}) {
      const double a = double(build_model(cfg_of(v, 256, base, 4)).parameter_count());
      const double b = double(build_model(cfg_of(v, 256, 2 * base, 4)).parameter_count());
      EXPECT_GT(b / a, 3.9) << to_string(v) << " base " << base;
      EXPECT_LT(b / a, 4.1) << to_string(v) << " base " << base;
    }
  }
  EXPECT_LT(build_model(cfg_of(Variant::UNet, 256, 8, 4)).parameter_count(),
            build_model(cfg_of(Variant::UNet, 256, 64, 4)).parameter_count());
}

TEST(ParameterCountProperties, CountIndependentOfInputSize) {
  for (Variant v : kVariants) {
    EXPECT_EQ(build_model(cfg_of(v, 32, 4, 3)).parameter_count(),
              build_model(cfg_of(v, 128, 4, 3)).parameter_count());
  }
}

class Forward : public ::testing::TestWithParam<Variant> {};

TEST_P(Forward, ShapeAndOpenUnitRange) {
  for (std::size_t depth : {1u, 2u, 3u}) {
    for (std::size_t mult : {1u, 3u}) {
      const std::size_t size = (std::size_t{1} << depth) * mult;
      const Model m = build_model(cfg_of(GetParam(), size, 3, depth));
      const Tensor y = m.predict(random_batch(2, size, 7));
      ASSERT_EQ(y.shape(), (Shape{2, 1, size, size}));
      for (float v : y.values()) {
        ASSERT_TRUE(std::isfinite(v));
        ASSERT_GT(v, 0.0f);
        ASSERT_LT(v, 1.0f);
      }
    }
  }
}

TEST_P(Forward, ZeroInputIsWellDefined) {
  const Model m = build_model(cfg_of(GetParam(), 32, 4, 4));
  const Tensor y = m.predict(Tensor(Shape{1, 1, 32, 32}));
  for (float v : y.values()) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_GT(v, 0.0f);
    ASSERT_LT(v, 1.0f);
  }
}

TEST_P(Forward, BatchIndependenceAndDeterminism) {
  const Model m = build_model(cfg_of(GetParam(), 32, 4, 4));
  const Tensor four = random_batch(4, 32, 9);
  Tensor one(Shape{1, 1, 32, 32});
  std::copy(four.sample(0).begin(), four.sample(0).end(), one.values().begin());
  const Tensor y4 = m.predict(four);
  const Tensor y1 = m.predict(one);
  for (std::size_t i = 0; i < y1.numel(); ++i) ASSERT_NEAR(y1.values()[i], y4.values()[i], 1e-5);
  EXPECT_EQ(m.predict(four), y4);
}

TEST_P(Forward, TapeForwardMatchesPredict) {
  const Model m = build_model(cfg_of(GetParam(), 16, 2, 2));
  const Tensor x = random_batch(2, 16, 4);
  nn::Tape tape;
  const nn::Var y = m.forward(tape, tape.constant(x));
  EXPECT_EQ(y.value(), m.predict(x));
}

TEST_P(Forward, RejectsWrongInputShape) {
  const Model m = build_model(cfg_of(GetParam(), 16, 2, 2));
  try {
    m.predict(Tensor(Shape{1, 1, 32, 32}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
  EXPECT_THROW(m.predict(Tensor(Shape{1, 2, 16, 16})), Error);
}

TEST_P(Forward, SeedControlsInitialization) {
  auto c = cfg_of(GetParam(), 16, 2, 2);
  const Tensor x = random_batch(1, 16, 2);
  const Tensor a = build_model(c).predict(x);
  EXPECT_EQ(build_model(c).predict(x), a);
  c.init_seed = 99;
  EXPECT_NE(build_model(c).predict(x), a);
}

// End-to-end check of the parameter gradients through a whole tiny network.
TEST_P(Forward, ParameterGradientsMatchFiniteDifferences) {
  Model m = build_model(cfg_of(GetParam(), 8, 4, 2));
  const Tensor x = random_batch(2, 8, 12);
  Tensor target(Shape{2, 1, 8, 8});
  for (std::size_t i = 0; i < target.numel(); ++i) target.values()[i] = (i % 7 < 3) ? 1.0f : 0.0f;

  // Zero-initialized biases put whole dead regions exactly on the ReLU kink,
  // where central differences average the two one-sided slopes.
  std::mt19937 bias_gen(5);
  std::uniform_real_distribution<float> bias_init(-0.1f, 0.1f);
  for (const auto& p : m.parameters()) {
    if (p->name.ends_with(".bias")) {
      for (auto& v : p->value.values()) v = bias_init(bias_gen);
    }
  }

  auto loss_value = [&] {
    nn::Tape tape(false);
    return double(nn::combined_loss(tape, m.forward(tape, tape.constant(x)), target, 1.0).value().values()[0]);
  };

  m.zero_grad();
  {
    nn::Tape tape;
    tape.backward(nn::combined_loss(tape, m.forward(tape, tape.constant(x)), target, 1.0));
  }

  std::size_t checked = 0, agree = 0;
  std::mt19937 gen(1);
  for (const auto& p : m.parameters()) {
    for (int k = 0; k < 3; ++k) {
      const std::size_t i = gen() % p->value.numel();
      float& w = p->value.values()[i];
      const float keep = w;
      const float h = 1e-3f;
      w = keep + h;
      const double up = loss_value();
      w = keep - h;
      const double down = loss_value();
      w = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad.values()[i];
      ++checked;
      if (std::abs(numeric - analytic) <= 1e-3 + 5e-2 * std::abs(numeric)) ++agree;
    }
  }
  // A bias shift moves a whole channel, so a few differences still straddle
  // ReLU kinks even at this step.
  EXPECT_GE(double(agree), 0.95 * double(checked)) << agree << "/" << checked;
}

INSTANTIATE_TEST_SUITE_P(Variants, Forward, ::testing::ValuesIn(kVariants),
                         [](const auto& info) { return to_string(info.param); });

TEST(Summary, TotalsAndShapes) {
  for (Variant v : kVariants) {
    const Model m = build_model(cfg_of(v, 64, 4, 3));
    const auto rows = m.summary();
    ASSERT_FALSE(rows.empty());
    std::size_t total = 0;
    for (const auto& r : rows) total += r.parameters;
    EXPECT_EQ(total, m.parameter_count()) << to_string(v);
    EXPECT_EQ(rows.back().output, (Shape{1, 1, 64, 64}));
    const std::string text = format_summary(m);
    EXPECT_NE(text.find(std::to_string(m.parameter_count())), std::string::npos);
  }
}

TEST(Summary, SkipVariantDiffersOnlyInWiring) {
  const Tensor x = random_batch(1, 16, 3);
  const Model a = build_model(cfg_of(Variant::UNet, 16, 2, 2));
  const Model b = build_model(cfg_of(Variant::UNetSkip, 16, 2, 2));
  ASSERT_EQ(a.parameters().size(), b.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters()[i]->value, b.parameters()[i]->value);
  }
  EXPECT_NE(a.predict(x), b.predict(x));
}

}  // namespace
}  // namespace brainseg
