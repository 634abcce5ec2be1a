#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "brainseg/error.hpp"
#include "brainseg/preprocess.hpp"
#include "brainseg/synthetic.hpp"

namespace brainseg {
namespace {

Image grid_of(std::size_t rows, std::size_t cols, std::initializer_list<double> v) {
  Image g(rows, cols);
  std::copy(v.begin(), v.end(), g.values().begin());
  return g;
}

Image random_image(std::size_t side, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> d(-50.0, 900.0);
  Image g(side, side);
  for (auto& x : g.values()) x = d(gen);
  return g;
}

TEST(Normalize, HandExample) {
  const Image out = normalize(grid_of(2, 2, {0, 10, 5, 10}));
  EXPECT_EQ(out, grid_of(2, 2, {0.0, 1.0, 0.5, 1.0}));
}

TEST(Normalize, ConstantGridGivesZeros) {
  Image g(3, 3);
  std::fill(g.values().begin(), g.values().end(), 7.0);
  const Image out = normalize(g);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, UnitRangeIsUnchanged) {
  const Image g = grid_of(2, 3, {0.0, 0.25, 1.0, 0.5, 0.75, 0.125});
  EXPECT_EQ(normalize(g), g);
}

TEST(Normalize, EmptyInput) {
  try {
    normalize(Image{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(Normalize, IdempotentProperty) {
  for (std::uint32_t seed = 0; seed < 20; ++seed) {
    const Image once = normalize(random_image(9, seed));
    const Image twice = normalize(once);
    for (std::size_t i = 0; i < once.values().size(); ++i) {
      EXPECT_NEAR(once.values()[i], twice.values()[i], 1e-12);
    }
    const auto [lo, hi] = std::minmax_element(once.values().begin(), once.values().end());
    EXPECT_EQ(*lo, 0.0);
    EXPECT_EQ(*hi, 1.0);
  }
}

TEST(ResizeImage, AlignCornersUpsample) {
  const Image out = resize_image(grid_of(2, 2, {0, 1, 1, 0}), 4);
  ASSERT_EQ(out.rows(), 4u);
  EXPECT_EQ(out(0, 0), 0.0);
  EXPECT_EQ(out(0, 3), 1.0);
  EXPECT_EQ(out(3, 0), 1.0);
  EXPECT_EQ(out(3, 3), 0.0);
  // Interior sample at (1/3, 1/3) of the source square.
  EXPECT_NEAR(out(1, 1), 4.0 / 9.0, 1e-12);
}

TEST(ResizeImage, BilinearMidpoints) {
  const Image out = resize_image(grid_of(2, 2, {0, 10, 20, 30}), 3);
  EXPECT_EQ(out, grid_of(3, 3, {0, 5, 10, 10, 15, 20, 20, 25, 30}));
}

TEST(ResizeImage, IdentityIsBitExact) {
  const Image g = random_image(16, 3);
  EXPECT_EQ(resize_image(g, 16), g);
}

TEST(ResizeImage, DownsampleShape) {
  const Image out = resize_image(random_image(512, 1), 256);
  EXPECT_EQ(out.rows(), 256u);
  EXPECT_EQ(out.cols(), 256u);
}

TEST(ResizeImage, NonPositiveSize) {
  try {
    resize_image(random_image(4, 1), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveSize);
  }
  EXPECT_THROW(resize_mask(Mask(4, 4), 0), Error);
}

TEST(ResizeMask, NearestNeighborSampling) {
  Mask m(4, 4);
  m(1, 3) = 1;
  const Mask down = resize_mask(m, 2);
  // Output pixel i samples source row/col 2i + 1.
  EXPECT_EQ(down(0, 1), 1);
  EXPECT_EQ(down(0, 0) + down(1, 0) + down(1, 1), 0);

  Mask two(2, 2);
  two(0, 1) = 1;
  const Mask up = resize_mask(two, 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(up(r, c), (r < 2 && c >= 2) ? 1 : 0);
}

TEST(ResizeMask, AllOnesStaysAllOnes) {
  Mask m(512, 512);
  std::fill(m.values().begin(), m.values().end(), std::uint8_t{1});
  const Mask out = resize_mask(m, 256);
  EXPECT_EQ(out.rows(), 256u);
  EXPECT_TRUE(std::all_of(out.values().begin(), out.values().end(), [](auto v) { return v == 1; }));
}

TEST(ResizeMask, BinaryValueSetAndIdentityProperty) {
  std::mt19937 gen(11);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t side = 1 + gen() % 40;
    Mask m(side, side);
    for (auto& v : m.values()) v = static_cast<std::uint8_t>(gen() % 2);
    EXPECT_EQ(resize_mask(m, side), m);
    const Mask r = resize_mask(m, 1 + gen() % 64);
    EXPECT_TRUE(std::all_of(r.values().begin(), r.values().end(), [](auto v) { return v <= 1; }));
  }
}

TEST(PreprocessConfig, Validate) {
  for (std::size_t s : {64u, 128u, 256u, 512u}) EXPECT_NO_THROW(PreprocessConfig{s}.validate());
  for (std::size_t s : {0u, 32u, 100u, 250u, 1024u}) {
    try {
      PreprocessConfig{s}.validate();
      FAIL() << s;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    }
  }
}

TEST(MakeExample, ShapeContractForEveryConfig) {
  const SliceRecord rec = synthesize_slice(3, TumorType::Meningioma, "p", 512, 25.0, 1);
  for (std::size_t s : {64u, 128u, 256u, 512u}) {
    const Example ex = make_example(rec, PreprocessConfig{s});
    EXPECT_EQ(ex.index, 3);
    EXPECT_EQ(ex.input.shape(), (Shape{1, 1, s, s}));
    EXPECT_EQ(ex.target.shape(), (Shape{1, 1, s, s}));
    for (float v : ex.input.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
    for (float v : ex.target.values()) ASSERT_TRUE(v == 0.0f || v == 1.0f);
  }
}

TEST(MakeExample, EmptyMaskGivesZeroTarget) {
  SliceRecord rec = synthesize_slice(1, TumorType::Glioma, "p", 512, 0.0, 1);
  std::fill(rec.mask.values().begin(), rec.mask.values().end(), std::uint8_t{0});
  const Example ex = make_example(rec, {});
  EXPECT_EQ(ex.target.shape(), (Shape{1, 1, 256, 256}));
  for (float v : ex.target.values()) ASSERT_EQ(v, 0.0f);
}

TEST(MakeBatch, StacksSelection) {
  std::vector<Example> examples;
  for (int i = 0; i < 3; ++i) {
    const SliceRecord rec = synthesize_slice(i + 1, TumorType::Pituitary, "p", 32, 5.0, i);
    examples.push_back(make_example(rec, PreprocessConfig{64}));
  }
  const std::vector<std::size_t> sel{2, 0};
  const auto [x, y] = make_batch(examples, sel);
  EXPECT_EQ(x.shape(), (Shape{2, 1, 64, 64}));
  EXPECT_TRUE(std::equal(x.sample(0).begin(), x.sample(0).end(), examples[2].input.values().begin()));
  EXPECT_TRUE(std::equal(y.sample(1).begin(), y.sample(1).end(), examples[0].target.values().begin()));
}

}  // namespace
}  // namespace brainseg
