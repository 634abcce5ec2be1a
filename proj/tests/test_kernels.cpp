#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "brainseg/autodiff.hpp"
#include "brainseg/conv.hpp"
#include "brainseg/error.hpp"

namespace brainseg {
namespace {

using kernels::ConvGeometry;

std::vector<float> random_vec(std::size_t n, std::mt19937& gen, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> d(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

// Direct-loop references in double.

std::vector<double> naive_conv(const ConvGeometry& g, const std::vector<float>& x,
                               const std::vector<float>& w, const std::vector<float>& b) {
  const long H = long(g.height), W = long(g.width), K = long(g.kernel), pad = K / 2;
  std::vector<double> y(g.out_channels * g.height * g.width);
  for (std::size_t o = 0; o < g.out_channels; ++o)
    for (long r = 0; r < H; ++r)
      for (long c = 0; c < W; ++c) {
        double acc = b[o];
        for (std::size_t i = 0; i < g.in_channels; ++i)
          for (long kr = 0; kr < K; ++kr)
            for (long kc = 0; kc < K; ++kc) {
              const long rr = r + kr - pad, cc = c + kc - pad;
              if (rr < 0 || rr >= H || cc < 0 || cc >= W) continue;
              acc += double(w[((o * g.in_channels + i) * K + kr) * K + kc]) * x[(i * H + rr) * W + cc];
            }
        y[(o * H + r) * W + c] = acc;
      }
  return y;
}

std::vector<double> naive_upconv(const ConvGeometry& g, const std::vector<float>& x,
                                 const std::vector<float>& w, const std::vector<float>& b) {
  const std::size_t H = g.height, W = g.width;
  std::vector<double> y(g.out_channels * 4 * H * W);
  for (std::size_t o = 0; o < g.out_channels; ++o)
    for (std::size_t r = 0; r < 2 * H; ++r)
      for (std::size_t c = 0; c < 2 * W; ++c) {
        double acc = b[o];
        for (std::size_t i = 0; i < g.in_channels; ++i)
          acc += double(w[((i * g.out_channels + o) * 2 + r % 2) * 2 + c % 2]) *
                 x[(i * H + r / 2) * W + c / 2];
        y[(o * 2 * H + r) * 2 * W + c] = acc;
      }
  return y;
}

struct KernelCase {
  ConvGeometry g;
  bool transposed;
};

class KernelOracle : public ::testing::TestWithParam<KernelCase> {};

TEST_P(KernelOracle, ForwardMatchesDirectLoop) {
  const auto [g, transposed] = GetParam();
  std::mt19937 gen(3);
  const auto x = random_vec(g.in_channels * g.height * g.width, gen);
  const auto w = random_vec(g.in_channels * g.out_channels * (transposed ? 4 : g.kernel * g.kernel), gen);
  const auto b = random_vec(g.out_channels, gen);
  const auto ref = transposed ? naive_upconv(g, x, w, b) : naive_conv(g, x, w, b);
  std::vector<float> y(ref.size());
  if (transposed)
    kernels::upconv2x2_forward(g, x.data(), w.data(), b.data(), y.data());
  else
    kernels::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
  for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], ref[i], 1e-4) << i;
}

TEST_P(KernelOracle, BackwardIsAdjointOfForward) {
  // With L = sum(r * y), the forward is affine, so dL/dx, dL/dw and dL/db are
  // exact central differences of the double reference with any step.
  const auto [g, transposed] = GetParam();
  std::mt19937 gen(4);
  auto x = random_vec(g.in_channels * g.height * g.width, gen);
  auto w = random_vec(g.in_channels * g.out_channels * (transposed ? 4 : g.kernel * g.kernel), gen);
  auto b = random_vec(g.out_channels, gen);
  const std::size_t ny = g.out_channels * g.height * g.width * (transposed ? 4 : 1);
  const auto r = random_vec(ny, gen);

  auto loss = [&] {
    const auto y = transposed ? naive_upconv(g, x, w, b) : naive_conv(g, x, w, b);
    double l = 0;
    for (std::size_t i = 0; i < ny; ++i) l += r[i] * y[i];
    return l;
  };
  auto numeric = [&](std::vector<float>& v, std::size_t i) {
    const float keep = v[i];
    v[i] = keep + 0.5f;
    const double up = loss();
    v[i] = keep - 0.5f;
    const double down = loss();
    v[i] = keep;
    return up - down;
  };

  std::vector<float> dx(x.size()), dw(w.size(), 0.0f), db(b.size(), 0.0f);
  if (transposed)
    kernels::upconv2x2_backward(g, x.data(), w.data(), r.data(), dx.data(), dw.data(), db.data());
  else
    kernels::conv2d_backward(g, x.data(), w.data(), r.data(), dx.data(), dw.data(), db.data());

  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(dx[i], numeric(x, i), 1e-3) << "dx " << i;
  for (std::size_t i = 0; i < w.size(); ++i) ASSERT_NEAR(dw[i], numeric(w, i), 1e-3) << "dw " << i;
  for (std::size_t i = 0; i < b.size(); ++i) ASSERT_NEAR(db[i], numeric(b, i), 1e-3) << "db " << i;
}

INSTANTIATE_TEST_SUITE_P(
    Geometries, KernelOracle,
    ::testing::Values(KernelCase{{1, 1, 3, 3, 3}, false}, KernelCase{{2, 3, 5, 4, 3}, false},
                      KernelCase{{3, 2, 7, 6, 1}, false}, KernelCase{{4, 5, 8, 8, 3}, false},
                      KernelCase{{1, 1, 1, 1, 3}, false}, KernelCase{{2, 3, 3, 4, 0}, true},
                      KernelCase{{3, 1, 1, 1, 0}, true}));

TEST(ConvBackward, AccumulatesWeightGradients) {
  const ConvGeometry g{1, 1, 4, 4, 3};
  std::mt19937 gen(9);
  const auto x = random_vec(16, gen), w = random_vec(9, gen), dy = random_vec(16, gen);
  std::vector<float> dw1(9, 0.0f), db1(1, 0.0f), dw2(9, 0.0f), db2(1, 0.0f);
  kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), nullptr, dw1.data(), db1.data());
  kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), nullptr, dw2.data(), db2.data());
  kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), nullptr, dw2.data(), db2.data());
  for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(dw2[i], 2 * dw1[i], 1e-5);
  EXPECT_NEAR(db2[0], 2 * db1[0], 1e-5);
}

// ---- tape ops against central differences of the float forward ----

using Builder = std::function<nn::Var(nn::Tape&, const nn::Var&)>;

// L = sum(r * op(x)) evaluated in double.
double probe(const Builder& op, const Tensor& x, const std::vector<float>& r) {
  nn::Tape tape(false);
  const nn::Var y = op(tape, tape.constant(x));
  double l = 0;
  for (std::size_t i = 0; i < r.size(); ++i) l += double(r[i]) * y.value().values()[i];
  return l;
}

void check_op(const Builder& op, Shape in, std::uint32_t seed, double h = 1e-2, double tol = 2e-3) {
  std::mt19937 gen(seed);
  Tensor x(in, random_vec(in.numel(), gen));

  nn::Tape tape;
  nn::Var leaf = tape.leaf(x);
  nn::Var y = op(tape, leaf);
  const auto r = random_vec(y.value().numel(), gen);
  nn::Var l = tape.record(Tensor(Shape{1, 1, 1, 1}), true, [y, r](nn::Node& self) {
    Tensor& g = y.node().grad_buffer();
    for (std::size_t i = 0; i < r.size(); ++i) g.values()[i] += self.grad.values()[0] * r[i];
  });
  tape.backward(l);
  ASSERT_EQ(leaf.grad().numel(), x.numel());

  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor up = x, down = x;
    up.values()[i] += float(h);
    down.values()[i] -= float(h);
    const double numeric = (probe(op, up, r) - probe(op, down, r)) / (2 * h);
    ASSERT_NEAR(leaf.grad().values()[i], numeric, tol * std::max(1.0, std::abs(numeric))) << i;
  }
}

TEST(TapeOps, Conv2dInputGradient) {
  auto w = std::make_shared<nn::Parameter>("c.weight", Shape{3, 2, 3, 3});
  auto b = std::make_shared<nn::Parameter>("c.bias", Shape{1, 3, 1, 1});
  std::mt19937 gen(1);
  w->value = Tensor(w->value.shape(), random_vec(54, gen));
  b->value = Tensor(b->value.shape(), random_vec(3, gen));
  check_op([&](nn::Tape& t, const nn::Var& x) { return nn::conv2d(t, x, *w, *b); }, {2, 2, 5, 5}, 2);
}

TEST(TapeOps, Conv2dParameterGradient) {
  nn::Parameter w("c.weight", Shape{2, 1, 3, 3}), b("c.bias", Shape{1, 2, 1, 1});
  std::mt19937 gen(6);
  w.value = Tensor(w.value.shape(), random_vec(18, gen));
  const Tensor x(Shape{2, 1, 4, 4}, random_vec(32, gen));
  // Treat the weights as the variable: rebuild the op with w replaced.
  const auto r = random_vec(2 * 2 * 16, gen);
  auto loss_at = [&](const Tensor& wv) {
    nn::Parameter w2("c.weight", w.value.shape());
    w2.value = wv;
    nn::Tape tape(false);
    const nn::Var y = nn::conv2d(tape, tape.constant(x), w2, b);
    double l = 0;
    for (std::size_t i = 0; i < r.size(); ++i) l += double(r[i]) * y.value().values()[i];
    return l;
  };
  nn::Tape tape;
  nn::Var y = nn::conv2d(tape, tape.constant(x), w, b);
  nn::Var l = tape.record(Tensor(Shape{1, 1, 1, 1}), true, [y, r](nn::Node&) {
    Tensor& g = y.node().grad_buffer();
    for (std::size_t i = 0; i < r.size(); ++i) g.values()[i] += r[i];
  });
  tape.backward(l);
  for (std::size_t i = 0; i < w.value.numel(); ++i) {
    Tensor up = w.value, down = w.value;
    up.values()[i] += 0.01f;
    down.values()[i] -= 0.01f;
    EXPECT_NEAR(w.grad.values()[i], (loss_at(up) - loss_at(down)) / 0.02, 2e-3);
  }
  double bias_sum = 0;
  // Channel 0 of both samples.
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 16; ++i) bias_sum += r[n * 32 + i];
  EXPECT_NEAR(b.grad.values()[0], bias_sum, 1e-4);
}

TEST(TapeOps, Upconv) {
  nn::Parameter w("u.weight", Shape{3, 2, 2, 2}), b("u.bias", Shape{1, 2, 1, 1});
  std::mt19937 gen(8);
  w.value = Tensor(w.value.shape(), random_vec(24, gen));
  check_op([&](nn::Tape& t, const nn::Var& x) { return nn::upconv2x2(t, x, w, b); }, {1, 3, 3, 2}, 5);
}

TEST(TapeOps, ReluSigmoidAdd) {
  check_op([](nn::Tape& t, const nn::Var& x) { return nn::relu(t, x); }, {2, 2, 3, 3}, 11, 1e-3);
  check_op([](nn::Tape& t, const nn::Var& x) { return nn::sigmoid(t, x); }, {1, 3, 4, 4}, 12);
  check_op([](nn::Tape& t, const nn::Var& x) { return nn::add(t, x, nn::relu(t, x)); }, {1, 2, 3, 3}, 13,
           1e-3);
}

TEST(TapeOps, ConcatPoolUpsample) {
  check_op([](nn::Tape& t, const nn::Var& x) { return nn::concat(t, {x, nn::sigmoid(t, x), x}); },
           {2, 2, 2, 3}, 21);
  check_op([](nn::Tape& t, const nn::Var& x) { return nn::maxpool2x2(t, x); }, {2, 3, 4, 6}, 22, 1e-3);
  check_op([](nn::Tape& t, const nn::Var& x) { return nn::upsample(t, x, 2); }, {1, 2, 3, 3}, 23);
  check_op([](nn::Tape& t, const nn::Var& x) { return nn::upsample(t, x, 4); }, {2, 1, 2, 2}, 24);
}

TEST(TapeOps, ForwardValues) {
  nn::Tape tape(false);
  Tensor x(Shape{1, 1, 2, 4}, {1, 5, -2, 0, 3, 2, 7, 1});
  const nn::Var p = nn::maxpool2x2(tape, tape.constant(x));
  EXPECT_EQ(p.value(), Tensor(Shape{1, 1, 1, 2}, {5, 7}));
  const nn::Var u = nn::upsample(tape, p, 2);
  EXPECT_EQ(u.value(), Tensor(Shape{1, 1, 2, 4}, {5, 5, 7, 7, 5, 5, 7, 7}));
  const nn::Var s = nn::sigmoid(tape, tape.constant(Tensor(Shape{1, 1, 1, 3}, {-100, 0, 100})));
  EXPECT_GT(s.value().values()[0], 0.0f);
  EXPECT_EQ(s.value().values()[1], 0.5f);
  EXPECT_LT(s.value().values()[2], 1.0f);
  const nn::Var c = nn::concat(tape, {tape.constant(Tensor(Shape{1, 1, 1, 1}, {1})),
                                      tape.constant(Tensor(Shape{1, 2, 1, 1}, {2, 3}))});
  EXPECT_EQ(c.value(), Tensor(Shape{1, 3, 1, 1}, {1, 2, 3}));
}

TEST(TapeOps, ShapeErrors) {
  nn::Tape tape;
  nn::Parameter w("c.weight", Shape{1, 2, 3, 3}), b("c.bias", Shape{1, 1, 1, 1});
  EXPECT_THROW(nn::conv2d(tape, tape.constant(Tensor(Shape{1, 3, 4, 4})), w, b), Error);
  EXPECT_THROW(nn::add(tape, tape.constant(Tensor(Shape{1, 1, 2, 2})), tape.constant(Tensor(Shape{1, 1, 2, 3}))),
               Error);
  EXPECT_THROW(tape.backward(tape.leaf(Tensor(Shape{1, 1, 2, 2}))), Error);
}

TEST(TapeOps, BatchLossIsMeanOfSamples) {
  std::mt19937 gen(31);
  Tensor prob(Shape{3, 1, 4, 4}, random_vec(48, gen, 0.05f, 0.95f));
  Tensor target(Shape{3, 1, 4, 4});
  for (auto& v : target.values()) v = float(gen() % 2);
  nn::Tape tape(false);
  LossValue parts;
  const nn::Var l = nn::combined_loss(tape, tape.constant(prob), target, 1.0, &parts);
  double mean = 0;
  for (std::size_t n = 0; n < 3; ++n) mean += combined_loss(prob.sample(n), target.sample(n), 1.0).total / 3;
  EXPECT_NEAR(l.value().values()[0], mean, 1e-5);
  EXPECT_NEAR(parts.total, parts.bce + parts.dice_loss, 1e-7);
}

}  // namespace
}  // namespace brainseg
