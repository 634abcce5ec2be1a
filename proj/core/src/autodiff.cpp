#include "brainseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "brainseg/conv.hpp"
#include "brainseg/error.hpp"

namespace brainseg::nn {

Tensor& Node::grad_buffer() {
  if (grad.numel() != value.numel()) grad = Tensor(value.shape());
  return grad;
}

Var Tape::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Tape::leaf(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = recording_;
  if (recording_) nodes_.push_back(node);
  return Var(std::move(node));
}

Var Tape::record(Tensor value, bool requires_grad, std::function<void(Node& self)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = recording_ && requires_grad;
  if (node->requires_grad) {
    Node* self = node.get();
    node->backward = [self, fn = std::move(backward)] { fn(*self); };
    nodes_.push_back(node);
  }
  return Var(std::move(node));
}

void Tape::backward(const Var& output) {
  if (!recording_) throw Error(ErrorCode::InvalidConfig, "backward on a non-recording tape");
  if (output.value().numel() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "backward needs a scalar output");
  }
  output.node().grad_buffer().fill(1.0f);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.backward && n.grad.numel() == n.value.numel()) n.backward();
  }
}

void Tape::note(std::string name, const Var& output, std::size_t parameters) {
  if (trace_) trace_->push_back({std::move(name), output.shape(), parameters});
}

namespace {

std::string layer_name(const Parameter& weight) {
  const auto dot = weight.name.rfind('.');
  return dot == std::string::npos ? weight.name : weight.name.substr(0, dot);
}

void require_channels(const Shape& s, std::size_t channels, const std::string& who) {
  if (s.c != channels) {
    throw Error(ErrorCode::ShapeMismatch, who + ": expected " + std::to_string(channels) +
                                              " input channels, got " + s.str());
  }
}

}  // namespace

Var conv2d(Tape& tape, const Var& x, Parameter& weight, Parameter& bias) {
  const Shape in = x.shape();
  const Shape ws = weight.value.shape();
  require_channels(in, ws.c, weight.name);
  kernels::ConvGeometry g{ws.c, ws.n, in.h, in.w, ws.h};
  Tensor out(Shape{in.n, ws.n, in.h, in.w});
  for (std::size_t n = 0; n < in.n; ++n) {
    kernels::conv2d_forward(g, x.value().sample(n).data(), weight.value.data(), bias.value.data(),
                            out.sample(n).data());
  }
  Var y = tape.record(std::move(out), true, [x, &weight, &bias, g](Node& self) {
    const bool need_dx = x.requires_grad();
    float* dx = need_dx ? x.node().grad_buffer().data() : nullptr;
    const std::size_t in_len = g.in_channels * g.height * g.width;
    const std::size_t out_len = g.out_channels * g.height * g.width;
    for (std::size_t n = 0; n < self.value.shape().n; ++n) {
      kernels::conv2d_backward(g, x.value().data() + n * in_len, weight.value.data(),
                               self.grad.data() + n * out_len, need_dx ? dx + n * in_len : nullptr,
                               weight.grad.data(), bias.grad.data());
    }
  });
  tape.note(layer_name(weight), y, weight.value.numel() + bias.value.numel());
  return y;
}

Var upconv2x2(Tape& tape, const Var& x, Parameter& weight, Parameter& bias) {
  const Shape in = x.shape();
  const Shape ws = weight.value.shape();
  require_channels(in, ws.n, weight.name);
  kernels::ConvGeometry g{ws.n, ws.c, in.h, in.w, 2};
  Tensor out(Shape{in.n, ws.c, 2 * in.h, 2 * in.w});
  for (std::size_t n = 0; n < in.n; ++n) {
    kernels::upconv2x2_forward(g, x.value().sample(n).data(), weight.value.data(),
                               bias.value.data(), out.sample(n).data());
  }
  Var y = tape.record(std::move(out), true, [x, &weight, &bias, g](Node& self) {
    const bool need_dx = x.requires_grad();
    float* dx = need_dx ? x.node().grad_buffer().data() : nullptr;
    const std::size_t in_len = g.in_channels * g.height * g.width;
    const std::size_t out_len = g.out_channels * 4 * g.height * g.width;
    for (std::size_t n = 0; n < self.value.shape().n; ++n) {
      kernels::upconv2x2_backward(g, x.value().data() + n * in_len, weight.value.data(),
                                  self.grad.data() + n * out_len,
                                  need_dx ? dx + n * in_len : nullptr, weight.grad.data(),
                                  bias.grad.data());
    }
  });
  tape.note(layer_name(weight), y, weight.value.numel() + bias.value.numel());
  return y;
}

Var relu(Tape& tape, const Var& x) {
  Tensor out(x.shape());
  auto src = x.value().values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
  return tape.record(std::move(out), x.requires_grad(), [x](Node& self) {
    auto dx = x.node().grad_buffer().values();
    auto y = self.value.values();
    auto dy = self.grad.values();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (y[i] > 0.0f) dx[i] += dy[i];
    }
  });
}

Var sigmoid(Tape& tape, const Var& x) {
  constexpr float lo = 1e-7f;
  const float hi = std::nextafter(1.0f, 0.0f);
  Tensor out(x.shape());
  auto src = x.value().values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const float s = 1.0f / (1.0f + std::exp(-src[i]));
    dst[i] = std::clamp(s, lo, hi);
  }
  return tape.record(std::move(out), x.requires_grad(), [x](Node& self) {
    auto dx = x.node().grad_buffer().values();
    auto y = self.value.values();
    auto dy = self.grad.values();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * y[i] * (1.0f - y[i]);
  });
}

Var add(Tape& tape, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "add: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor out = a.value();
  out.add(b.value());
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(), [a, b](Node& self) {
    if (a.requires_grad()) a.node().grad_buffer().add(self.grad);
    if (b.requires_grad()) b.node().grad_buffer().add(self.grad);
  });
}

Var concat(Tape& tape, const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorCode::EmptyInput, "concat of nothing");
  const Shape first = parts.front().shape();
  std::size_t channels = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw Error(ErrorCode::ShapeMismatch, "concat: " + first.str() + " vs " + s.str());
    }
    channels += s.c;
    any_grad = any_grad || p.requires_grad();
  }
  const std::size_t plane = first.plane();
  Tensor out(Shape{first.n, channels, first.h, first.w});
  for (std::size_t n = 0; n < first.n; ++n) {
    float* dst = out.sample(n).data();
    for (const auto& p : parts) {
      const auto src = p.value().sample(n);
      std::copy(src.begin(), src.end(), dst);
      dst += p.shape().c * plane;
    }
  }
  Var y = tape.record(std::move(out), any_grad, [parts, plane](Node& self) {
    for (std::size_t n = 0; n < self.value.shape().n; ++n) {
      const float* src = self.grad.sample(n).data();
      for (const auto& p : parts) {
        const std::size_t len = p.shape().c * plane;
        if (p.requires_grad()) {
          auto dst = p.node().grad_buffer().sample(n);
          for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
        src += len;
      }
    }
  });
  tape.note("concat", y);
  return y;
}

Var maxpool2x2(Tape& tape, const Var& x) {
  const Shape in = x.shape();
  if (in.h % 2 || in.w % 2) {
    throw Error(ErrorCode::IncompatibleSize, "maxpool2x2 on odd extent " + in.str());
  }
  const Shape os{in.n, in.c, in.h / 2, in.w / 2};
  Tensor out(os);
  std::vector<std::uint32_t> argmax(os.numel());
  const float* src = x.value().data();
  float* dst = out.data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
    const float* p = src + plane * in.plane();
    for (std::size_t i = 0; i < os.h; ++i) {
      for (std::size_t j = 0; j < os.w; ++j, ++o) {
        std::size_t best = (2 * i) * in.w + 2 * j;
        for (std::size_t cand : {best + 1, best + in.w, best + in.w + 1}) {
          if (p[cand] > p[best]) best = cand;
        }
        dst[o] = p[best];
        argmax[o] = static_cast<std::uint32_t>(plane * in.plane() + best);
      }
    }
  }
  Var y = tape.record(std::move(out), x.requires_grad(), [x, argmax = std::move(argmax)](Node& self) {
    float* dx = x.node().grad_buffer().data();
    const float* dy = self.grad.data();
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dy[i];
  });
  tape.note("maxpool", y);
  return y;
}

Var upsample(Tape& tape, const Var& x, std::size_t factor) {
  if (factor == 0) throw Error(ErrorCode::NonPositiveSize, "upsample factor 0");
  const Shape in = x.shape();
  const Shape os{in.n, in.c, in.h * factor, in.w * factor};
  Tensor out(os);
  for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
    const float* p = x.value().data() + plane * in.plane();
    float* q = out.data() + plane * os.plane();
    for (std::size_t i = 0; i < os.h; ++i) {
      const float* row = p + (i / factor) * in.w;
      for (std::size_t j = 0; j < os.w; ++j) q[i * os.w + j] = row[j / factor];
    }
  }
  Var y = tape.record(std::move(out), x.requires_grad(), [x, factor](Node& self) {
    const Shape in = x.shape();
    const Shape os = self.value.shape();
    float* dx = x.node().grad_buffer().data();
    for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
      const float* q = self.grad.data() + plane * os.plane();
      float* p = dx + plane * in.plane();
      for (std::size_t i = 0; i < os.h; ++i) {
        float* row = p + (i / factor) * in.w;
        for (std::size_t j = 0; j < os.w; ++j) row[j / factor] += q[i * os.w + j];
      }
    }
  });
  tape.note("upsample x" + std::to_string(factor), y);
  return y;
}

Var combined_loss(Tape& tape, const Var& prob, const Tensor& target, double smooth,
                  LossValue* components) {
  if (prob.shape() != target.shape()) {
    throw Error(ErrorCode::ShapeMismatch,
                "loss: prediction " + prob.shape().str() + " vs target " + target.shape().str());
  }
  const std::size_t batch = prob.shape().n;
  LossValue mean;
  for (std::size_t n = 0; n < batch; ++n) {
    const LossValue v = brainseg::combined_loss(prob.value().sample(n), target.sample(n), smooth);
    mean.bce += v.bce;
    mean.dice_loss += v.dice_loss;
  }
  mean.bce /= static_cast<double>(batch);
  mean.dice_loss /= static_cast<double>(batch);
  mean.total = mean.bce + mean.dice_loss;
  if (components) *components = mean;

  Tensor out(Shape{1, 1, 1, 1}, static_cast<float>(mean.total));
  return tape.record(std::move(out), prob.requires_grad(),
                     [prob, target, smooth, batch](Node& self) {
                       const float scale = self.grad.data()[0] / static_cast<float>(batch);
                       Tensor& dp = prob.node().grad_buffer();
                       std::vector<float> g(prob.value().sample(0).size());
                       for (std::size_t n = 0; n < batch; ++n) {
                         brainseg::combined_loss_gradient(prob.value().sample(n), target.sample(n),
                                                          smooth, g);
                         auto dst = dp.sample(n);
                         for (std::size_t i = 0; i < g.size(); ++i) dst[i] += scale * g[i];
                       }
                     });
}

}  // namespace brainseg::nn
