#include "brainseg/architectures.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "brainseg/error.hpp"
#include "brainseg/rng.hpp"

namespace brainseg {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::UNet: return "unet";
    case Variant::UNetSkip: return "unet_skip";
    case Variant::MNet: return "mnet";
  }
  return "unknown";
}

std::string display_name(Variant v) {
  switch (v) {
    case Variant::UNet: return "U-Net";
    case Variant::UNetSkip: return "U-Net with additional skip connection";
    case Variant::MNet: return "M-Net";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  if (name == "unet") return Variant::UNet;
  if (name == "unet_skip") return Variant::UNetSkip;
  if (name == "mnet") return Variant::MNet;
  throw Error(ErrorCode::UnknownVariant, "'" + name + "' (expected unet, unet_skip or mnet)");
}

void ModelConfig::validate() const {
  if (depth < 1) throw Error(ErrorCode::InvalidConfig, "depth must be >= 1");
  if (depth > 10) throw Error(ErrorCode::InvalidConfig, "depth must be <= 10");
  if (base_channels < 1) throw Error(ErrorCode::InvalidConfig, "base_channels must be >= 1");
  if (out_channels < 1) throw Error(ErrorCode::InvalidConfig, "out_channels must be >= 1");
  const std::size_t stride = std::size_t{1} << depth;
  if (input_size == 0 || input_size % stride != 0) {
    throw Error(ErrorCode::IncompatibleSize, "input_size " + std::to_string(input_size) +
                                                 " is not divisible by 2^" +
                                                 std::to_string(depth));
  }
}

namespace detail {

/// Creates parameters with fan-in scaled uniform initialization.
class ParameterFactory {
 public:
  ParameterFactory(std::vector<std::unique_ptr<nn::Parameter>>& store, std::uint64_t seed)
      : store_(store), rng_(seed) {}

  nn::Parameter* make(const std::string& name, Shape shape, std::size_t fan_in) {
    auto p = std::make_unique<nn::Parameter>(name, shape);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (float& v : p->value.values()) v = static_cast<float>(rng_.uniform(-limit, limit));
    store_.push_back(std::move(p));
    return store_.back().get();
  }

  nn::Parameter* zeros(const std::string& name, Shape shape) {
    store_.push_back(std::make_unique<nn::Parameter>(name, shape));
    return store_.back().get();
  }

 private:
  std::vector<std::unique_ptr<nn::Parameter>>& store_;
  Rng rng_;
};

struct Conv {
  nn::Parameter* weight = nullptr;
  nn::Parameter* bias = nullptr;

  Conv() = default;
  Conv(ParameterFactory& f, const std::string& name, std::size_t in, std::size_t out,
       std::size_t k) {
    weight = f.make(name + ".weight", Shape{out, in, k, k}, in * k * k);
    bias = f.zeros(name + ".bias", Shape{1, out, 1, 1});
  }
  nn::Var operator()(nn::Tape& t, const nn::Var& x) const { return nn::conv2d(t, x, *weight, *bias); }
};

struct UpConv {
  nn::Parameter* weight = nullptr;
  nn::Parameter* bias = nullptr;

  UpConv() = default;
  UpConv(ParameterFactory& f, const std::string& name, std::size_t in, std::size_t out) {
    weight = f.make(name + ".weight", Shape{in, out, 2, 2}, in);
    bias = f.zeros(name + ".bias", Shape{1, out, 1, 1});
  }
  nn::Var operator()(nn::Tape& t, const nn::Var& x) const {
    return nn::upconv2x2(t, x, *weight, *bias);
  }
};

/// Two 3x3 conv + ReLU; with `residual` the first activation is added to
/// the second.
struct ConvPair {
  Conv first, second;
  bool residual = false;

  ConvPair() = default;
  ConvPair(ParameterFactory& f, const std::string& name, std::size_t in, std::size_t out,
           bool residual)
      : first(f, name + ".conv1", in, out, 3), second(f, name + ".conv2", out, out, 3),
        residual(residual) {}

  nn::Var operator()(nn::Tape& t, const nn::Var& x) const {
    const nn::Var a = nn::relu(t, first(t, x));
    nn::Var b = nn::relu(t, second(t, a));
    if (residual) b = nn::add(t, b, a);
    return b;
  }
};

class Network {
 public:
  virtual ~Network() = default;
  virtual nn::Var forward(nn::Tape& tape, const nn::Var& x) const = 0;
};

namespace {

std::size_t width(const ModelConfig& cfg, std::size_t level) {
  return cfg.base_channels << level;
}

class UNet final : public Network {
 public:
  UNet(const ModelConfig& cfg, ParameterFactory& f) : depth_(cfg.depth) {
    const bool skip = cfg.variant == Variant::UNetSkip;
    std::size_t in = 1;
    for (std::size_t l = 0; l < depth_; ++l) {
      encoder_.emplace_back(f, "enc" + std::to_string(l), in, width(cfg, l), skip);
      in = width(cfg, l);
    }
    bottleneck_ = ConvPair(f, "bottleneck", in, width(cfg, depth_), false);
    decoder_.resize(depth_);
    up_.resize(depth_);
    for (std::size_t l = depth_; l-- > 0;) {
      const std::string name = "dec" + std::to_string(l);
      up_[l] = UpConv(f, name + ".up", width(cfg, l + 1), width(cfg, l));
      decoder_[l] = ConvPair(f, name, 2 * width(cfg, l), width(cfg, l), false);
    }
    head_ = Conv(f, "head", width(cfg, 0), cfg.out_channels, 1);
  }

  nn::Var forward(nn::Tape& t, const nn::Var& x) const override {
    std::vector<nn::Var> skips;
    nn::Var h = x;
    for (const auto& level : encoder_) {
      skips.push_back(level(t, h));
      h = nn::maxpool2x2(t, skips.back());
    }
    h = bottleneck_(t, h);
    for (std::size_t l = depth_; l-- > 0;) {
      h = nn::concat(t, {up_[l](t, h), skips[l]});
      h = decoder_[l](t, h);
    }
    return nn::sigmoid(t, head_(t, h));
  }

 private:
  std::size_t depth_;
  std::vector<ConvPair> encoder_;
  ConvPair bottleneck_;
  std::vector<UpConv> up_;
  std::vector<ConvPair> decoder_;
  Conv head_;
};

class MNet final : public Network {
 public:
  MNet(const ModelConfig& cfg, ParameterFactory& f) : depth_(cfg.depth) {
    for (std::size_t k = 0; k < depth_; ++k) {
      // Deeper steps see the pooled previous step plus the left-leg input.
      const std::size_t in = k == 0 ? 1 : width(cfg, k - 1) + 1;
      encoder_.emplace_back(f, "enc" + std::to_string(k), in, width(cfg, k), true);
    }
    bottleneck_ = ConvPair(f, "bottleneck", width(cfg, depth_ - 1) + 1, width(cfg, depth_), true);
    decoder_.resize(depth_);
    side_.resize(depth_);
    for (std::size_t k = depth_; k-- > 0;) {
      decoder_[k] = ConvPair(f, "dec" + std::to_string(k), width(cfg, k + 1) + width(cfg, k),
                             width(cfg, k), true);
    }
    for (std::size_t k = 1; k < depth_; ++k) {
      side_[k] = Conv(f, "side" + std::to_string(k), width(cfg, k), cfg.out_channels, 1);
    }
    head_ = Conv(f, "head", width(cfg, 0) + (depth_ - 1) * cfg.out_channels, cfg.out_channels, 1);
  }

  nn::Var forward(nn::Tape& t, const nn::Var& x) const override {
    std::vector<nn::Var> left{x};
    for (std::size_t k = 1; k <= depth_; ++k) left.push_back(nn::maxpool2x2(t, left.back()));

    std::vector<nn::Var> enc;
    nn::Var h = x;
    for (std::size_t k = 0; k < depth_; ++k) {
      if (k > 0) h = nn::concat(t, {nn::maxpool2x2(t, enc.back()), left[k]});
      enc.push_back(encoder_[k](t, h));
    }
    h = bottleneck_(t, nn::concat(t, {nn::maxpool2x2(t, enc.back()), left[depth_]}));

    std::vector<nn::Var> dec(depth_);
    for (std::size_t k = depth_; k-- > 0;) {
      h = decoder_[k](t, nn::concat(t, {nn::upsample(t, h, 2), enc[k]}));
      dec[k] = h;
    }

    std::vector<nn::Var> fused{dec[0]};
    for (std::size_t k = 1; k < depth_; ++k) {
      fused.push_back(nn::upsample(t, side_[k](t, dec[k]), std::size_t{1} << k));
    }
    const nn::Var merged = fused.size() == 1 ? fused[0] : nn::concat(t, fused);
    return nn::sigmoid(t, head_(t, merged));
  }

 private:
  std::size_t depth_;
  std::vector<ConvPair> encoder_;
  ConvPair bottleneck_;
  std::vector<ConvPair> decoder_;
  std::vector<Conv> side_;
  Conv head_;
};

}  // namespace
}  // namespace detail

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  detail::ParameterFactory factory(params_, cfg_.init_seed);
  switch (cfg_.variant) {
    case Variant::UNet:
    case Variant::UNetSkip:
      net_ = std::make_unique<detail::UNet>(cfg_, factory);
      break;
    case Variant::MNet:
      net_ = std::make_unique<detail::MNet>(cfg_, factory);
      break;
  }
}

Model::~Model() = default;
Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;

nn::Var Model::forward(nn::Tape& tape, const nn::Var& input) const {
  const Shape s = input.shape();
  if (s.c != 1 || s.h != cfg_.input_size || s.w != cfg_.input_size) {
    throw Error(ErrorCode::ShapeMismatch,
                "input " + s.str() + " does not match model size " +
                    std::to_string(cfg_.input_size));
  }
  return net_->forward(tape, input);
}

Tensor Model::predict(const Tensor& batch) const {
  nn::Tape tape(false);
  return forward(tape, tape.constant(batch)).value();
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p->value.numel();
  return total;
}

void Model::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0f);
}

std::vector<nn::LayerInfo> Model::summary() const {
  // Trace at the smallest legal size and rescale; the network is fully
  // convolutional, so every spatial extent scales linearly.
  const std::size_t minimal = std::size_t{1} << cfg_.depth;
  std::vector<nn::LayerInfo> trace;
  nn::Tape tape(false);
  tape.trace_into(&trace);
  net_->forward(tape, tape.constant(Tensor(Shape{1, 1, minimal, minimal})));
  const std::size_t scale = cfg_.input_size / minimal;
  for (auto& row : trace) {
    row.output.h *= scale;
    row.output.w *= scale;
  }
  return trace;
}

Model build_model(const ModelConfig& cfg) { return Model(cfg); }

std::string format_summary(const Model& model) {
  std::ostringstream out;
  const auto& cfg = model.config();
  out << "# model " << to_string(cfg.variant) << " input_size=" << cfg.input_size
      << " base_channels=" << cfg.base_channels << " depth=" << cfg.depth
      << " out_channels=" << cfg.out_channels << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %-22s %12s\n", "layer", "output (N,C,H,W)", "params");
  out << line;
  for (const auto& row : model.summary()) {
    std::snprintf(line, sizeof line, "%-24s %-22s %12zu\n", row.name.c_str(),
                  row.output.str().c_str(), row.parameters);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-24s %-22s %12zu\n", "total", "", model.parameter_count());
  out << line;
  return out.str();
}

}  // namespace brainseg
