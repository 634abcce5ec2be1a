#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "brainseg/autodiff.hpp"
#include "brainseg/tensor.hpp"

namespace brainseg {

enum class Variant { UNet, UNetSkip, MNet };

/// Short identifier: "unet", "unet_skip", "mnet".
std::string to_string(Variant v);
/// Human-readable name used in comparison tables.
std::string display_name(Variant v);
/// Throws Error(UnknownVariant).
Variant parse_variant(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::UNet;
  std::size_t input_size = 256;
  std::size_t base_channels = 64;
  std::size_t depth = 4;
  std::size_t out_channels = 1;
  std::uint64_t init_seed = 1;

  /// Throws IncompatibleSize when input_size is not a multiple of 2^depth,
  /// InvalidConfig for zero channels or depth.
  void validate() const;
};

namespace detail {
class Network;
}

/// A fully convolutional segmentation network mapping (N,1,S,S) images in
/// [0,1] to (N,out,S,S) probabilities in (0,1).
///
/// unet:      `depth` encoder levels of two 3x3 conv + ReLU and a 2x2 max-pool,
///            a two-conv bottleneck, and a decoder of 2x2 transposed convs whose
///            output is concatenated with the matching encoder features.
/// unet_skip: unet plus, on every encoder level, an identity connection adding
///            the first conv's activation to the second's before pooling.
/// mnet:      encoder/decoder with identity connections inside every conv
///            pair, nearest-neighbor upsampling in the decoder, a left leg that
///            max-pools the input and concatenates it into each deeper encoder
///            step, and a right leg that projects each coarser decoder step to
///            out_channels and upsamples it to full size; the head is a 1x1 conv
///            over the concatenation of the last decoder step and the right leg.
///
/// Move-only: parameters are owned through stable pointers captured by the
/// layers.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);
  ~Model();
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;

  const ModelConfig& config() const noexcept { return cfg_; }

  /// Records the forward pass on the tape and returns the probability map.
  nn::Var forward(nn::Tape& tape, const nn::Var& input) const;

  /// Inference without gradient bookkeeping. Throws ShapeMismatch unless the
  /// batch is (N, 1, input_size, input_size).
  Tensor predict(const Tensor& batch) const;

  std::size_t parameter_count() const;
  const std::vector<std::unique_ptr<nn::Parameter>>& parameters() const { return params_; }
  void zero_grad();

  /// Layer table for an input of config().input_size.
  std::vector<nn::LayerInfo> summary() const;

 private:
  ModelConfig cfg_;
  std::vector<std::unique_ptr<nn::Parameter>> params_;
  std::unique_ptr<detail::Network> net_;
};

Model build_model(const ModelConfig& cfg);

/// Plain-text table: name, output shape, parameter count, plus a total row.
std::string format_summary(const Model& model);

}  // namespace brainseg
