#pragma once

#include <span>
#include <string>
#include <utility>

#include "brainseg/data_ingest.hpp"
#include "brainseg/grid.hpp"
#include "brainseg/tensor.hpp"

namespace brainseg {

enum class Normalization { MinMax };

std::string to_string(Normalization n);
Normalization parse_normalization(const std::string& name);

struct PreprocessConfig {
  std::size_t target_size = 256;
  Normalization normalize = Normalization::MinMax;

  /// target_size must be one of 64, 128, 256, 512.
  void validate() const;
};

/// Per-slice min-max scaling to [0, 1]; a constant grid maps to zeros.
Image normalize(const Image& image);

/// Bilinear resampling to size x size, align-corners convention: corner
/// pixel centers of input and output coincide.
Image resize_image(const Image& image, std::size_t size);

/// Nearest-neighbor resampling to size x size; the value set is preserved.
Mask resize_mask(const Mask& mask, std::size_t size);

/// A model-ready pair. Both tensors have shape (1, 1, size, size).
struct Example {
  int index = 0;
  Tensor input;
  Tensor target;
};

Example make_example(const SliceRecord& record, const PreprocessConfig& cfg);

/// Stacks the selected examples into (N,1,H,W) input and target batches.
std::pair<Tensor, Tensor> make_batch(std::span<const Example> examples,
                                     std::span<const std::size_t> selection);

}  // namespace brainseg
