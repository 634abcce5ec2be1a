#include "brainseg/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "brainseg/error.hpp"

namespace brainseg {

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::MinMax: return "minmax";
  }
  return "unknown";
}

Normalization parse_normalization(const std::string& name) {
  if (name == "minmax") return Normalization::MinMax;
  throw Error(ErrorCode::InvalidConfig, "unknown normalization '" + name + "'");
}

void PreprocessConfig::validate() const {
  if (target_size != 64 && target_size != 128 && target_size != 256 && target_size != 512) {
    throw Error(ErrorCode::InvalidConfig,
                "target_size " + std::to_string(target_size) + " not in {64,128,256,512}");
  }
}

Image normalize(const Image& image) {
  if (image.empty()) throw Error(ErrorCode::EmptyInput, "cannot normalize an empty image");
  const auto [lo, hi] = std::minmax_element(image.values().begin(), image.values().end());
  const double min = *lo, range = *hi - *lo;
  Image out(image.rows(), image.cols(), 0.0);
  if (range == 0.0) return out;
  auto src = image.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - min) / range;
  return out;
}

namespace {

void check_size(std::size_t size) {
  if (size < 1) throw Error(ErrorCode::NonPositiveSize, "resize target must be >= 1");
}

/// Source coordinate of output sample i under align-corners.
double source_coord(std::size_t i, std::size_t in, std::size_t out) {
  if (out == 1) return 0.0;
  return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
}

}  // namespace

Image resize_image(const Image& image, std::size_t size) {
  check_size(size);
  if (image.empty()) throw Error(ErrorCode::EmptyInput, "cannot resize an empty image");
  if (image.rows() == size && image.cols() == size) return image;

  Image out(size, size);
  const std::size_t rows = image.rows(), cols = image.cols();
  for (std::size_t r = 0; r < size; ++r) {
    const double y = source_coord(r, rows, size);
    const auto y0 = std::min(static_cast<std::size_t>(y), rows - 1);
    const std::size_t y1 = std::min(y0 + 1, rows - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < size; ++c) {
      const double x = source_coord(c, cols, size);
      const auto x0 = std::min(static_cast<std::size_t>(x), cols - 1);
      const std::size_t x1 = std::min(x0 + 1, cols - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = (1.0 - fx) * image(y0, x0) + fx * image(y0, x1);
      const double bottom = (1.0 - fx) * image(y1, x0) + fx * image(y1, x1);
      out(r, c) = (1.0 - fy) * top + fy * bottom;
    }
  }
  return out;
}

Mask resize_mask(const Mask& mask, std::size_t size) {
  check_size(size);
  if (mask.empty()) throw Error(ErrorCode::EmptyInput, "cannot resize an empty mask");
  if (mask.rows() == size && mask.cols() == size) return mask;

  Mask out(size, size);
  const std::size_t rows = mask.rows(), cols = mask.cols();
  // Pixel-center mapping: source = floor((i + 0.5) * in / out).
  for (std::size_t r = 0; r < size; ++r) {
    const std::size_t sr = std::min((2 * r + 1) * rows / (2 * size), rows - 1);
    for (std::size_t c = 0; c < size; ++c) {
      const std::size_t sc = std::min((2 * c + 1) * cols / (2 * size), cols - 1);
      out(r, c) = mask(sr, sc);
    }
  }
  return out;
}

Example make_example(const SliceRecord& record, const PreprocessConfig& cfg) {
  cfg.validate();
  const std::size_t s = cfg.target_size;
  const Image input = normalize(resize_image(record.image, s));
  const Mask target = resize_mask(record.mask, s);

  Example ex;
  ex.index = record.index;
  ex.input = Tensor(Shape{1, 1, s, s});
  ex.target = Tensor(Shape{1, 1, s, s});
  auto in = ex.input.values();
  auto tg = ex.target.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    in[i] = static_cast<float>(input.values()[i]);
    tg[i] = target.values()[i] ? 1.0f : 0.0f;
  }
  return ex;
}

std::pair<Tensor, Tensor> make_batch(std::span<const Example> examples,
                                     std::span<const std::size_t> selection) {
  if (selection.empty()) throw Error(ErrorCode::EmptyInput, "empty batch selection");
  const Shape one = examples[selection[0]].input.shape();
  const Shape batch{selection.size(), one.c, one.h, one.w};
  Tensor inputs(batch), targets(batch);
  for (std::size_t b = 0; b < selection.size(); ++b) {
    const Example& ex = examples[selection[b]];
    if (ex.input.shape() != one) {
      throw Error(ErrorCode::ShapeMismatch, "examples in one batch must share a shape");
    }
    std::copy(ex.input.values().begin(), ex.input.values().end(), inputs.sample(b).begin());
    std::copy(ex.target.values().begin(), ex.target.values().end(), targets.sample(b).begin());
  }
  return {std::move(inputs), std::move(targets)};
}

}  // namespace brainseg
