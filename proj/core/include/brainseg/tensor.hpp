#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace brainseg {

/// NCHW extent.
struct Shape {
  std::size_t n = 0, c = 0, h = 0, w = 0;

  std::size_t numel() const noexcept { return n * c * h * w; }
  std::size_t plane() const noexcept { return h * w; }
  std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense float32 NCHW tensor with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return data_.size(); }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  /// Contiguous view of sample n.
  std::span<float> sample(std::size_t n) {
    const std::size_t len = shape_.c * shape_.plane();
    return {data_.data() + n * len, len};
  }
  std::span<const float> sample(std::size_t n) const {
    const std::size_t len = shape_.c * shape_.plane();
    return {data_.data() + n * len, len};
  }

  void fill(float v);
  /// this += other (same shape).
  void add(const Tensor& other);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

}  // namespace brainseg
