#include "brainseg/tensor.hpp"

#include <algorithm>

#include "brainseg/error.hpp"

namespace brainseg {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw Error(ErrorCode::ShapeMismatch, "tensor data does not match shape " + shape_.str());
  }
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw Error(ErrorCode::ShapeMismatch, shape_.str() + " vs " + other.shape_.str());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

}  // namespace brainseg
