#pragma once

#include <cstddef>

// Single-sample float kernels behind the autodiff ops. All buffers are dense
// CHW. Weights for conv2d are (out, in, k, k); for the transposed 2x2
// convolution they are (in, out, 2, 2).

namespace brainseg::kernels {

struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel = 3;  // odd; "same" padding of kernel / 2
};

void conv2d_forward(const ConvGeometry& g, const float* x, const float* weight, const float* bias,
                    float* y);

/// Accumulates into dweight and dbias; writes dx when it is non-null.
void conv2d_backward(const ConvGeometry& g, const float* x, const float* weight, const float* dy,
                     float* dx, float* dweight, float* dbias);

/// Stride-2 2x2 transposed convolution: (in, H, W) -> (out, 2H, 2W).
void upconv2x2_forward(const ConvGeometry& g, const float* x, const float* weight,
                       const float* bias, float* y);
void upconv2x2_backward(const ConvGeometry& g, const float* x, const float* weight,
                        const float* dy, float* dx, float* dweight, float* dbias);

}  // namespace brainseg::kernels
