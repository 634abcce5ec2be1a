#include "brainseg/conv.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <vector>

namespace brainseg::kernels {
namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer size, in floats.
constexpr std::size_t kColumnBudget = std::size_t{1} << 20;

std::size_t rows_per_tile(const ConvGeometry& g) {
  const std::size_t per_row = g.in_channels * g.kernel * g.kernel * g.width;
  return std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1), 1, g.height);
}

/// Unfolds output rows [r0, r0 + rows) into a (C*k*k) x (rows*W) matrix.
void im2col(const ConvGeometry& g, const float* x, std::size_t r0, std::size_t rows, float* col) {
  const std::size_t k = g.kernel, pad = k / 2, W = g.width, H = g.height;
  const std::size_t n = rows * W;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const float* plane = x + c * H * W;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        float* dst = col + ((c * k + ky) * k + kx) * n;
        for (std::size_t r = 0; r < rows; ++r) {
          const auto sy = static_cast<std::ptrdiff_t>(r0 + r + ky) - static_cast<std::ptrdiff_t>(pad);
          float* out = dst + r * W;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) {
            std::fill(out, out + W, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(sy) * W;
          const auto shift = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t c2 = 0; c2 < W; ++c2) {
            const auto sx = static_cast<std::ptrdiff_t>(c2) + shift;
            out[c2] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) ? 0.0f : src[sx];
          }
        }
      }
    }
  }
}

/// Inverse scatter of im2col, accumulating into dx.
void col2im(const ConvGeometry& g, const float* col, std::size_t r0, std::size_t rows, float* dx) {
  const std::size_t k = g.kernel, pad = k / 2, W = g.width, H = g.height;
  const std::size_t n = rows * W;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    float* plane = dx + c * H * W;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const float* src = col + ((c * k + ky) * k + kx) * n;
        for (std::size_t r = 0; r < rows; ++r) {
          const auto sy = static_cast<std::ptrdiff_t>(r0 + r + ky) - static_cast<std::ptrdiff_t>(pad);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
          float* dst = plane + static_cast<std::size_t>(sy) * W;
          const float* in = src + r * W;
          const auto shift = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t c2 = 0; c2 < W; ++c2) {
            const auto sx = static_cast<std::ptrdiff_t>(c2) + shift;
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(W)) dst[sx] += in[c2];
          }
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const float* x, const float* weight, const float* bias,
                    float* y) {
  const std::size_t K = g.in_channels * g.kernel * g.kernel;
  const std::size_t HW = g.height * g.width;
  const ConstMatrixMap wmat(weight, g.out_channels, K);

  if (g.kernel == 1) {
    MatrixMap out(y, g.out_channels, HW);
    out.noalias() = wmat * ConstMatrixMap(x, g.in_channels, HW);
  } else {
    const std::size_t tile = rows_per_tile(g);
    std::vector<float> col(K * tile * g.width);
    for (std::size_t r0 = 0; r0 < g.height; r0 += tile) {
      const std::size_t rows = std::min(tile, g.height - r0);
      const std::size_t n = rows * g.width;
      im2col(g, x, r0, rows, col.data());
      StridedMap out(y + r0 * g.width, g.out_channels, n, Eigen::OuterStride<>(HW));
      out.noalias() = wmat * ConstMatrixMap(col.data(), K, n);
    }
  }
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    float* plane = y + o * HW;
    const float b = bias[o];
    for (std::size_t i = 0; i < HW; ++i) plane[i] += b;
  }
}

void conv2d_backward(const ConvGeometry& g, const float* x, const float* weight, const float* dy,
                     float* dx, float* dweight, float* dbias) {
  const std::size_t K = g.in_channels * g.kernel * g.kernel;
  const std::size_t HW = g.height * g.width;
  const ConstMatrixMap wmat(weight, g.out_channels, K);
  MatrixMap dw(dweight, g.out_channels, K);

  for (std::size_t o = 0; o < g.out_channels; ++o) {
    const float* plane = dy + o * HW;
    double s = 0.0;
    for (std::size_t i = 0; i < HW; ++i) s += plane[i];
    dbias[o] += static_cast<float>(s);
  }

  if (g.kernel == 1) {
    const ConstMatrixMap dout(dy, g.out_channels, HW);
    const ConstMatrixMap xin(x, g.in_channels, HW);
    dw.noalias() += dout * xin.transpose();
    if (dx) MatrixMap(dx, g.in_channels, HW).noalias() += wmat.transpose() * dout;
    return;
  }

  const std::size_t tile = rows_per_tile(g);
  std::vector<float> col(K * tile * g.width);
  for (std::size_t r0 = 0; r0 < g.height; r0 += tile) {
    const std::size_t rows = std::min(tile, g.height - r0);
    const std::size_t n = rows * g.width;
    const ConstStridedMap dout(dy + r0 * g.width, g.out_channels, n, Eigen::OuterStride<>(HW));
    im2col(g, x, r0, rows, col.data());
    MatrixMap colmat(col.data(), K, n);
    dw.noalias() += dout * colmat.transpose();
    if (dx) {
      colmat.noalias() = wmat.transpose() * dout;
      col2im(g, col.data(), r0, rows, dx);
    }
  }
}

void upconv2x2_forward(const ConvGeometry& g, const float* x, const float* weight,
                       const float* bias, float* y) {
  const std::size_t H = g.height, W = g.width, HW = H * W;
  const std::size_t taps = g.out_channels * 4;
  const ConstMatrixMap wmat(weight, g.in_channels, taps);
  RowMatrix taps_out = wmat.transpose() * ConstMatrixMap(x, g.in_channels, HW);

  const std::size_t W2 = 2 * W;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    float* plane = y + o * 4 * HW;
    const float b = bias[o];
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t bb = 0; bb < 2; ++bb) {
        const float* src = taps_out.data() + (o * 4 + a * 2 + bb) * HW;
        for (std::size_t i = 0; i < H; ++i) {
          float* row = plane + (2 * i + a) * W2 + bb;
          for (std::size_t j = 0; j < W; ++j) row[2 * j] = src[i * W + j] + b;
        }
      }
    }
  }
}

void upconv2x2_backward(const ConvGeometry& g, const float* x, const float* weight,
                        const float* dy, float* dx, float* dweight, float* dbias) {
  const std::size_t H = g.height, W = g.width, HW = H * W, W2 = 2 * W;
  const std::size_t taps = g.out_channels * 4;
  RowMatrix dtaps(taps, HW);
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    const float* plane = dy + o * 4 * HW;
    double s = 0.0;
    for (std::size_t i = 0; i < 4 * HW; ++i) s += plane[i];
    dbias[o] += static_cast<float>(s);
    for (std::size_t a = 0; a < 2; ++a) {
      for (std::size_t bb = 0; bb < 2; ++bb) {
        float* dst = dtaps.data() + (o * 4 + a * 2 + bb) * HW;
        for (std::size_t i = 0; i < H; ++i) {
          const float* row = plane + (2 * i + a) * W2 + bb;
          for (std::size_t j = 0; j < W; ++j) dst[i * W + j] = row[2 * j];
        }
      }
    }
  }
  const ConstMatrixMap xin(x, g.in_channels, HW);
  MatrixMap(dweight, g.in_channels, taps).noalias() += xin * dtaps.transpose();
  if (dx) {
    const ConstMatrixMap wmat(weight, g.in_channels, taps);
    MatrixMap(dx, g.in_channels, HW).noalias() += wmat * dtaps;
  }
}

}  // namespace brainseg::kernels
