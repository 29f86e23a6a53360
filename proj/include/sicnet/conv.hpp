// Copyright 2026 The sicnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "sicnet/tensor.hpp"

namespace sicnet {

/// Dense kernel with layout (n_out, n_in, k, k).
template <typename Scalar>
struct ConvKernel {
  Tensor4<Scalar> weights;

  Index out_channels() const { return weights.batch(); }
  Index in_channels() const { return weights.channels(); }
  Index size() const { return weights.height(); }
};

/// Output extent of a sliding window along one axis.
inline Index window_output_extent(Index extent, Index before, Index after, Index k, Index stride, const char* op) {
  if (stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
  const Index padded = extent + before + after;
  if (k > padded)
    throw ShapeError(std::string(op) + ": kernel " + std::to_string(k) + " larger than padded extent " +
                     std::to_string(padded));
  return (padded - k) / stride + 1;
}

namespace detail {

// Rows are (channel, u, v) in row-major order, columns are output pixels.
template <typename Scalar>
RowMatrix<Scalar> im2col(const Scalar* image, Index channels, Index h, Index w, Index k, Index pad, Index stride,
                         Index out_h, Index out_w) {
  RowMatrix<Scalar> cols(channels * k * k, out_h * out_w);
  for (Index c = 0; c < channels; ++c) {
    const Scalar* plane = image + c * h * w;
    for (Index u = 0; u < k; ++u)
      for (Index v = 0; v < k; ++v) {
        Scalar* row = cols.data() + ((c * k + u) * k + v) * out_h * out_w;
        for (Index y = 0; y < out_h; ++y) {
          const Index iy = y * stride + u - pad;
          for (Index x = 0; x < out_w; ++x) {
            const Index ix = x * stride + v - pad;
            row[y * out_w + x] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[iy * w + ix] : Scalar(0);
          }
        }
      }
  }
  return cols;
}

template <typename Scalar>
void col2im_accumulate(const RowMatrix<Scalar>& cols, Scalar* image, Index channels, Index h, Index w, Index k,
                       Index pad, Index stride, Index out_h, Index out_w) {
  for (Index c = 0; c < channels; ++c) {
    Scalar* plane = image + c * h * w;
    for (Index u = 0; u < k; ++u)
      for (Index v = 0; v < k; ++v) {
        const Scalar* row = cols.data() + ((c * k + u) * k + v) * out_h * out_w;
        for (Index y = 0; y < out_h; ++y) {
          const Index iy = y * stride + u - pad;
          if (iy < 0 || iy >= h) continue;
          for (Index x = 0; x < out_w; ++x) {
            const Index ix = x * stride + v - pad;
            if (ix >= 0 && ix < w) plane[iy * w + ix] += row[y * out_w + x];
          }
        }
      }
  }
}

}  // namespace detail

/// Dense cross-correlation: O(y,x,j) = sum_{i,u,v} K(j,i,u,v) * I_pad(y*s+u, x*s+v, i).
template <typename Scalar>
Tensor4<Scalar> conv_standard(const Tensor4<Scalar>& input, const ConvKernel<Scalar>& kernel, Index pad,
                              Index stride = 1) {
  const Shape4 s = input.shape();
  const Index k = kernel.size();
  if (kernel.weights.width() != k) throw ShapeError("conv_standard: kernel must be square");
  if (kernel.in_channels() != s.channels)
    throw ShapeError("conv_standard: kernel expects " + std::to_string(kernel.in_channels()) + " channels, input has " +
                     std::to_string(s.channels));
  const Index oh = window_output_extent(s.height, pad, pad, k, stride, "conv_standard");
  const Index ow = window_output_extent(s.width, pad, pad, k, stride, "conv_standard");
  Tensor4<Scalar> out(s.batch, kernel.out_channels(), oh, ow);
  const auto weights = kernel.weights.batch_matrix();
  for (Index b = 0; b < s.batch; ++b) {
    const auto cols = detail::im2col(input.plane_ptr(b, 0), s.channels, s.height, s.width, k, pad, stride, oh, ow);
    out.image_matrix(b).noalias() = weights * cols;
  }
  return out;
}

template <typename Scalar>
struct ConvGrads {
  Tensor4<Scalar> input;
  Tensor4<Scalar> kernel;
};

template <typename Scalar>
ConvGrads<Scalar> conv_standard_backward(const Tensor4<Scalar>& input, const ConvKernel<Scalar>& kernel,
                                         const Tensor4<Scalar>& upstream, Index pad, Index stride = 1) {
  const Shape4 s = input.shape();
  const Index k = kernel.size();
  const Index oh = window_output_extent(s.height, pad, pad, k, stride, "conv_standard_backward");
  const Index ow = window_output_extent(s.width, pad, pad, k, stride, "conv_standard_backward");
  require_same_shape(upstream.shape(), Shape4{s.batch, kernel.out_channels(), oh, ow}, "conv_standard_backward");
  if (kernel.in_channels() != s.channels) throw ShapeError("conv_standard_backward: channel mismatch");

  ConvGrads<Scalar> g{Tensor4<Scalar>(s), Tensor4<Scalar>(kernel.weights.shape())};
  const auto weights = kernel.weights.batch_matrix();
  auto grad_w = g.kernel.batch_matrix();
  for (Index b = 0; b < s.batch; ++b) {
    const auto cols = detail::im2col(input.plane_ptr(b, 0), s.channels, s.height, s.width, k, pad, stride, oh, ow);
    const auto up = upstream.image_matrix(b);
    grad_w.noalias() += up * cols.transpose();
    RowMatrix<Scalar> grad_cols = weights.transpose() * up;
    detail::col2im_accumulate(grad_cols, g.input.plane_ptr(b, 0), s.channels, s.height, s.width, k, pad, stride, oh,
                              ow);
  }
  return g;
}

}  // namespace sicnet
