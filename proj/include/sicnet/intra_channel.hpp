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

// Intra-channel (depthwise) convolution, its transpose, and linear channel
// projection. Together these are the building blocks of every efficient
// layer in the library.

#pragma once

#include "sicnet/conv.hpp"
#include "sicnet/tensor.hpp"

namespace sicnet {

/// One k x k filter per output channel, layout (m, 1, k, k).
///
/// When m is a multiple b of the input channel count, output channel `o`
/// reads input channel `o / b`, so each input channel owns b consecutive
/// filters. m == n is the single-filter case.
template <typename Scalar>
struct IntraChannelKernel {
  Tensor4<Scalar> weights;
  Index stride = 1;

  Index channels() const { return weights.batch(); }
  Index size() const { return weights.height(); }
};

/// Projection P of shape (n_in, n_out), stored as a (n_in, n_out, 1, 1) tensor.
template <typename Scalar>
struct ProjectionMatrix {
  Tensor4<Scalar> weights;

  Index in_channels() const { return weights.batch(); }
  Index out_channels() const { return weights.channels(); }

  Eigen::Map<const RowMatrix<Scalar>> matrix() const {
    return {weights.data(), weights.batch(), weights.channels()};
  }
  Eigen::Map<RowMatrix<Scalar>> matrix() { return {weights.data(), weights.batch(), weights.channels()}; }

  static ProjectionMatrix from(const RowMatrix<Scalar>& m) {
    ProjectionMatrix p{Tensor4<Scalar>(m.rows(), m.cols(), 1, 1)};
    p.matrix() = m;
    return p;
  }
};

namespace detail {

template <typename Scalar>
void check_intra_kernel(const IntraChannelKernel<Scalar>& kernel, const char* op) {
  if (kernel.weights.channels() != 1) throw ShapeError(std::string(op) + ": kernel layout must be (m, 1, k, k)");
  if (kernel.weights.height() != kernel.weights.width()) throw ShapeError(std::string(op) + ": kernel must be square");
  if (kernel.stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
}

inline Index channel_multiplier(Index kernel_channels, Index input_channels, const char* op) {
  if (kernel_channels % input_channels != 0)
    throw ShapeError(std::string(op) + ": kernel has " + std::to_string(kernel_channels) +
                     " filters, not a multiple of " + std::to_string(input_channels) + " input channels");
  return kernel_channels / input_channels;
}

}  // namespace detail

template <typename Scalar>
Tensor4<Scalar> intra_channel_conv(const Tensor4<Scalar>& input, const IntraChannelKernel<Scalar>& kernel,
                                   const Padding& pad) {
  detail::check_intra_kernel(kernel, "intra_channel_conv");
  const Shape4 s = input.shape();
  const Index mult = detail::channel_multiplier(kernel.channels(), s.channels, "intra_channel_conv");
  const Index k = kernel.size();
  const Index st = kernel.stride;
  const Index oh = window_output_extent(s.height, pad.top, pad.bottom, k, st, "intra_channel_conv");
  const Index ow = window_output_extent(s.width, pad.left, pad.right, k, st, "intra_channel_conv");
  Tensor4<Scalar> out(s.batch, kernel.channels(), oh, ow);
  for (Index b = 0; b < s.batch; ++b)
    for (Index m = 0; m < kernel.channels(); ++m) {
      const Scalar* src = input.plane_ptr(b, m / mult);
      const Scalar* w = kernel.weights.plane_ptr(m, 0);
      Scalar* dst = out.plane_ptr(b, m);
      for (Index y = 0; y < oh; ++y)
        for (Index x = 0; x < ow; ++x) {
          Scalar acc(0);
          for (Index u = 0; u < k; ++u) {
            const Index iy = y * st + u - pad.top;
            if (iy < 0 || iy >= s.height) continue;
            for (Index v = 0; v < k; ++v) {
              const Index ix = x * st + v - pad.left;
              if (ix >= 0 && ix < s.width) acc += w[u * k + v] * src[iy * s.width + ix];
            }
          }
          dst[y * ow + x] = acc;
        }
    }
  return out;
}

template <typename Scalar>
Tensor4<Scalar> intra_channel_conv(const Tensor4<Scalar>& input, const IntraChannelKernel<Scalar>& kernel, Index pad) {
  return intra_channel_conv(input, kernel, Padding::uniform(pad));
}

template <typename Scalar>
struct IntraChannelGrads {
  Tensor4<Scalar> input;
  Tensor4<Scalar> kernel;
};

template <typename Scalar>
IntraChannelGrads<Scalar> intra_channel_conv_backward(const Tensor4<Scalar>& input,
                                                      const IntraChannelKernel<Scalar>& kernel,
                                                      const Tensor4<Scalar>& upstream, const Padding& pad) {
  detail::check_intra_kernel(kernel, "intra_channel_conv_backward");
  const Shape4 s = input.shape();
  const Index mult = detail::channel_multiplier(kernel.channels(), s.channels, "intra_channel_conv_backward");
  const Index k = kernel.size();
  const Index st = kernel.stride;
  const Index oh = window_output_extent(s.height, pad.top, pad.bottom, k, st, "intra_channel_conv_backward");
  const Index ow = window_output_extent(s.width, pad.left, pad.right, k, st, "intra_channel_conv_backward");
  require_same_shape(upstream.shape(), Shape4{s.batch, kernel.channels(), oh, ow}, "intra_channel_conv_backward");

  IntraChannelGrads<Scalar> g{Tensor4<Scalar>(s), Tensor4<Scalar>(kernel.weights.shape())};
  for (Index b = 0; b < s.batch; ++b)
    for (Index m = 0; m < kernel.channels(); ++m) {
      const Scalar* src = input.plane_ptr(b, m / mult);
      Scalar* gsrc = g.input.plane_ptr(b, m / mult);
      const Scalar* w = kernel.weights.plane_ptr(m, 0);
      Scalar* gw = g.kernel.plane_ptr(m, 0);
      const Scalar* up = upstream.plane_ptr(b, m);
      for (Index y = 0; y < oh; ++y)
        for (Index x = 0; x < ow; ++x) {
          const Scalar gy = up[y * ow + x];
          for (Index u = 0; u < k; ++u) {
            const Index iy = y * st + u - pad.top;
            if (iy < 0 || iy >= s.height) continue;
            for (Index v = 0; v < k; ++v) {
              const Index ix = x * st + v - pad.left;
              if (ix < 0 || ix >= s.width) continue;
              gw[u * k + v] += gy * src[iy * s.width + ix];
              gsrc[iy * s.width + ix] += gy * w[u * k + v];
            }
          }
        }
    }
  return g;
}

/// Per-channel transposed convolution, the exact adjoint of `intra_channel_conv`
/// with the same kernel, stride and padding. Input pixel (y, x) adds
/// value * K(u, v) to output pixel (y*stride + u - pad.top, x*stride + v - pad.left);
/// contributions that land in the padding border are dropped. The output
/// plane is `out_height` x `out_width`.
template <typename Scalar>
Tensor4<Scalar> intra_channel_deconv(const Tensor4<Scalar>& input, const IntraChannelKernel<Scalar>& kernel,
                                     const Padding& pad, Index out_height, Index out_width) {
  detail::check_intra_kernel(kernel, "intra_channel_deconv");
  const Shape4 s = input.shape();
  if (kernel.channels() != s.channels) throw ShapeError("intra_channel_deconv: channel mismatch");
  const Index k = kernel.size();
  const Index st = kernel.stride;
  if (out_height < 1 || out_width < 1) throw ShapeError("intra_channel_deconv: empty output");
  Tensor4<Scalar> out(s.batch, s.channels, out_height, out_width);
  for (Index b = 0; b < s.batch; ++b)
    for (Index c = 0; c < s.channels; ++c) {
      const Scalar* src = input.plane_ptr(b, c);
      const Scalar* w = kernel.weights.plane_ptr(c, 0);
      Scalar* dst = out.plane_ptr(b, c);
      for (Index y = 0; y < s.height; ++y)
        for (Index x = 0; x < s.width; ++x) {
          const Scalar value = src[y * s.width + x];
          for (Index u = 0; u < k; ++u) {
            const Index oy = y * st + u - pad.top;
            if (oy < 0 || oy >= out_height) continue;
            for (Index v = 0; v < k; ++v) {
              const Index ox = x * st + v - pad.left;
              if (ox >= 0 && ox < out_width) dst[oy * out_width + ox] += value * w[u * k + v];
            }
          }
        }
    }
  return out;
}

/// Uncropped transpose: output extent (in - 1) * stride + k, i.e. k * in when stride == k.
template <typename Scalar>
Tensor4<Scalar> intra_channel_deconv(const Tensor4<Scalar>& input, const IntraChannelKernel<Scalar>& kernel) {
  const Index k = kernel.size();
  return intra_channel_deconv(input, kernel, Padding{}, (input.height() - 1) * kernel.stride + k,
                              (input.width() - 1) * kernel.stride + k);
}

template <typename Scalar>
IntraChannelGrads<Scalar> intra_channel_deconv_backward(const Tensor4<Scalar>& input,
                                                        const IntraChannelKernel<Scalar>& kernel,
                                                        const Tensor4<Scalar>& upstream, const Padding& pad) {
  detail::check_intra_kernel(kernel, "intra_channel_deconv_backward");
  const Shape4 s = input.shape();
  if (kernel.channels() != s.channels || upstream.channels() != s.channels || upstream.batch() != s.batch)
    throw ShapeError("intra_channel_deconv_backward: channel mismatch");
  const Index k = kernel.size();
  const Index st = kernel.stride;
  const Index oh = upstream.height();
  const Index ow = upstream.width();
  IntraChannelGrads<Scalar> g{Tensor4<Scalar>(s), Tensor4<Scalar>(kernel.weights.shape())};
  for (Index b = 0; b < s.batch; ++b)
    for (Index c = 0; c < s.channels; ++c) {
      const Scalar* src = input.plane_ptr(b, c);
      const Scalar* w = kernel.weights.plane_ptr(c, 0);
      const Scalar* up = upstream.plane_ptr(b, c);
      Scalar* gsrc = g.input.plane_ptr(b, c);
      Scalar* gw = g.kernel.plane_ptr(c, 0);
      for (Index y = 0; y < s.height; ++y)
        for (Index x = 0; x < s.width; ++x) {
          Scalar acc(0);
          for (Index u = 0; u < k; ++u) {
            const Index oy = y * st + u - pad.top;
            if (oy < 0 || oy >= oh) continue;
            for (Index v = 0; v < k; ++v) {
              const Index ox = x * st + v - pad.left;
              if (ox < 0 || ox >= ow) continue;
              const Scalar gy = up[oy * ow + ox];
              acc += gy * w[u * k + v];
              gw[u * k + v] += gy * src[y * s.width + x];
            }
          }
          gsrc[y * s.width + x] = acc;
        }
    }
  return g;
}

/// Per-pixel channel mixing: out(l) = sum_j in(j) * P(j, l).
template <typename Scalar>
Tensor4<Scalar> linear_projection(const Tensor4<Scalar>& input, const ProjectionMatrix<Scalar>& p) {
  const Shape4 s = input.shape();
  if (p.in_channels() != s.channels)
    throw ShapeError("linear_projection: P has " + std::to_string(p.in_channels()) + " rows, input has " +
                     std::to_string(s.channels) + " channels");
  Tensor4<Scalar> out(s.batch, p.out_channels(), s.height, s.width);
  const auto m = p.matrix();
  for (Index b = 0; b < s.batch; ++b) out.image_matrix(b).noalias() = m.transpose() * input.image_matrix(b);
  return out;
}

template <typename Scalar>
struct ProjectionGrads {
  Tensor4<Scalar> input;
  Tensor4<Scalar> projection;
};

template <typename Scalar>
ProjectionGrads<Scalar> linear_projection_backward(const Tensor4<Scalar>& input, const ProjectionMatrix<Scalar>& p,
                                                   const Tensor4<Scalar>& upstream) {
  const Shape4 s = input.shape();
  if (p.in_channels() != s.channels) throw ShapeError("linear_projection_backward: dimension mismatch");
  require_same_shape(upstream.shape(), Shape4{s.batch, p.out_channels(), s.height, s.width},
                     "linear_projection_backward");
  ProjectionGrads<Scalar> g{Tensor4<Scalar>(s), Tensor4<Scalar>(p.weights.shape())};
  const auto m = p.matrix();
  Eigen::Map<RowMatrix<Scalar>> gp(g.projection.data(), p.in_channels(), p.out_channels());
  for (Index b = 0; b < s.batch; ++b) {
    g.input.image_matrix(b).noalias() = m * upstream.image_matrix(b);
    gp.noalias() += input.image_matrix(b) * upstream.image_matrix(b).transpose();
  }
  return g;
}

}  // namespace sicnet
