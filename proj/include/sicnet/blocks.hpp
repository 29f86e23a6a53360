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

// Composite efficient layers built from the intra-channel primitives.
//
// Every block here is a "residual unit": a spatial stage that never mixes
// channels, a channel projection, optional batch normalization, an optional
// identity skip, and a ReLU. The single intra-channel (SIC) layer applies b
// such units in sequence, each with one filter per channel; the unraveled
// layer is one unit with b filters per channel; the spatial bottleneck swaps
// the spatial stage for a strided conv / deconv pair around the projection.

#pragma once

#include "sicnet/intra_channel.hpp"
#include "sicnet/layers.hpp"
#include "sicnet/topology.hpp"

#include <optional>
#include <variant>
#include <vector>

namespace sicnet {

/// Projection restricted to a connection table (a topologically subdivided 1x1 layer).
template <typename Scalar>
struct SparseProjection {
  TopoKernel<Scalar> kernel;  // (n_out, c, 1, 1)
  ConnectionTable table;
};

template <typename Scalar>
using Projection = std::variant<ProjectionMatrix<Scalar>, SparseProjection<Scalar>>;

template <typename Scalar>
Index projection_outputs(const Projection<Scalar>& p) {
  return std::visit(
      [](const auto& q) -> Index {
        if constexpr (std::is_same_v<std::decay_t<decltype(q)>, ProjectionMatrix<Scalar>>)
          return q.out_channels();
        else
          return q.kernel.out_channels();
      },
      p);
}

template <typename Scalar>
Tensor4<Scalar> project(const Tensor4<Scalar>& x, const Projection<Scalar>& p) {
  if (const auto* dense = std::get_if<ProjectionMatrix<Scalar>>(&p)) return linear_projection(x, *dense);
  const auto& sparse = std::get<SparseProjection<Scalar>>(p);
  return sparse_channel_conv(x, sparse.kernel.weights, sparse.table, 0);
}

template <typename Scalar>
std::pair<Tensor4<Scalar>, Tensor4<Scalar>> project_backward(const Tensor4<Scalar>& x, const Projection<Scalar>& p,
                                                             const Tensor4<Scalar>& upstream) {
  if (const auto* dense = std::get_if<ProjectionMatrix<Scalar>>(&p)) {
    auto g = linear_projection_backward(x, *dense, upstream);
    return {std::move(g.input), std::move(g.projection)};
  }
  const auto& sparse = std::get<SparseProjection<Scalar>>(p);
  auto g = sparse_channel_conv_backward(x, sparse.kernel.weights, sparse.table, upstream, 0);
  return {std::move(g.input), std::move(g.kernel)};
}

// --- residual unit -------------------------------------------------------------

template <typename Scalar>
struct UnitParams {
  IntraChannelKernel<Scalar> intra;  // stride 1, "same" padding
  Projection<Scalar> projection;
  std::optional<BatchNormState<Scalar>> norm;
};

template <typename Scalar>
struct UnitCache {
  Tensor4<Scalar> input;
  Tensor4<Scalar> spatial;
  Tensor4<Scalar> projected;
  std::optional<BatchNormCache<Scalar>> norm;
  Tensor4<Scalar> pre_activation;
  bool has_skip = false;
};

template <typename Scalar>
struct UnitGrads {
  Tensor4<Scalar> input;
  Tensor4<Scalar> skip;
  Tensor4<Scalar> intra;
  Tensor4<Scalar> projection;
  std::optional<Tensor4<Scalar>> norm_scale;
  std::optional<Tensor4<Scalar>> norm_shift;
};

inline Index same_padding(Index k, const char* op) {
  if (k % 2 == 0) throw ShapeError(std::string(op) + ": kernel size must be odd for (k-1)/2 padding");
  return (k - 1) / 2;
}

template <typename Scalar>
std::pair<Tensor4<Scalar>, UnitCache<Scalar>> unit_forward(const Tensor4<Scalar>& x, const UnitParams<Scalar>& p,
                                                            const Tensor4<Scalar>* skip, Mode mode) {
  if (p.intra.weights.height() != p.intra.weights.width())
    throw ShapeError("residual unit: intra-channel kernel must be square");
  const Index pad = same_padding(p.intra.size(), "residual unit");
  UnitCache<Scalar> c;
  c.input = x;
  c.spatial = intra_channel_conv(x, p.intra, pad);
  c.projected = project(c.spatial, p.projection);
  Tensor4<Scalar> normalized;
  if (p.norm) {
    auto bn = batchnorm_forward(c.projected, *p.norm, mode);
    normalized = std::move(bn.output);
    c.norm = std::move(bn.cache);
  } else {
    normalized = c.projected;
  }
  c.has_skip = skip != nullptr;
  c.pre_activation = skip ? add(*skip, normalized) : std::move(normalized);
  return {relu(c.pre_activation), std::move(c)};
}

template <typename Scalar>
UnitGrads<Scalar> unit_backward(const UnitCache<Scalar>& c, const UnitParams<Scalar>& p,
                                const Tensor4<Scalar>& upstream) {
  const Index pad = same_padding(p.intra.size(), "residual unit");
  UnitGrads<Scalar> g;
  Tensor4<Scalar> d_pre = relu_backward(c.pre_activation, upstream);
  if (c.has_skip) g.skip = d_pre;
  Tensor4<Scalar> d_projected;
  if (p.norm) {
    auto bn = batchnorm_backward(*c.norm, *p.norm, d_pre);
    d_projected = std::move(bn.input);
    g.norm_scale = std::move(bn.scale);
    g.norm_shift = std::move(bn.shift);
  } else {
    d_projected = std::move(d_pre);
  }
  auto [d_spatial, d_proj] = project_backward(c.spatial, p.projection, d_projected);
  g.projection = std::move(d_proj);
  auto gi = intra_channel_conv_backward(c.input, p.intra, d_spatial, Padding::uniform(pad));
  g.input = std::move(gi.input);
  g.intra = std::move(gi.kernel);
  return g;
}

// --- single intra-channel layer ------------------------------------------------

/// One of the b sequential iterations of a SIC layer.
template <typename Scalar>
using SicIteration = UnitParams<Scalar>;

template <typename Scalar>
struct SicForward {
  Tensor4<Scalar> output;
  std::vector<UnitCache<Scalar>> caches;
};

/// Runs b = iterations.size() units; iteration i computes
/// relu(current + bn(project(intra(current)))) and feeds the next.
template <typename Scalar>
SicForward<Scalar> sic_layer_forward(const Tensor4<Scalar>& input, const std::vector<SicIteration<Scalar>>& iterations,
                                     Mode mode) {
  if (iterations.empty()) throw ShapeError("sic_layer_forward: at least one iteration required");
  SicForward<Scalar> r{input, {}};
  for (const auto& it : iterations) {
    if (it.intra.channels() != r.output.channels() || projection_outputs(it.projection) != r.output.channels())
      throw ShapeError("sic_layer_forward: channel count must stay constant across iterations");
    const Tensor4<Scalar> current = r.output;
    auto [out, cache] = unit_forward(current, it, &current, mode);
    r.output = std::move(out);
    r.caches.push_back(std::move(cache));
  }
  return r;
}

template <typename Scalar>
struct SicGrads {
  Tensor4<Scalar> input;
  std::vector<UnitGrads<Scalar>> iterations;
};

template <typename Scalar>
SicGrads<Scalar> sic_layer_backward(const SicForward<Scalar>& forward,
                                    const std::vector<SicIteration<Scalar>>& iterations,
                                    const Tensor4<Scalar>& upstream) {
  if (forward.caches.size() != iterations.size()) throw ShapeError("sic_layer_backward: cache/parameter mismatch");
  require_same_shape(upstream.shape(), forward.output.shape(), "sic_layer_backward");
  SicGrads<Scalar> g{upstream, std::vector<UnitGrads<Scalar>>(iterations.size())};
  for (std::size_t i = iterations.size(); i-- > 0;) {
    auto ug = unit_backward(forward.caches[i], iterations[i], g.input);
    g.input = add(ug.input, ug.skip);
    g.iterations[i] = std::move(ug);
  }
  return g;
}

// --- unraveled convolution -----------------------------------------------------

/// b filters per input channel (kernel layout (n*b, 1, k, k)), projection
/// from n*b to n channels, then batch norm, residual add and ReLU.
template <typename Scalar>
std::pair<Tensor4<Scalar>, UnitCache<Scalar>> unraveled_conv(const Tensor4<Scalar>& input,
                                                             const UnitParams<Scalar>& params, Mode mode) {
  const Index n = input.channels();
  if (params.intra.channels() % n != 0)
    throw ShapeError("unraveled_conv: filter count must be a multiple of the channel count");
  const auto* dense = std::get_if<ProjectionMatrix<Scalar>>(&params.projection);
  const Index rows = dense ? dense->in_channels() : std::get<SparseProjection<Scalar>>(params.projection).table.inputs;
  if (rows != params.intra.channels())
    throw ShapeError("unraveled_conv: projection has " + std::to_string(rows) + " rows, expected b*n = " +
                     std::to_string(params.intra.channels()));
  if (projection_outputs(params.projection) != n) throw ShapeError("unraveled_conv: projection must return n channels");
  return unit_forward(input, params, &input, mode);
}

// --- spatial bottleneck --------------------------------------------------------

template <typename Scalar>
struct SpatialBottleneckParams {
  IntraChannelKernel<Scalar> conv;    // stride k
  Projection<Scalar> projection;
  IntraChannelKernel<Scalar> deconv;  // stride k
  std::optional<BatchNormState<Scalar>> norm;
};

/// Padding for a stride-k bottleneck: `pad` on every side, plus whatever the
/// bottom / right edges need to make the padded extent divisible by k.
inline Padding spatial_bottleneck_padding(Index height, Index width, Index k, Index pad) {
  if (k < 1 || pad < 0) throw ShapeError("spatial_bottleneck_padding: invalid k or pad");
  const Index extra_h = (k - (height + 2 * pad) % k) % k;
  const Index extra_w = (k - (width + 2 * pad) % k) % k;
  return {pad, pad + extra_h, pad, pad + extra_w};
}

template <typename Scalar>
struct SpatialBottleneckCache {
  Tensor4<Scalar> input;
  Tensor4<Scalar> reduced;
  Tensor4<Scalar> projected;
  Tensor4<Scalar> expanded;
  std::optional<BatchNormCache<Scalar>> norm;
  Tensor4<Scalar> pre_activation;
  Padding padding;
};

/// Strided intra-channel conv -> projection at reduced resolution -> strided
/// intra-channel deconv back to the input resolution -> batch norm ->
/// residual add -> ReLU.
template <typename Scalar>
std::pair<Tensor4<Scalar>, SpatialBottleneckCache<Scalar>> spatial_bottleneck_forward(
    const Tensor4<Scalar>& input, const SpatialBottleneckParams<Scalar>& p, const Padding& padding, Mode mode) {
  const Shape4 s = input.shape();
  const Index k = p.conv.stride;
  if ((s.height + padding.top + padding.bottom) % k != 0 || (s.width + padding.left + padding.right) % k != 0)
    throw ShapeError("spatial_bottleneck_forward: padded extent " +
                     std::to_string(s.height + padding.top + padding.bottom) + "x" +
                     std::to_string(s.width + padding.left + padding.right) + " not divisible by stride " +
                     std::to_string(k));
  if (p.deconv.stride != k) throw ShapeError("spatial_bottleneck_forward: conv and deconv strides differ");
  if (projection_outputs(p.projection) != s.channels)
    throw ShapeError("spatial_bottleneck_forward: projection must preserve the channel count");
  SpatialBottleneckCache<Scalar> c;
  c.input = input;
  c.padding = padding;
  c.reduced = intra_channel_conv(input, p.conv, padding);
  c.projected = project(c.reduced, p.projection);
  c.expanded = intra_channel_deconv(c.projected, p.deconv, padding, s.height, s.width);
  Tensor4<Scalar> normalized;
  if (p.norm) {
    auto bn = batchnorm_forward(c.expanded, *p.norm, mode);
    normalized = std::move(bn.output);
    c.norm = std::move(bn.cache);
  } else {
    normalized = c.expanded;
  }
  c.pre_activation = add(input, normalized);
  return {relu(c.pre_activation), std::move(c)};
}

template <typename Scalar>
struct SpatialBottleneckGrads {
  Tensor4<Scalar> input;
  Tensor4<Scalar> conv;
  Tensor4<Scalar> projection;
  Tensor4<Scalar> deconv;
  std::optional<Tensor4<Scalar>> norm_scale;
  std::optional<Tensor4<Scalar>> norm_shift;
};

template <typename Scalar>
SpatialBottleneckGrads<Scalar> spatial_bottleneck_backward(const SpatialBottleneckCache<Scalar>& c,
                                                           const SpatialBottleneckParams<Scalar>& p,
                                                           const Tensor4<Scalar>& upstream) {
  SpatialBottleneckGrads<Scalar> g;
  Tensor4<Scalar> d_pre = relu_backward(c.pre_activation, upstream);
  Tensor4<Scalar> d_expanded;
  if (p.norm) {
    auto bn = batchnorm_backward(*c.norm, *p.norm, d_pre);
    d_expanded = std::move(bn.input);
    g.norm_scale = std::move(bn.scale);
    g.norm_shift = std::move(bn.shift);
  } else {
    d_expanded = d_pre;
  }
  auto gd = intra_channel_deconv_backward(c.projected, p.deconv, d_expanded, c.padding);
  g.deconv = std::move(gd.kernel);
  auto [d_reduced, d_proj] = project_backward(c.reduced, p.projection, gd.input);
  g.projection = std::move(d_proj);
  auto gc = intra_channel_conv_backward(c.input, p.conv, d_reduced, c.padding);
  g.conv = std::move(gc.kernel);
  g.input = add(gc.input, d_pre);
  return g;
}

// --- channel-wise bottleneck ---------------------------------------------------

/// Two single-filter units, n -> n/2 -> n, with one identity skip around both.
template <typename Scalar>
struct ChannelBottleneckParams {
  UnitParams<Scalar> reduce;
  UnitParams<Scalar> expand;
};

template <typename Scalar>
struct ChannelBottleneckCache {
  UnitCache<Scalar> reduce;
  UnitCache<Scalar> expand;
};

template <typename Scalar>
std::pair<Tensor4<Scalar>, ChannelBottleneckCache<Scalar>> channelwise_bottleneck_block(
    const Tensor4<Scalar>& input, const ChannelBottleneckParams<Scalar>& p, Mode mode) {
  const Index n = input.channels();
  if (n % 2 != 0) throw ShapeError("channelwise_bottleneck_block: channel count must be even");
  if (projection_outputs(p.reduce.projection) != n / 2 || projection_outputs(p.expand.projection) != n)
    throw ShapeError("channelwise_bottleneck_block: projections must map n -> n/2 -> n");
  auto [half, reduce_cache] = unit_forward(input, p.reduce, static_cast<const Tensor4<Scalar>*>(nullptr), mode);
  auto [out, expand_cache] = unit_forward(half, p.expand, &input, mode);
  return {std::move(out), {std::move(reduce_cache), std::move(expand_cache)}};
}

template <typename Scalar>
struct ChannelBottleneckGrads {
  Tensor4<Scalar> input;
  UnitGrads<Scalar> reduce;
  UnitGrads<Scalar> expand;
};

template <typename Scalar>
ChannelBottleneckGrads<Scalar> channelwise_bottleneck_backward(const ChannelBottleneckCache<Scalar>& c,
                                                               const ChannelBottleneckParams<Scalar>& p,
                                                               const Tensor4<Scalar>& upstream) {
  ChannelBottleneckGrads<Scalar> g;
  g.expand = unit_backward(c.expand, p.expand, upstream);
  g.reduce = unit_backward(c.reduce, p.reduce, g.expand.input);
  g.input = add(g.reduce.input, g.expand.skip);
  return g;
}

}  // namespace sicnet
