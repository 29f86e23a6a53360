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

// Topological subdivisioning of channel connectivity.
//
// The n channels are arranged as an s-dimensional tensor [d_1..d_s] (row-major,
// 1-based coordinates). Output channel (j_1..j_s) reads the c = prod(c_m)
// input channels at ((j_m + i_m - 2) mod d_m) + 1 for offsets i_m in 1..c_m,
// i.e. a wrap-around window anchored at its own coordinates.

#pragma once

#include "sicnet/conv.hpp"
#include "sicnet/tensor.hpp"

#include <numeric>
#include <vector>

namespace sicnet {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TopologyConfig {
  std::vector<Index> dims;
  std::vector<Index> neighborhood;

  Index rank() const { return Index(dims.size()); }
  Index channels() const { return std::accumulate(dims.begin(), dims.end(), Index(1), std::multiplies<>()); }
  Index neighbors() const {
    return std::accumulate(neighborhood.begin(), neighborhood.end(), Index(1), std::multiplies<>());
  }

  void validate() const {
    if (dims.empty()) throw ConfigError("topology: at least one dimension required");
    if (dims.size() != neighborhood.size()) throw ConfigError("topology: dims and neighborhood rank differ");
    for (std::size_t m = 0; m < dims.size(); ++m) {
      if (dims[m] < 1 || neighborhood[m] < 1) throw ConfigError("topology: sizes must be >= 1");
      if (neighborhood[m] > dims[m])
        throw ConfigError("topology: neighborhood " + std::to_string(neighborhood[m]) + " exceeds dimension " +
                          std::to_string(dims[m]) + " on axis " + std::to_string(m));
    }
  }

  friend bool operator==(const TopologyConfig&, const TopologyConfig&) = default;
};

/// 1-based channel index to 1-based coordinates (row-major).
inline std::vector<Index> channel_to_coords(Index j, const std::vector<Index>& dims) {
  const Index n = std::accumulate(dims.begin(), dims.end(), Index(1), std::multiplies<>());
  if (j < 1 || j > n)
    throw std::out_of_range("channel_to_coords: channel " + std::to_string(j) + " outside 1.." + std::to_string(n));
  std::vector<Index> coords(dims.size());
  Index rest = j - 1;
  for (std::size_t m = dims.size(); m-- > 0;) {
    coords[m] = rest % dims[m] + 1;
    rest /= dims[m];
  }
  return coords;
}

inline Index coords_to_channel(const std::vector<Index>& coords, const std::vector<Index>& dims) {
  if (coords.size() != dims.size()) throw std::out_of_range("coords_to_channel: rank mismatch");
  Index j = 0;
  for (std::size_t m = 0; m < dims.size(); ++m) {
    if (coords[m] < 1 || coords[m] > dims[m]) throw std::out_of_range("coords_to_channel: coordinate out of range");
    j = j * dims[m] + (coords[m] - 1);
  }
  return j + 1;
}

/// Row j lists, in offset order, the 0-based input channels feeding output channel j.
struct ConnectionTable {
  Index inputs = 0;
  Index per_output = 0;
  std::vector<Index> sources;  // outputs x per_output

  Index outputs() const { return per_output == 0 ? 0 : Index(sources.size()) / per_output; }
  Index source(Index out, Index t) const { return sources[std::size_t(out * per_output + t)]; }
};

inline ConnectionTable topo_connections(const TopologyConfig& topo) {
  topo.validate();
  const Index n = topo.channels();
  const Index c = topo.neighbors();
  ConnectionTable table{n, c, std::vector<Index>(std::size_t(n * c))};
  std::vector<Index> target(topo.dims.size());
  for (Index j = 1; j <= n; ++j) {
    const auto coords = channel_to_coords(j, topo.dims);
    for (Index t = 0; t < c; ++t) {
      const auto offsets = channel_to_coords(t + 1, topo.neighborhood);
      for (std::size_t m = 0; m < target.size(); ++m)
        target[m] = (coords[m] + offsets[m] - 2) % topo.dims[m] + 1;
      table.sources[std::size_t((j - 1) * c + t)] = coords_to_channel(target, topo.dims) - 1;
    }
  }
  return table;
}

/// Block-diagonal connectivity: output group g reads input group g.
inline ConnectionTable grouped_connections(Index in_channels, Index out_channels, Index groups) {
  if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0)
    throw ConfigError("grouped connectivity: " + std::to_string(groups) + " groups do not divide " +
                      std::to_string(in_channels) + " -> " + std::to_string(out_channels) + " channels");
  const Index in_per = in_channels / groups;
  const Index out_per = out_channels / groups;
  ConnectionTable table{in_channels, in_per, std::vector<Index>(std::size_t(out_channels * in_per))};
  for (Index j = 0; j < out_channels; ++j)
    for (Index t = 0; t < in_per; ++t) table.sources[std::size_t(j * in_per + t)] = (j / out_per) * in_per + t;
  return table;
}

using ConnectionMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline ConnectionMask connection_mask(const ConnectionTable& table) {
  ConnectionMask mask = ConnectionMask::Constant(table.outputs(), table.inputs, false);
  for (Index j = 0; j < table.outputs(); ++j)
    for (Index t = 0; t < table.per_output; ++t) mask(j, table.source(j, t)) = true;
  return mask;
}

/// mask(j, i) is true iff input channel i is in output channel j's neighborhood (0-based).
inline ConnectionMask topo_mask(const TopologyConfig& topo) { return connection_mask(topo_connections(topo)); }

/// Kernel for a sparsely connected layer, layout (n_out, c, k, k); entry t of
/// row j pairs with the t-th source in the connection table.
template <typename Scalar>
struct TopoKernel {
  Tensor4<Scalar> weights;

  Index out_channels() const { return weights.batch(); }
  Index connections() const { return weights.channels(); }
  Index size() const { return weights.height(); }
};

namespace detail {

template <typename Scalar>
void check_sparse_kernel(const Tensor4<Scalar>& weights, const ConnectionTable& table, Index in_channels,
                         const char* op) {
  if (table.inputs != in_channels)
    throw ShapeError(std::string(op) + ": connectivity expects " + std::to_string(table.inputs) +
                     " input channels, got " + std::to_string(in_channels));
  if (weights.batch() != table.outputs() || weights.channels() != table.per_output)
    throw ShapeError(std::string(op) + ": kernel " + to_string(weights.shape()) + " does not match connectivity " +
                     std::to_string(table.outputs()) + "x" + std::to_string(table.per_output));
  if (weights.height() != weights.width()) throw ShapeError(std::string(op) + ": kernel must be square");
}

}  // namespace detail

/// Convolution in which output channel j only reads its listed source channels.
/// Non-connected weights are never stored or multiplied.
template <typename Scalar>
Tensor4<Scalar> sparse_channel_conv(const Tensor4<Scalar>& input, const Tensor4<Scalar>& weights,
                                    const ConnectionTable& table, Index pad) {
  const Shape4 s = input.shape();
  detail::check_sparse_kernel(weights, table, s.channels, "sparse_channel_conv");
  const Index k = weights.height();
  const Index oh = window_output_extent(s.height, pad, pad, k, 1, "sparse_channel_conv");
  const Index ow = window_output_extent(s.width, pad, pad, k, 1, "sparse_channel_conv");
  Tensor4<Scalar> out(s.batch, table.outputs(), oh, ow);
  for (Index b = 0; b < s.batch; ++b)
    for (Index j = 0; j < table.outputs(); ++j) {
      Scalar* dst = out.plane_ptr(b, j);
      for (Index y = 0; y < oh; ++y)
        for (Index x = 0; x < ow; ++x) {
          Scalar acc(0);
          for (Index t = 0; t < table.per_output; ++t) {
            const Scalar* src = input.plane_ptr(b, table.source(j, t));
            const Scalar* w = weights.plane_ptr(j, t);
            for (Index u = 0; u < k; ++u) {
              const Index iy = y + u - pad;
              if (iy < 0 || iy >= s.height) continue;
              for (Index v = 0; v < k; ++v) {
                const Index ix = x + v - pad;
                if (ix >= 0 && ix < s.width) acc += w[u * k + v] * src[iy * s.width + ix];
              }
            }
          }
          dst[y * ow + x] = acc;
        }
    }
  return out;
}

template <typename Scalar>
struct SparseConvGrads {
  Tensor4<Scalar> input;
  Tensor4<Scalar> kernel;
};

template <typename Scalar>
SparseConvGrads<Scalar> sparse_channel_conv_backward(const Tensor4<Scalar>& input, const Tensor4<Scalar>& weights,
                                                     const ConnectionTable& table, const Tensor4<Scalar>& upstream,
                                                     Index pad) {
  const Shape4 s = input.shape();
  detail::check_sparse_kernel(weights, table, s.channels, "sparse_channel_conv_backward");
  const Index k = weights.height();
  const Index oh = window_output_extent(s.height, pad, pad, k, 1, "sparse_channel_conv_backward");
  const Index ow = window_output_extent(s.width, pad, pad, k, 1, "sparse_channel_conv_backward");
  require_same_shape(upstream.shape(), Shape4{s.batch, table.outputs(), oh, ow}, "sparse_channel_conv_backward");
  SparseConvGrads<Scalar> g{Tensor4<Scalar>(s), Tensor4<Scalar>(weights.shape())};
  for (Index b = 0; b < s.batch; ++b)
    for (Index j = 0; j < table.outputs(); ++j) {
      const Scalar* up = upstream.plane_ptr(b, j);
      for (Index t = 0; t < table.per_output; ++t) {
        const Index i = table.source(j, t);
        const Scalar* src = input.plane_ptr(b, i);
        Scalar* gsrc = g.input.plane_ptr(b, i);
        const Scalar* w = weights.plane_ptr(j, t);
        Scalar* gw = g.kernel.plane_ptr(j, t);
        for (Index y = 0; y < oh; ++y)
          for (Index x = 0; x < ow; ++x) {
            const Scalar gy = up[y * ow + x];
            for (Index u = 0; u < k; ++u) {
              const Index iy = y + u - pad;
              if (iy < 0 || iy >= s.height) continue;
              for (Index v = 0; v < k; ++v) {
                const Index ix = x + v - pad;
                if (ix < 0 || ix >= s.width) continue;
                gw[u * k + v] += gy * src[iy * s.width + ix];
                gsrc[iy * s.width + ix] += gy * w[u * k + v];
              }
            }
          }
      }
    }
  return g;
}

/// Topologically subdivisioned convolution with "same" padding (k odd).
template <typename Scalar>
Tensor4<Scalar> topo_conv(const Tensor4<Scalar>& input, const TopoKernel<Scalar>& kernel, const TopologyConfig& topo) {
  topo.validate();
  if (topo.channels() != input.channels())
    throw ShapeError("topo_conv: topology covers " + std::to_string(topo.channels()) + " channels, input has " +
                     std::to_string(input.channels()));
  const Index k = kernel.size();
  if (k % 2 == 0) throw ShapeError("topo_conv: kernel size must be odd");
  return sparse_channel_conv(input, kernel.weights, topo_connections(topo), (k - 1) / 2);
}

/// Grouped convolution, kernel layout (n_out, n_in / groups, k, k), "same" padding.
template <typename Scalar>
Tensor4<Scalar> grouped_conv(const Tensor4<Scalar>& input, const ConvKernel<Scalar>& kernel, Index groups) {
  const Index k = kernel.size();
  if (k % 2 == 0) throw ShapeError("grouped_conv: kernel size must be odd");
  if (groups < 1 || input.channels() % groups != 0)
    throw ShapeError("grouped_conv: " + std::to_string(groups) + " groups do not divide " +
                     std::to_string(input.channels()) + " channels");
  return sparse_channel_conv(input, kernel.weights,
                             grouped_connections(input.channels(), kernel.out_channels(), groups), (k - 1) / 2);
}

/// Expands a sparse kernel to the equivalent dense (n_out, n_in, k, k) kernel.
template <typename Scalar>
ConvKernel<Scalar> to_dense(const Tensor4<Scalar>& weights, const ConnectionTable& table) {
  const Index k = weights.height();
  ConvKernel<Scalar> dense{Tensor4<Scalar>(table.outputs(), table.inputs, k, k)};
  for (Index j = 0; j < table.outputs(); ++j)
    for (Index t = 0; t < table.per_output; ++t)
      std::copy_n(weights.plane_ptr(j, t), k * k, dense.weights.plane_ptr(j, table.source(j, t)));
  return dense;
}

}  // namespace sicnet
