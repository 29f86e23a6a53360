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

// Trainable networks assembled from a ModelSpec.
//
// Each traced layer becomes one Module holding its parameters, the matching
// gradient slots and whatever the forward pass must remember for backward.
// Parameters and batch-norm running statistics are exposed by path
// ("stage2.3/it0.intra") for the optimizer and the checkpoint container.

#pragma once

#include "sicnet/blocks.hpp"
#include "sicnet/conv.hpp"
#include "sicnet/intra_channel.hpp"
#include "sicnet/layers.hpp"
#include "sicnet/model_spec.hpp"
#include "sicnet/topology.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace sicnet {

template <typename Scalar>
struct ParamRef {
  std::string name;
  Tensor4<Scalar>* value = nullptr;
  Tensor4<Scalar>* grad = nullptr;
};

template <typename Scalar>
struct BufferRef {
  std::string name;
  Tensor4<Scalar>* value = nullptr;
};

template <typename Scalar>
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor4<Scalar> forward(const Tensor4<Scalar>& x, Mode mode) = 0;
  /// Returns d loss / d input and overwrites the parameter gradients.
  virtual Tensor4<Scalar> backward(const Tensor4<Scalar>& upstream) = 0;
  virtual void parameters(const std::string&, std::vector<ParamRef<Scalar>>&) {}
  virtual void buffers(const std::string&, std::vector<BufferRef<Scalar>>&) {}
};

namespace detail {

template <typename Scalar, typename Rng>
Tensor4<Scalar> he_normal(const Shape4& s, Index fan_in, Rng& rng) {
  return Tensor4<Scalar>::Gaussian(s, rng, Scalar(std::sqrt(2.0 / double(fan_in))));
}

template <typename Scalar>
Tensor4<Scalar>& projection_weights(Projection<Scalar>& p) {
  if (auto* dense = std::get_if<ProjectionMatrix<Scalar>>(&p)) return dense->weights;
  return std::get<SparseProjection<Scalar>>(p).kernel.weights;
}

template <typename Scalar>
void norm_parameters(const std::string& prefix, std::optional<BatchNormState<Scalar>>& norm,
                     Tensor4<Scalar>& g_scale, Tensor4<Scalar>& g_shift, std::vector<ParamRef<Scalar>>& out) {
  if (!norm) return;
  out.push_back({prefix + "bn.scale", &norm->scale, &g_scale});
  out.push_back({prefix + "bn.shift", &norm->shift, &g_shift});
}

template <typename Scalar>
void norm_buffers(const std::string& prefix, std::optional<BatchNormState<Scalar>>& norm,
                  std::vector<BufferRef<Scalar>>& out) {
  if (!norm) return;
  out.push_back({prefix + "bn.mean", &norm->running_mean});
  out.push_back({prefix + "bn.var", &norm->running_var});
}

template <typename Scalar>
void update_running(std::optional<BatchNormState<Scalar>>& norm, const std::optional<BatchNormCache<Scalar>>& cache,
                    const Shape4& s, Mode mode) {
  if (norm && cache && mode == Mode::Train) batchnorm_update_running(*norm, *cache, s.batch * s.plane());
}

/// One residual unit with its gradient slots and cache.
template <typename Scalar>
struct UnitSlot {
  UnitParams<Scalar> params;
  UnitCache<Scalar> cache;
  Tensor4<Scalar> g_intra;
  Tensor4<Scalar> g_projection;
  Tensor4<Scalar> g_scale;
  Tensor4<Scalar> g_shift;

  explicit UnitSlot(UnitParams<Scalar> p)
      : params(std::move(p)),
        g_intra(params.intra.weights.shape()),
        g_projection(projection_weights(params.projection).shape()) {
    if (params.norm) {
      g_scale = Tensor4<Scalar>(params.norm->scale.shape());
      g_shift = Tensor4<Scalar>(params.norm->shift.shape());
    }
  }

  void store(UnitGrads<Scalar>& g) {
    g_intra = std::move(g.intra);
    g_projection = std::move(g.projection);
    if (g.norm_scale) g_scale = std::move(*g.norm_scale);
    if (g.norm_shift) g_shift = std::move(*g.norm_shift);
  }

  void parameters(const std::string& prefix, std::vector<ParamRef<Scalar>>& out) {
    out.push_back({prefix + "intra", &params.intra.weights, &g_intra});
    out.push_back({prefix + "proj", &projection_weights(params.projection), &g_projection});
    norm_parameters(prefix, params.norm, g_scale, g_shift, out);
  }
  void buffers(const std::string& prefix, std::vector<BufferRef<Scalar>>& out) {
    norm_buffers(prefix, params.norm, out);
  }
};

/// Batch norm (optional), residual add when shapes match, ReLU.
template <typename Scalar>
struct ActivationTail {
  std::optional<BatchNormState<Scalar>> norm;
  std::optional<BatchNormCache<Scalar>> cache;
  Tensor4<Scalar> pre_activation;
  bool residual = false;
  Tensor4<Scalar> g_scale;
  Tensor4<Scalar> g_shift;

  ActivationTail(Index channels, bool use_norm, bool use_residual) : residual(use_residual) {
    if (use_norm) {
      norm = BatchNormState<Scalar>::identity(channels);
      g_scale = Tensor4<Scalar>(1, channels, 1, 1);
      g_shift = Tensor4<Scalar>(1, channels, 1, 1);
    }
  }

  Tensor4<Scalar> forward(const Tensor4<Scalar>& input, Tensor4<Scalar> z, Mode mode) {
    cache.reset();
    if (norm) {
      auto bn = batchnorm_forward(z, *norm, mode);
      z = std::move(bn.output);
      cache = std::move(bn.cache);
      update_running(norm, cache, z.shape(), mode);
    }
    pre_activation = residual ? add(input, z) : std::move(z);
    return relu(pre_activation);
  }

  /// Returns (d z, d input via the skip path or empty).
  std::pair<Tensor4<Scalar>, std::optional<Tensor4<Scalar>>> backward(const Tensor4<Scalar>& upstream) {
    Tensor4<Scalar> d = relu_backward(pre_activation, upstream);
    std::optional<Tensor4<Scalar>> skip;
    if (residual) skip = d;
    if (norm) {
      auto g = batchnorm_backward(*cache, *norm, d);
      g_scale = std::move(g.scale);
      g_shift = std::move(g.shift);
      d = std::move(g.input);
    }
    return {std::move(d), std::move(skip)};
  }
};

}  // namespace detail

// --- modules -------------------------------------------------------------------

/// Standard or 1x1 convolution; residual only when the shape is preserved.
template <typename Scalar>
class ConvModule final : public Module<Scalar> {
 public:
  template <typename Rng>
  ConvModule(const LayerInstance& li, bool use_norm, Rng& rng)
      : kernel_{detail::he_normal<Scalar>(Shape4{li.out_channels, li.in_channels, kernel_size(li), kernel_size(li)},
                                          li.in_channels * kernel_size(li) * kernel_size(li), rng)},
        g_kernel_(kernel_.weights.shape()),
        pad_(li.padding.top),
        stride_(li.spec.stride),
        tail_(li.out_channels, use_norm,
              li.spec.scheme == Scheme::Standard && li.in_channels == li.out_channels &&
                  li.in_height == li.out_height && li.in_width == li.out_width) {}

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x, Mode mode) override {
    input_ = x;
    return tail_.forward(x, conv_standard(x, kernel_, pad_, stride_), mode);
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& upstream) override {
    auto [dz, skip] = tail_.backward(upstream);
    auto g = conv_standard_backward(input_, kernel_, dz, pad_, stride_);
    g_kernel_ = std::move(g.kernel);
    return skip ? add(g.input, *skip) : std::move(g.input);
  }

  void parameters(const std::string& p, std::vector<ParamRef<Scalar>>& out) override {
    out.push_back({p + "kernel", &kernel_.weights, &g_kernel_});
    detail::norm_parameters(p, tail_.norm, tail_.g_scale, tail_.g_shift, out);
  }
  void buffers(const std::string& p, std::vector<BufferRef<Scalar>>& out) override {
    detail::norm_buffers(p, tail_.norm, out);
  }

 private:
  static Index kernel_size(const LayerInstance& li) { return li.spec.scheme == Scheme::Project1x1 ? 1 : li.spec.k; }

  ConvKernel<Scalar> kernel_;
  Tensor4<Scalar> g_kernel_;
  Index pad_;
  Index stride_;
  detail::ActivationTail<Scalar> tail_;
  Tensor4<Scalar> input_;
};

/// Topology- or group-restricted convolution with a residual around it.
template <typename Scalar>
class SparseConvModule final : public Module<Scalar> {
 public:
  template <typename Rng>
  SparseConvModule(const LayerInstance& li, ConnectionTable table, bool use_norm, Rng& rng)
      : table_(std::move(table)),
        weights_(detail::he_normal<Scalar>(Shape4{li.out_channels, table_.per_output, li.spec.k, li.spec.k},
                                           table_.per_output * li.spec.k * li.spec.k, rng)),
        g_weights_(weights_.shape()),
        pad_(li.padding.top),
        tail_(li.out_channels, use_norm, true) {}

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x, Mode mode) override {
    input_ = x;
    return tail_.forward(x, sparse_channel_conv(x, weights_, table_, pad_), mode);
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& upstream) override {
    auto [dz, skip] = tail_.backward(upstream);
    auto g = sparse_channel_conv_backward(input_, weights_, table_, dz, pad_);
    g_weights_ = std::move(g.kernel);
    return add(g.input, *skip);
  }

  void parameters(const std::string& p, std::vector<ParamRef<Scalar>>& out) override {
    out.push_back({p + "kernel", &weights_, &g_weights_});
    detail::norm_parameters(p, tail_.norm, tail_.g_scale, tail_.g_shift, out);
  }
  void buffers(const std::string& p, std::vector<BufferRef<Scalar>>& out) override {
    detail::norm_buffers(p, tail_.norm, out);
  }

 private:
  ConnectionTable table_;
  Tensor4<Scalar> weights_;
  Tensor4<Scalar> g_weights_;
  Index pad_;
  detail::ActivationTail<Scalar> tail_;
  Tensor4<Scalar> input_;
};

namespace detail {

/// Unit with `multiplier` filters per channel and a projection back to n_out
/// channels, dense or restricted to a topology.
template <typename Scalar, typename Rng>
UnitParams<Scalar> make_unit(Index n_in, Index n_out, Index k, Index multiplier,
                             const std::optional<TopologyConfig>& topo, bool use_norm, Rng& rng) {
  const Index mid = n_in * multiplier;
  IntraChannelKernel<Scalar> intra{he_normal<Scalar>(Shape4{mid, 1, k, k}, k * k, rng), 1};
  Projection<Scalar> projection;
  if (topo) {
    ConnectionTable table = topo_connections(*topo);
    Tensor4<Scalar> w = he_normal<Scalar>(Shape4{n_out, table.per_output, 1, 1}, table.per_output, rng);
    projection = SparseProjection<Scalar>{TopoKernel<Scalar>{std::move(w)}, std::move(table)};
  } else {
    projection = ProjectionMatrix<Scalar>{he_normal<Scalar>(Shape4{mid, n_out, 1, 1}, mid, rng)};
  }
  std::optional<BatchNormState<Scalar>> norm;
  if (use_norm) norm = BatchNormState<Scalar>::identity(n_out);
  return {std::move(intra), std::move(projection), std::move(norm)};
}

}  // namespace detail

/// SIC layer (b sequential units) or unraveled convolution (one unit, b filters per channel).
template <typename Scalar>
class SicModule final : public Module<Scalar> {
 public:
  template <typename Rng>
  SicModule(const LayerInstance& li, bool use_norm, Rng& rng) : unraveled_(li.spec.scheme == Scheme::Unraveled) {
    const Index n = li.in_channels;
    const Index count = unraveled_ ? 1 : li.spec.b;
    for (Index i = 0; i < count; ++i)
      slots_.emplace_back(detail::make_unit<Scalar>(n, n, li.spec.k, unraveled_ ? li.spec.b : 1, li.spec.topology,
                                                    use_norm, rng));
  }

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x, Mode mode) override {
    Tensor4<Scalar> current = x;
    for (auto& s : slots_) {
      auto [out, cache] = unraveled_ ? unraveled_conv(current, s.params, mode)
                                     : unit_forward(current, s.params, &current, mode);
      s.cache = std::move(cache);
      detail::update_running(s.params.norm, s.cache.norm, out.shape(), mode);
      current = std::move(out);
    }
    return current;
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& upstream) override {
    Tensor4<Scalar> g = upstream;
    for (std::size_t i = slots_.size(); i-- > 0;) {
      auto ug = unit_backward(slots_[i].cache, slots_[i].params, g);
      g = add(ug.input, ug.skip);
      slots_[i].store(ug);
    }
    return g;
  }

  void parameters(const std::string& p, std::vector<ParamRef<Scalar>>& out) override {
    for (std::size_t i = 0; i < slots_.size(); ++i) slots_[i].parameters(p + "it" + std::to_string(i) + ".", out);
  }
  void buffers(const std::string& p, std::vector<BufferRef<Scalar>>& out) override {
    for (std::size_t i = 0; i < slots_.size(); ++i) slots_[i].buffers(p + "it" + std::to_string(i) + ".", out);
  }

 private:
  bool unraveled_;
  std::vector<detail::UnitSlot<Scalar>> slots_;
};

template <typename Scalar>
class SpatialBottleneckModule final : public Module<Scalar> {
 public:
  template <typename Rng>
  SpatialBottleneckModule(const LayerInstance& li, bool use_norm, Rng& rng) : pad_(li.spec.pad) {
    const Index n = li.in_channels;
    const Index k = li.spec.k;
    params_.conv = {detail::he_normal<Scalar>(Shape4{n, 1, k, k}, k * k, rng), k};
    params_.projection = ProjectionMatrix<Scalar>{detail::he_normal<Scalar>(Shape4{n, n, 1, 1}, n, rng)};
    params_.deconv = {detail::he_normal<Scalar>(Shape4{n, 1, k, k}, 1, rng), k};
    if (use_norm) {
      params_.norm = BatchNormState<Scalar>::identity(n);
      g_scale_ = Tensor4<Scalar>(1, n, 1, 1);
      g_shift_ = Tensor4<Scalar>(1, n, 1, 1);
    }
    g_conv_ = Tensor4<Scalar>(params_.conv.weights.shape());
    g_projection_ = Tensor4<Scalar>(n, n, 1, 1);
    g_deconv_ = Tensor4<Scalar>(params_.deconv.weights.shape());
  }

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x, Mode mode) override {
    const Padding padding = spatial_bottleneck_padding(x.height(), x.width(), params_.conv.stride, pad_);
    auto [out, cache] = spatial_bottleneck_forward(x, params_, padding, mode);
    cache_ = std::move(cache);
    detail::update_running(params_.norm, cache_.norm, out.shape(), mode);
    return out;
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& upstream) override {
    auto g = spatial_bottleneck_backward(cache_, params_, upstream);
    g_conv_ = std::move(g.conv);
    g_projection_ = std::move(g.projection);
    g_deconv_ = std::move(g.deconv);
    if (g.norm_scale) g_scale_ = std::move(*g.norm_scale);
    if (g.norm_shift) g_shift_ = std::move(*g.norm_shift);
    return g.input;
  }

  void parameters(const std::string& p, std::vector<ParamRef<Scalar>>& out) override {
    out.push_back({p + "conv", &params_.conv.weights, &g_conv_});
    out.push_back({p + "proj", &detail::projection_weights(params_.projection), &g_projection_});
    out.push_back({p + "deconv", &params_.deconv.weights, &g_deconv_});
    detail::norm_parameters(p, params_.norm, g_scale_, g_shift_, out);
  }
  void buffers(const std::string& p, std::vector<BufferRef<Scalar>>& out) override {
    detail::norm_buffers(p, params_.norm, out);
  }

 private:
  Index pad_;
  SpatialBottleneckParams<Scalar> params_;
  SpatialBottleneckCache<Scalar> cache_;
  Tensor4<Scalar> g_conv_, g_projection_, g_deconv_, g_scale_, g_shift_;
};

template <typename Scalar>
class ChannelBottleneckModule final : public Module<Scalar> {
 public:
  template <typename Rng>
  ChannelBottleneckModule(const LayerInstance& li, bool use_norm, Rng& rng)
      : reduce_(detail::make_unit<Scalar>(li.in_channels, li.in_channels / 2, li.spec.k, 1, std::nullopt, use_norm,
                                          rng)),
        expand_(detail::make_unit<Scalar>(li.in_channels / 2, li.in_channels, li.spec.k, 1, std::nullopt, use_norm,
                                          rng)) {}

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x, Mode mode) override {
    auto [out, cache] = channelwise_bottleneck_block(x, ChannelBottleneckParams<Scalar>{reduce_.params, expand_.params},
                                                     mode);
    reduce_.cache = std::move(cache.reduce);
    expand_.cache = std::move(cache.expand);
    detail::update_running(reduce_.params.norm, reduce_.cache.norm, reduce_.cache.projected.shape(), mode);
    detail::update_running(expand_.params.norm, expand_.cache.norm, out.shape(), mode);
    return out;
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& upstream) override {
    auto ge = unit_backward(expand_.cache, expand_.params, upstream);
    auto gr = unit_backward(reduce_.cache, reduce_.params, ge.input);
    Tensor4<Scalar> gi = add(gr.input, ge.skip);
    expand_.store(ge);
    reduce_.store(gr);
    return gi;
  }

  void parameters(const std::string& p, std::vector<ParamRef<Scalar>>& out) override {
    reduce_.parameters(p + "reduce.", out);
    expand_.parameters(p + "expand.", out);
  }
  void buffers(const std::string& p, std::vector<BufferRef<Scalar>>& out) override {
    reduce_.buffers(p + "reduce.", out);
    expand_.buffers(p + "expand.", out);
  }

 private:
  detail::UnitSlot<Scalar> reduce_;
  detail::UnitSlot<Scalar> expand_;
};

template <typename Scalar>
class PoolModule final : public Module<Scalar> {
 public:
  PoolModule(bool max, Index window, Index stride) : max_(max), window_(window), stride_(stride) {}

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x, Mode) override {
    shape_ = x.shape();
    if (!max_) return avg_pool(x, window_, stride_);
    auto r = max_pool(x, window_, stride_);
    argmax_ = std::move(r.argmax);
    return std::move(r.output);
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& upstream) override {
    return max_ ? max_pool_backward(shape_, argmax_, upstream) : avg_pool_backward(shape_, window_, stride_, upstream);
  }

 private:
  bool max_;
  Index window_;
  Index stride_;
  Shape4 shape_;
  std::vector<Index> argmax_;
};

/// Fully connected layer with bias; hidden layers add ReLU and dropout.
template <typename Scalar>
class DenseModule final : public Module<Scalar> {
 public:
  template <typename Rng>
  DenseModule(const LayerInstance& li, bool hidden, double dropout_rate, std::mt19937_64* dropout_rng, Rng& rng)
      : hidden_(hidden), rate_(dropout_rate), dropout_rng_(dropout_rng) {
    const Index in = li.in_channels * li.in_height * li.in_width;
    w_.weights = detail::he_normal<Scalar>(Shape4{li.out_channels, in, 1, 1}, in, rng);
    w_.bias = Tensor4<Scalar>(1, li.out_channels, 1, 1);
    g_weights_ = Tensor4<Scalar>(w_.weights.shape());
    g_bias_ = Tensor4<Scalar>(1, li.out_channels, 1, 1);
  }

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x, Mode mode) override {
    input_ = x;
    Tensor4<Scalar> y = fully_connected(x, w_);
    if (!hidden_) return y;
    pre_activation_ = std::move(y);
    auto [out, mask] = dropout(relu(pre_activation_), rate_, mode, *dropout_rng_);
    mask_ = std::move(mask);
    return out;
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& upstream) override {
    Tensor4<Scalar> d = upstream;
    if (hidden_) d = relu_backward(pre_activation_, dropout_backward(mask_, upstream));
    auto g = fully_connected_backward(input_, w_, d);
    g_weights_ = std::move(g.weights);
    g_bias_ = std::move(*g.bias);
    return Tensor4<Scalar>(std::move(g.input));
  }

  void parameters(const std::string& p, std::vector<ParamRef<Scalar>>& out) override {
    out.push_back({p + "weights", &w_.weights, &g_weights_});
    out.push_back({p + "bias", &*w_.bias, &g_bias_});
  }

 private:
  bool hidden_;
  double rate_;
  std::mt19937_64* dropout_rng_;
  DenseWeights<Scalar> w_;
  Tensor4<Scalar> g_weights_;
  Tensor4<Scalar> g_bias_;
  Tensor4<Scalar> input_;
  Tensor4<Scalar> pre_activation_;
  Tensor4<Scalar> mask_;
};

// --- network -------------------------------------------------------------------

struct BuildOptions {
  std::uint64_t seed = 1;
  double dropout = 0.2;
  bool batchnorm = true;
  Index input_height = 0;  // 0: the spec's own input size
  Index input_width = 0;
};

/// Module for one traced layer; nullptr for softmax. `hidden_fc` selects the
/// ReLU + dropout variant of a fully connected layer.
template <typename Scalar>
std::unique_ptr<Module<Scalar>> make_module(const LayerInstance& li, bool batchnorm, bool hidden_fc, double dropout_rate,
                                            std::mt19937_64* dropout_rng, std::mt19937_64& rng) {
  switch (li.spec.scheme) {
    case Scheme::Standard:
    case Scheme::Project1x1:
      return std::make_unique<ConvModule<Scalar>>(li, batchnorm, rng);
    case Scheme::Unraveled:
    case Scheme::Sic:
      return std::make_unique<SicModule<Scalar>>(li, batchnorm, rng);
    case Scheme::Topo:
      return std::make_unique<SparseConvModule<Scalar>>(li, topo_connections(*li.spec.topology), batchnorm, rng);
    case Scheme::Grouped:
      return std::make_unique<SparseConvModule<Scalar>>(
          li, grouped_connections(li.in_channels, li.out_channels, li.spec.groups), batchnorm, rng);
    case Scheme::SpatialBottleneck:
      return std::make_unique<SpatialBottleneckModule<Scalar>>(li, batchnorm, rng);
    case Scheme::ChannelBottleneck:
      return std::make_unique<ChannelBottleneckModule<Scalar>>(li, batchnorm, rng);
    case Scheme::PoolMax:
    case Scheme::PoolAvg:
      return std::make_unique<PoolModule<Scalar>>(li.spec.scheme == Scheme::PoolMax, li.spec.k, li.spec.stride);
    case Scheme::FullyConnected:
      return std::make_unique<DenseModule<Scalar>>(li, hidden_fc, dropout_rate, dropout_rng, rng);
    case Scheme::Softmax:
      break;
  }
  return nullptr;
}

/// Geometry of `layer` applied to a (channels, height, width) input.
inline LayerInstance trace_single_layer(const LayerSpec& layer, Index channels, Index height, Index width) {
  ModelSpec m;
  m.name = "layer";
  m.input_channels = channels;
  LayerSpec head;
  head.scheme = Scheme::FullyConnected;
  head.n_out = 1;
  LayerSpec softmax;
  softmax.scheme = Scheme::Softmax;
  m.stages.push_back({"layer", 0, false, {layer, head, softmax}});
  return trace_layers(m, height, width).front();
}

template <typename Scalar>
class Network {
 public:
  Network(ModelSpec spec, const BuildOptions& options) : spec_(std::move(spec)), dropout_rng_(options.seed ^ 0xd5u) {
    const Index h = options.input_height > 0 ? options.input_height : spec_.input_height;
    const Index w = options.input_width > 0 ? options.input_width : spec_.input_width;
    layers_ = trace_layers(spec_, h, w);
    input_shape_ = {1, spec_.input_channels, h, w};
    std::mt19937_64 rng(options.seed);
    std::size_t last_fc = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].spec.scheme == Scheme::FullyConnected) last_fc = i;
    const bool bn = options.batchnorm;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const LayerInstance& li = layers_[i];
      auto m = make_module<Scalar>(li, bn, i != last_fc, options.dropout, &dropout_rng_, rng);
      if (!m) continue;
      names_.push_back(li.id);
      modules_.push_back(std::move(m));
    }
  }

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x, Mode mode) {
    if (x.channels() != input_shape_.channels || x.height() != input_shape_.height ||
        x.width() != input_shape_.width)
      throw ShapeError(spec_.name + ": network built for " + to_string(input_shape_) + " images, got " +
                       to_string(x.shape()));
    Tensor4<Scalar> h = x;
    for (auto& m : modules_) h = m->forward(h, mode);
    return h;
  }

  /// Backpropagates d loss / d logits; returns d loss / d input.
  Tensor4<Scalar> backward(const Tensor4<Scalar>& grad_logits) {
    Tensor4<Scalar> g = grad_logits;
    for (std::size_t i = modules_.size(); i-- > 0;) g = modules_[i]->backward(g);
    return g;
  }

  std::vector<ParamRef<Scalar>> parameters() {
    std::vector<ParamRef<Scalar>> out;
    for (std::size_t i = 0; i < modules_.size(); ++i) modules_[i]->parameters(names_[i] + "/", out);
    return out;
  }

  std::vector<BufferRef<Scalar>> buffers() {
    std::vector<BufferRef<Scalar>> out;
    for (std::size_t i = 0; i < modules_.size(); ++i) modules_[i]->buffers(names_[i] + "/", out);
    return out;
  }

  Index parameter_count() {
    Index total = 0;
    for (const auto& p : parameters()) total += p.value->size();
    return total;
  }

  void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

  const ModelSpec& spec() const { return spec_; }
  const std::vector<LayerInstance>& layers() const { return layers_; }
  const Shape4& input_shape() const { return input_shape_; }
  Index classes() const { return spec_.classes(); }

 private:
  ModelSpec spec_;
  std::vector<LayerInstance> layers_;
  Shape4 input_shape_;
  std::mt19937_64 dropout_rng_;
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<Module<Scalar>>> modules_;
};

template <typename Scalar>
std::unique_ptr<Network<Scalar>> build_model(const ModelSpec& spec, const BuildOptions& options) {
  return std::make_unique<Network<Scalar>>(spec, options);
}

}  // namespace sicnet
