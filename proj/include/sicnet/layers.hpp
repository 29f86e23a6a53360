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

// Batch normalization, pooling, fully connected, dropout and softmax loss.

#pragma once

#include "sicnet/conv.hpp"
#include "sicnet/tensor.hpp"

#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace sicnet {

enum class Mode { Train, Eval };

// --- batch normalization -----------------------------------------------------

/// Per-channel affine normalization; all four vectors are stored as (1, n, 1, 1).
template <typename Scalar>
struct BatchNormState {
  Tensor4<Scalar> scale;
  Tensor4<Scalar> shift;
  Tensor4<Scalar> running_mean;
  Tensor4<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  Scalar epsilon = Scalar(1e-5);

  static BatchNormState identity(Index channels) {
    return {Tensor4<Scalar>(1, channels, 1, 1, Scalar(1)), Tensor4<Scalar>(1, channels, 1, 1),
            Tensor4<Scalar>(1, channels, 1, 1), Tensor4<Scalar>(1, channels, 1, 1, Scalar(1))};
  }

  Index channels() const { return scale.channels(); }
};

template <typename Scalar>
struct BatchNormCache {
  Tensor4<Scalar> normalized;  // x_hat
  Vector<Scalar> inv_std;
  Vector<Scalar> batch_mean;
  Vector<Scalar> batch_var;  // biased
  Mode mode = Mode::Train;
};

template <typename Scalar>
struct BatchNormResult {
  Tensor4<Scalar> output;
  BatchNormCache<Scalar> cache;
};

/// Train mode normalizes with batch statistics over (batch, height, width);
/// eval mode uses the running estimates. Running statistics are not touched
/// here, see `batchnorm_update_running`.
template <typename Scalar>
BatchNormResult<Scalar> batchnorm_forward(const Tensor4<Scalar>& x, const BatchNormState<Scalar>& state, Mode mode) {
  const Shape4 s = x.shape();
  if (state.channels() != s.channels) throw ShapeError("batchnorm_forward: channel mismatch");
  const Index count = s.batch * s.plane();
  BatchNormResult<Scalar> r{Tensor4<Scalar>(s), {Tensor4<Scalar>(s), Vector<Scalar>(s.channels),
                                                 Vector<Scalar>(s.channels), Vector<Scalar>(s.channels), mode}};
  for (Index c = 0; c < s.channels; ++c) {
    Scalar mean(0);
    Scalar var(0);
    if (mode == Mode::Train) {
      for (Index b = 0; b < s.batch; ++b) {
        const Scalar* p = x.plane_ptr(b, c);
        for (Index i = 0; i < s.plane(); ++i) mean += p[i];
      }
      mean /= Scalar(count);
      for (Index b = 0; b < s.batch; ++b) {
        const Scalar* p = x.plane_ptr(b, c);
        for (Index i = 0; i < s.plane(); ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      var /= Scalar(count);
    } else {
      mean = state.running_mean.data()[c];
      var = state.running_var.data()[c];
    }
    const Scalar inv_std = Scalar(1) / std::sqrt(var + state.epsilon);
    const Scalar gamma = state.scale.data()[c];
    const Scalar beta = state.shift.data()[c];
    r.cache.inv_std[c] = inv_std;
    r.cache.batch_mean[c] = mean;
    r.cache.batch_var[c] = var;
    for (Index b = 0; b < s.batch; ++b) {
      const Scalar* p = x.plane_ptr(b, c);
      Scalar* xh = r.cache.normalized.plane_ptr(b, c);
      Scalar* y = r.output.plane_ptr(b, c);
      for (Index i = 0; i < s.plane(); ++i) {
        xh[i] = (p[i] - mean) * inv_std;
        y[i] = gamma * xh[i] + beta;
      }
    }
  }
  return r;
}

/// Exponential moving average; the variance estimate is unbiased.
template <typename Scalar>
void batchnorm_update_running(BatchNormState<Scalar>& state, const BatchNormCache<Scalar>& cache, Index count) {
  const Scalar m = state.momentum;
  const Scalar correction = count > 1 ? Scalar(count) / Scalar(count - 1) : Scalar(1);
  for (Index c = 0; c < state.channels(); ++c) {
    state.running_mean.data()[c] = (Scalar(1) - m) * state.running_mean.data()[c] + m * cache.batch_mean[c];
    state.running_var.data()[c] =
        (Scalar(1) - m) * state.running_var.data()[c] + m * cache.batch_var[c] * correction;
  }
}

template <typename Scalar>
struct BatchNormGrads {
  Tensor4<Scalar> input;
  Tensor4<Scalar> scale;
  Tensor4<Scalar> shift;
};

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const BatchNormCache<Scalar>& cache, const BatchNormState<Scalar>& state,
                                          const Tensor4<Scalar>& upstream) {
  const Shape4 s = upstream.shape();
  require_same_shape(s, cache.normalized.shape(), "batchnorm_backward");
  const Index count = s.batch * s.plane();
  BatchNormGrads<Scalar> g{Tensor4<Scalar>(s), Tensor4<Scalar>(1, s.channels, 1, 1),
                           Tensor4<Scalar>(1, s.channels, 1, 1)};
  for (Index c = 0; c < s.channels; ++c) {
    Scalar sum_g(0);
    Scalar sum_gx(0);
    for (Index b = 0; b < s.batch; ++b) {
      const Scalar* up = upstream.plane_ptr(b, c);
      const Scalar* xh = cache.normalized.plane_ptr(b, c);
      for (Index i = 0; i < s.plane(); ++i) {
        sum_g += up[i];
        sum_gx += up[i] * xh[i];
      }
    }
    g.shift.data()[c] = sum_g;
    g.scale.data()[c] = sum_gx;
    const Scalar gamma = state.scale.data()[c];
    const Scalar inv_std = cache.inv_std[c];
    for (Index b = 0; b < s.batch; ++b) {
      const Scalar* up = upstream.plane_ptr(b, c);
      const Scalar* xh = cache.normalized.plane_ptr(b, c);
      Scalar* gx = g.input.plane_ptr(b, c);
      if (cache.mode == Mode::Train) {
        for (Index i = 0; i < s.plane(); ++i)
          gx[i] = gamma * inv_std * (up[i] - sum_g / Scalar(count) - xh[i] * sum_gx / Scalar(count));
      } else {
        for (Index i = 0; i < s.plane(); ++i) gx[i] = gamma * inv_std * up[i];
      }
    }
  }
  return g;
}

// --- pooling -------------------------------------------------------------------

template <typename Scalar>
struct MaxPoolResult {
  Tensor4<Scalar> output;
  std::vector<Index> argmax;  // flat input offset per output element
};

template <typename Scalar>
MaxPoolResult<Scalar> max_pool(const Tensor4<Scalar>& input, Index window, Index stride) {
  const Shape4 s = input.shape();
  const Index oh = window_output_extent(s.height, 0, 0, window, stride, "max_pool");
  const Index ow = window_output_extent(s.width, 0, 0, window, stride, "max_pool");
  MaxPoolResult<Scalar> r{Tensor4<Scalar>(s.batch, s.channels, oh, ow), {}};
  r.argmax.resize(std::size_t(r.output.size()));
  Index o = 0;
  for (Index b = 0; b < s.batch; ++b)
    for (Index c = 0; c < s.channels; ++c)
      for (Index y = 0; y < oh; ++y)
        for (Index x = 0; x < ow; ++x, ++o) {
          Scalar best = -std::numeric_limits<Scalar>::infinity();
          Index best_at = -1;
          for (Index u = 0; u < window; ++u)
            for (Index v = 0; v < window; ++v) {
              const Index at = input.offset(b, c, y * stride + u, x * stride + v);
              if (input.data()[at] > best || best_at < 0) {
                best = input.data()[at];
                best_at = at;
              }
            }
          r.output.data()[o] = best;
          r.argmax[std::size_t(o)] = best_at;
        }
  return r;
}

template <typename Scalar>
Tensor4<Scalar> max_pool_backward(const Shape4& input_shape, const std::vector<Index>& argmax,
                                  const Tensor4<Scalar>& upstream) {
  if (Index(argmax.size()) != upstream.size()) throw ShapeError("max_pool_backward: argmax size mismatch");
  Tensor4<Scalar> g(input_shape);
  for (Index o = 0; o < upstream.size(); ++o) g.data()[argmax[std::size_t(o)]] += upstream.data()[o];
  return g;
}

template <typename Scalar>
Tensor4<Scalar> avg_pool(const Tensor4<Scalar>& input, Index window, Index stride) {
  const Shape4 s = input.shape();
  const Index oh = window_output_extent(s.height, 0, 0, window, stride, "avg_pool");
  const Index ow = window_output_extent(s.width, 0, 0, window, stride, "avg_pool");
  Tensor4<Scalar> out(s.batch, s.channels, oh, ow);
  const Scalar inv = Scalar(1) / Scalar(window * window);
  for (Index b = 0; b < s.batch; ++b)
    for (Index c = 0; c < s.channels; ++c)
      for (Index y = 0; y < oh; ++y)
        for (Index x = 0; x < ow; ++x) {
          Scalar acc(0);
          for (Index u = 0; u < window; ++u)
            for (Index v = 0; v < window; ++v)
              acc += input.data()[input.offset(b, c, y * stride + u, x * stride + v)];
          out.data()[out.offset(b, c, y, x)] = acc * inv;
        }
  return out;
}

template <typename Scalar>
Tensor4<Scalar> avg_pool_backward(const Shape4& input_shape, Index window, Index stride,
                                  const Tensor4<Scalar>& upstream) {
  Tensor4<Scalar> g(input_shape);
  const Scalar inv = Scalar(1) / Scalar(window * window);
  for (Index b = 0; b < upstream.batch(); ++b)
    for (Index c = 0; c < upstream.channels(); ++c)
      for (Index y = 0; y < upstream.height(); ++y)
        for (Index x = 0; x < upstream.width(); ++x) {
          const Scalar share = upstream.data()[upstream.offset(b, c, y, x)] * inv;
          for (Index u = 0; u < window; ++u)
            for (Index v = 0; v < window; ++v) g.data()[g.offset(b, c, y * stride + u, x * stride + v)] += share;
        }
  return g;
}

// --- fully connected -----------------------------------------------------------

/// Weights (out, in) stored as (out, in, 1, 1); optional bias (1, out, 1, 1).
template <typename Scalar>
struct DenseWeights {
  Tensor4<Scalar> weights;
  std::optional<Tensor4<Scalar>> bias;

  Index outputs() const { return weights.batch(); }
  Index inputs() const { return weights.channels(); }
  Eigen::Map<const RowMatrix<Scalar>> matrix() const { return {weights.data(), outputs(), inputs()}; }
};

/// Flattens each image to a vector and applies y = W x + b; output (batch, out, 1, 1).
template <typename Scalar>
Tensor4<Scalar> fully_connected(const Tensor4<Scalar>& input, const DenseWeights<Scalar>& w) {
  const Shape4 s = input.shape();
  if (s.image() != w.inputs())
    throw ShapeError("fully_connected: expects " + std::to_string(w.inputs()) + " features, got " +
                     std::to_string(s.image()));
  Tensor4<Scalar> out(s.batch, w.outputs(), 1, 1);
  out.batch_matrix().noalias() = input.batch_matrix() * w.matrix().transpose();
  if (w.bias) out.batch_matrix().rowwise() += w.bias->vec().transpose();
  return out;
}

template <typename Scalar>
struct DenseGrads {
  Tensor4<Scalar> input;
  Tensor4<Scalar> weights;
  std::optional<Tensor4<Scalar>> bias;
};

template <typename Scalar>
DenseGrads<Scalar> fully_connected_backward(const Tensor4<Scalar>& input, const DenseWeights<Scalar>& w,
                                            const Tensor4<Scalar>& upstream) {
  const Shape4 s = input.shape();
  require_same_shape(upstream.shape(), Shape4{s.batch, w.outputs(), 1, 1}, "fully_connected_backward");
  DenseGrads<Scalar> g{Tensor4<Scalar>(s), Tensor4<Scalar>(w.weights.shape()), std::nullopt};
  g.input.batch_matrix().noalias() = upstream.batch_matrix() * w.matrix();
  Eigen::Map<RowMatrix<Scalar>> gw(g.weights.data(), w.outputs(), w.inputs());
  gw.noalias() = upstream.batch_matrix().transpose() * input.batch_matrix();
  if (w.bias) {
    g.bias = Tensor4<Scalar>(1, w.outputs(), 1, 1);
    g.bias->vec() = upstream.batch_matrix().colwise().sum().transpose();
  }
  return g;
}

// --- dropout -------------------------------------------------------------------

/// Inverted dropout: kept units are scaled by 1 / (1 - rate). Eval mode and
/// rate 0 are the identity. The mask is returned so backward can reuse it.
template <typename Scalar, typename Rng>
std::pair<Tensor4<Scalar>, Tensor4<Scalar>> dropout(const Tensor4<Scalar>& input, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  Tensor4<Scalar> mask(input.shape(), Scalar(1));
  if (mode == Mode::Train && rate > 0.0) {
    std::bernoulli_distribution keep(1.0 - rate);
    const Scalar kept = Scalar(1.0 / (1.0 - rate));
    for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? kept : Scalar(0);
  }
  return {multiply(input, mask), mask};
}

template <typename Scalar>
Tensor4<Scalar> dropout_backward(const Tensor4<Scalar>& mask, const Tensor4<Scalar>& upstream) {
  return multiply(mask, upstream);
}

// --- softmax cross entropy -----------------------------------------------------

template <typename Scalar>
struct SoftmaxLoss {
  Scalar loss = 0;             // mean over the batch
  Tensor4<Scalar> probabilities;
  Tensor4<Scalar> gradient;    // d loss / d logits
};

template <typename Scalar>
SoftmaxLoss<Scalar> softmax_cross_entropy(const Tensor4<Scalar>& logits, const std::vector<int>& labels) {
  const Shape4 s = logits.shape();
  const Index classes = s.image();
  if (Index(labels.size()) != s.batch) throw ShapeError("softmax_cross_entropy: label count mismatch");
  SoftmaxLoss<Scalar> r{Scalar(0), Tensor4<Scalar>(s), Tensor4<Scalar>(s)};
  auto z = logits.batch_matrix();
  auto p = r.probabilities.batch_matrix();
  for (Index b = 0; b < s.batch; ++b) {
    const int label = labels[std::size_t(b)];
    if (label < 0 || label >= classes) throw std::out_of_range("softmax_cross_entropy: label out of range");
    const Scalar top = z.row(b).maxCoeff();
    p.row(b) = (z.row(b).array() - top).exp().matrix();
    const Scalar total = p.row(b).sum();
    p.row(b) /= total;
    r.loss += -(z(b, label) - top - std::log(total));
  }
  r.loss /= Scalar(s.batch);
  auto g = r.gradient.batch_matrix();
  g = p;
  for (Index b = 0; b < s.batch; ++b) g(b, labels[std::size_t(b)]) -= Scalar(1);
  g /= Scalar(s.batch);
  return r;
}

}  // namespace sicnet
