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

// Reference implementations used only by the tests. Everything here is
// written from the defining formulas with plain loops and shares no code
// with the library kernels beyond the Tensor4 container.

#pragma once

#include "sicnet/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

using sicnet::Index;
using T = sicnet::Tensor4<double>;

// Dense weights w(j, i, u, v); zero padding `pt`/`pl` before, output extent given.
inline T conv(const T& x, const T& w, Index pt, Index pl, Index stride, Index oh, Index ow) {
  const Index k = w.height();
  T out(x.batch(), w.batch(), oh, ow);
  for (Index b = 0; b < x.batch(); ++b)
    for (Index j = 0; j < w.batch(); ++j)
      for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx) {
          double acc = 0;
          for (Index i = 0; i < x.channels(); ++i)
            for (Index u = 0; u < k; ++u)
              for (Index v = 0; v < k; ++v) {
                const Index iy = y * stride + u - pt;
                const Index ix = xx * stride + v - pl;
                const double value =
                    (iy >= 0 && iy < x.height() && ix >= 0 && ix < x.width()) ? x(b, i, iy, ix) : 0.0;
                acc += w(j, i, u, v) * value;
              }
          out(b, j, y, xx) = acc;
        }
  return out;
}

inline T conv(const T& x, const T& w, Index pad, Index stride = 1) {
  const Index k = w.height();
  return conv(x, w, pad, pad, stride, (x.height() + 2 * pad - k) / stride + 1, (x.width() + 2 * pad - k) / stride + 1);
}

// Per-channel kernel (m, 1, k, k) expanded to a dense (m, n, k, k) kernel; filter o reads channel o / (m / n).
inline T block_diagonal(const T& intra, Index n) {
  const Index m = intra.batch();
  const Index k = intra.height();
  T w(m, n, k, k);
  for (Index o = 0; o < m; ++o)
    for (Index u = 0; u < k; ++u)
      for (Index v = 0; v < k; ++v) w(o, o / (m / n), u, v) = intra(o, 0, u, v);
  return w;
}

// P(j, l) stored as (n_in, n_out, 1, 1).
inline T project(const T& x, const T& p) {
  T out(x.batch(), p.channels(), x.height(), x.width());
  for (Index b = 0; b < x.batch(); ++b)
    for (Index l = 0; l < p.channels(); ++l)
      for (Index y = 0; y < x.height(); ++y)
        for (Index xx = 0; xx < x.width(); ++xx) {
          double acc = 0;
          for (Index j = 0; j < x.channels(); ++j) acc += x(b, j, y, xx) * p(j, l, 0, 0);
          out(b, l, y, xx) = acc;
        }
  return out;
}

// Transposed per-channel convolution from its scatter definition.
inline T deconv(const T& x, const T& w, Index stride, Index pt, Index pl, Index oh, Index ow) {
  const Index k = w.height();
  T out(x.batch(), x.channels(), oh, ow);
  for (Index b = 0; b < x.batch(); ++b)
    for (Index c = 0; c < x.channels(); ++c)
      for (Index y = 0; y < x.height(); ++y)
        for (Index xx = 0; xx < x.width(); ++xx)
          for (Index u = 0; u < k; ++u)
            for (Index v = 0; v < k; ++v) {
              const Index oy = stride * y + u - pt;
              const Index ox = stride * xx + v - pl;
              if (oy >= 0 && oy < oh && ox >= 0 && ox < ow) out(b, c, oy, ox) += x(b, c, y, xx) * w(c, 0, u, v);
            }
  return out;
}

inline T relu(const T& x) {
  T out = x;
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = out.data()[i] > 0 ? out.data()[i] : 0.0;
  return out;
}

inline T add(const T& a, const T& b) {
  T out = a;
  for (Index i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

// Train-mode batch normalization with biased batch variance.
inline T batchnorm(const T& x, const T& gamma, const T& beta, double eps) {
  T out(x.shape());
  const double count = double(x.batch() * x.height() * x.width());
  for (Index c = 0; c < x.channels(); ++c) {
    double mean = 0;
    for (Index b = 0; b < x.batch(); ++b)
      for (Index y = 0; y < x.height(); ++y)
        for (Index xx = 0; xx < x.width(); ++xx) mean += x(b, c, y, xx);
    mean /= count;
    double var = 0;
    for (Index b = 0; b < x.batch(); ++b)
      for (Index y = 0; y < x.height(); ++y)
        for (Index xx = 0; xx < x.width(); ++xx) var += (x(b, c, y, xx) - mean) * (x(b, c, y, xx) - mean);
    var /= count;
    for (Index b = 0; b < x.batch(); ++b)
      for (Index y = 0; y < x.height(); ++y)
        for (Index xx = 0; xx < x.width(); ++xx)
          out(b, c, y, xx) = gamma(0, c, 0, 0) * (x(b, c, y, xx) - mean) / std::sqrt(var + eps) + beta(0, c, 0, 0);
  }
  return out;
}

// mask[j][i] from the 1-based wrap-around neighbour formula, decoded with
// mixed-radix arithmetic independent of the library helpers.
inline std::vector<std::vector<bool>> topology_mask(const std::vector<Index>& dims, const std::vector<Index>& nbhd) {
  Index n = 1;
  Index c = 1;
  for (Index d : dims) n *= d;
  for (Index e : nbhd) c *= e;
  const std::size_t s = dims.size();
  std::vector<std::vector<bool>> mask(std::size_t(n), std::vector<bool>(std::size_t(n), false));
  for (Index j = 0; j < n; ++j) {
    std::vector<Index> jc(s);
    Index rest = j;
    for (std::size_t m = s; m-- > 0;) {
      jc[m] = rest % dims[m] + 1;
      rest /= dims[m];
    }
    for (Index t = 0; t < c; ++t) {
      std::vector<Index> ic(s);
      Index r = t;
      for (std::size_t m = s; m-- > 0;) {
        ic[m] = r % nbhd[m] + 1;
        r /= nbhd[m];
      }
      Index target = 0;
      for (std::size_t m = 0; m < s; ++m) target = target * dims[m] + ((jc[m] + ic[m] - 2) % dims[m]);
      mask[std::size_t(j)][std::size_t(target)] = true;
    }
  }
  return mask;
}

inline std::vector<std::vector<bool>> group_mask(Index n_in, Index n_out, Index groups) {
  std::vector<std::vector<bool>> mask(std::size_t(n_out), std::vector<bool>(std::size_t(n_in), false));
  for (Index j = 0; j < n_out; ++j)
    for (Index i = 0; i < n_in; ++i)
      mask[std::size_t(j)][std::size_t(i)] = (i / (n_in / groups)) == (j / (n_out / groups));
  return mask;
}

inline T apply_mask(const T& dense, const std::vector<std::vector<bool>>& mask) {
  T out = dense;
  for (Index j = 0; j < dense.batch(); ++j)
    for (Index i = 0; i < dense.channels(); ++i)
      if (!mask[std::size_t(j)][std::size_t(i)])
        for (Index u = 0; u < dense.height(); ++u)
          for (Index v = 0; v < dense.width(); ++v) out(j, i, u, v) = 0.0;
  return out;
}

// --- instrumented multiplication counts ------------------------------------
//
// Each counter walks the loop nest of a direct implementation and counts
// one product per kernel weight times input value, padded zeros included.

using Count = std::uint64_t;

inline Count count_conv(Index h, Index w, Index n_in, Index n_out, Index k, Index pt, Index pb, Index pl, Index pr,
                        Index stride) {
  Count c = 0;
  const Index oh = (h + pt + pb - k) / stride + 1;
  const Index ow = (w + pl + pr - k) / stride + 1;
  for (Index j = 0; j < n_out; ++j)
    for (Index y = 0; y < oh; ++y)
      for (Index x = 0; x < ow; ++x)
        for (Index i = 0; i < n_in; ++i)
          for (Index u = 0; u < k; ++u)
            for (Index v = 0; v < k; ++v) ++c;
  return c;
}

inline Count count_intra(Index h, Index w, Index filters, Index k, Index pt, Index pb, Index pl, Index pr,
                         Index stride) {
  return count_conv(h, w, 1, filters, k, pt, pb, pl, pr, stride);
}

inline Count count_projection(Index h, Index w, Index n_in, Index n_out) {
  Count c = 0;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index l = 0; l < n_out; ++l)
        for (Index j = 0; j < n_in; ++j) ++c;
  return c;
}

inline Count count_deconv(Index in_h, Index in_w, Index n, Index k) {
  Count c = 0;
  for (Index ch = 0; ch < n; ++ch)
    for (Index y = 0; y < in_h; ++y)
      for (Index x = 0; x < in_w; ++x)
        for (Index u = 0; u < k; ++u)
          for (Index v = 0; v < k; ++v) ++c;
  return c;
}

inline Count count_topo(Index h, Index w, const std::vector<Index>& dims, const std::vector<Index>& nbhd, Index k) {
  const auto mask = topology_mask(dims, nbhd);
  Count c = 0;
  const Index p = (k - 1) / 2;
  for (std::size_t j = 0; j < mask.size(); ++j)
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[j][i]) c += count_conv(h, w, 1, 1, k, p, p, p, p, 1);
  return c;
}

}  // namespace oracle
