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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace sicnet {

using Index = std::ptrdiff_t;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Raised when tensor shapes do not satisfy an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape4 {
  Index batch = 1;
  Index channels = 1;
  Index height = 1;
  Index width = 1;

  constexpr Index size() const { return batch * channels * height * width; }
  constexpr Index plane() const { return height * width; }
  constexpr Index image() const { return channels * height * width; }
  constexpr bool valid() const { return batch >= 1 && channels >= 1 && height >= 1 && width >= 1; }

  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;
};

inline std::string to_string(const Shape4& s) {
  return std::to_string(s.batch) + "x" + std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

inline std::ostream& operator<<(std::ostream& os, const Shape4& s) { return os << to_string(s); }

/// Dense rank-4 array in batch, channel, row, column order.
///
/// The flat storage is an Eigen column vector so whole-tensor arithmetic can be
/// written as Eigen expressions on `vec()`, while per-image and per-plane views
/// are exposed as row-major maps for GEMM-shaped kernels.
template <typename Scalar_>
class Tensor4 {
 public:
  using Scalar = Scalar_;

  Tensor4() : Tensor4(Shape4{}) {}

  explicit Tensor4(const Shape4& shape, Scalar fill = Scalar(0)) : shape_(shape) {
    if (!shape.valid()) throw ShapeError("Tensor4: every dimension must be >= 1, got " + to_string(shape));
    data_.setConstant(shape.size(), fill);
  }

  Tensor4(Index b, Index c, Index h, Index w, Scalar fill = Scalar(0)) : Tensor4(Shape4{b, c, h, w}, fill) {}

  static Tensor4 Zero(const Shape4& s) { return Tensor4(s); }
  static Tensor4 Constant(const Shape4& s, Scalar v) { return Tensor4(s, v); }

  /// Standard-normal entries scaled by `stddev`.
  template <typename Rng>
  static Tensor4 Gaussian(const Shape4& s, Rng& rng, Scalar stddev = Scalar(1)) {
    Tensor4 t(s);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = static_cast<Scalar>(dist(rng)) * stddev;
    return t;
  }

  template <typename Rng>
  static Tensor4 Uniform(const Shape4& s, Rng& rng, Scalar lo = Scalar(-1), Scalar hi = Scalar(1)) {
    Tensor4 t(s);
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = static_cast<Scalar>(dist(rng));
    return t;
  }

  const Shape4& shape() const { return shape_; }
  Index batch() const { return shape_.batch; }
  Index channels() const { return shape_.channels; }
  Index height() const { return shape_.height; }
  Index width() const { return shape_.width; }
  Index size() const { return shape_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Vector<Scalar>& vec() { return data_; }
  const Vector<Scalar>& vec() const { return data_; }

  Index offset(Index b, Index c, Index y, Index x) const {
    return ((b * shape_.channels + c) * shape_.height + y) * shape_.width + x;
  }

  Scalar& operator()(Index b, Index c, Index y, Index x) { return data_[checked_offset(b, c, y, x)]; }
  Scalar operator()(Index b, Index c, Index y, Index x) const { return data_[checked_offset(b, c, y, x)]; }

  Scalar* plane_ptr(Index b, Index c) { return data_.data() + offset(b, c, 0, 0); }
  const Scalar* plane_ptr(Index b, Index c) const { return data_.data() + offset(b, c, 0, 0); }

  /// One image as a (channels x height*width) matrix.
  Eigen::Map<RowMatrix<Scalar>> image_matrix(Index b) {
    return {data_.data() + b * shape_.image(), shape_.channels, shape_.plane()};
  }
  Eigen::Map<const RowMatrix<Scalar>> image_matrix(Index b) const {
    return {data_.data() + b * shape_.image(), shape_.channels, shape_.plane()};
  }

  /// Whole tensor as a (batch x channels*height*width) matrix.
  Eigen::Map<RowMatrix<Scalar>> batch_matrix() { return {data_.data(), shape_.batch, shape_.image()}; }
  Eigen::Map<const RowMatrix<Scalar>> batch_matrix() const { return {data_.data(), shape_.batch, shape_.image()}; }

  void set_zero() { data_.setZero(); }

  template <typename Other>
  Tensor4<Other> cast() const {
    Tensor4<Other> out(shape_);
    out.vec() = data_.template cast<Other>();
    return out;
  }

 private:
  Index checked_offset(Index b, Index c, Index y, Index x) const {
    if (b < 0 || b >= shape_.batch || c < 0 || c >= shape_.channels || y < 0 || y >= shape_.height || x < 0 ||
        x >= shape_.width) {
      throw std::out_of_range("Tensor4: index (" + std::to_string(b) + "," + std::to_string(c) + "," +
                              std::to_string(y) + "," + std::to_string(x) + ") outside " + to_string(shape_));
    }
    return offset(b, c, y, x);
  }

  Shape4 shape_;
  Vector<Scalar> data_;
};

inline void require_same_shape(const Shape4& a, const Shape4& b, const char* op) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

/// Per-side zero padding.
struct Padding {
  Index top = 0;
  Index bottom = 0;
  Index left = 0;
  Index right = 0;

  static constexpr Padding uniform(Index p) { return {p, p, p, p}; }
  friend constexpr bool operator==(const Padding&, const Padding&) = default;
};

template <typename Scalar>
Tensor4<Scalar> zero_pad(const Tensor4<Scalar>& t, Index pad_top, Index pad_bottom, Index pad_left,
                         Index pad_right) {
  if (pad_top < 0 || pad_bottom < 0 || pad_left < 0 || pad_right < 0) throw ShapeError("zero_pad: negative padding");
  const Shape4 s = t.shape();
  Tensor4<Scalar> out(s.batch, s.channels, s.height + pad_top + pad_bottom, s.width + pad_left + pad_right);
  for (Index b = 0; b < s.batch; ++b)
    for (Index c = 0; c < s.channels; ++c) {
      const Scalar* src = t.plane_ptr(b, c);
      Scalar* dst = out.plane_ptr(b, c);
      for (Index y = 0; y < s.height; ++y)
        std::copy_n(src + y * s.width, s.width, dst + (y + pad_top) * out.width() + pad_left);
    }
  return out;
}

template <typename Scalar>
Tensor4<Scalar> zero_pad(const Tensor4<Scalar>& t, const Padding& p) {
  return zero_pad(t, p.top, p.bottom, p.left, p.right);
}

template <typename Scalar>
Tensor4<Scalar> pad(const Tensor4<Scalar>& t, Index p) {
  return zero_pad(t, p, p, p, p);
}

/// Inverse of zero_pad: removes the given border.
template <typename Scalar>
Tensor4<Scalar> crop(const Tensor4<Scalar>& t, const Padding& p) {
  const Shape4 s = t.shape();
  const Index h = s.height - p.top - p.bottom;
  const Index w = s.width - p.left - p.right;
  if (h < 1 || w < 1) throw ShapeError("crop: border removes the whole plane");
  Tensor4<Scalar> out(s.batch, s.channels, h, w);
  for (Index b = 0; b < s.batch; ++b)
    for (Index c = 0; c < s.channels; ++c) {
      const Scalar* src = t.plane_ptr(b, c);
      Scalar* dst = out.plane_ptr(b, c);
      for (Index y = 0; y < h; ++y) std::copy_n(src + (y + p.top) * s.width + p.left, w, dst + y * w);
    }
  return out;
}

template <typename Scalar>
Tensor4<Scalar> relu(const Tensor4<Scalar>& t) {
  Tensor4<Scalar> out(t.shape());
  out.vec() = t.vec().cwiseMax(Scalar(0));
  return out;
}

/// Gradient of relu at `input` applied to `upstream`. The subgradient at 0 is 0.
template <typename Scalar>
Tensor4<Scalar> relu_backward(const Tensor4<Scalar>& input, const Tensor4<Scalar>& upstream) {
  require_same_shape(input.shape(), upstream.shape(), "relu_backward");
  Tensor4<Scalar> out(input.shape());
  out.vec() = (input.vec().array() > Scalar(0)).select(upstream.vec(), Scalar(0));
  return out;
}

template <typename Scalar>
Tensor4<Scalar> add(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor4<Scalar> out(a.shape());
  out.vec() = a.vec() + b.vec();
  return out;
}

template <typename Scalar>
Tensor4<Scalar> subtract(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "subtract");
  Tensor4<Scalar> out(a.shape());
  out.vec() = a.vec() - b.vec();
  return out;
}

template <typename Scalar>
Tensor4<Scalar> scale(const Tensor4<Scalar>& a, Scalar factor) {
  Tensor4<Scalar> out(a.shape());
  out.vec() = a.vec() * factor;
  return out;
}

template <typename Scalar>
Tensor4<Scalar> multiply(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "multiply");
  Tensor4<Scalar> out(a.shape());
  out.vec() = a.vec().cwiseProduct(b.vec());
  return out;
}

template <typename Scalar>
Tensor4<Scalar> channel_slice(const Tensor4<Scalar>& t, Index begin, Index count) {
  const Shape4 s = t.shape();
  if (begin < 0 || count < 1 || begin + count > s.channels)
    throw ShapeError("channel_slice: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + std::to_string(s.channels) + " channels");
  Tensor4<Scalar> out(s.batch, count, s.height, s.width);
  for (Index b = 0; b < s.batch; ++b) std::copy_n(t.plane_ptr(b, begin), count * s.plane(), out.plane_ptr(b, 0));
  return out;
}

template <typename Scalar>
Tensor4<Scalar> channel_concat(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
  const Shape4 sa = a.shape();
  const Shape4 sb = b.shape();
  if (sa.batch != sb.batch || sa.height != sb.height || sa.width != sb.width)
    throw ShapeError("channel_concat: incompatible " + to_string(sa) + " and " + to_string(sb));
  Tensor4<Scalar> out(sa.batch, sa.channels + sb.channels, sa.height, sa.width);
  for (Index i = 0; i < sa.batch; ++i) {
    std::copy_n(a.plane_ptr(i, 0), sa.image(), out.plane_ptr(i, 0));
    std::copy_n(b.plane_ptr(i, 0), sb.image(), out.plane_ptr(i, sa.channels));
  }
  return out;
}

template <typename Scalar>
Scalar dot(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  return a.vec().dot(b.vec());
}

template <typename Scalar>
Scalar max_abs_diff(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  return (a.vec() - b.vec()).cwiseAbs().maxCoeff();
}

template <typename Scalar>
bool all_finite(const Tensor4<Scalar>& t) {
  return t.vec().allFinite();
}

}  // namespace sicnet
