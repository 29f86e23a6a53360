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

// Flat binary tensor format:
//   bytes [0, 16)  four uint32 little-endian dims, order batch, channels, height, width
//   bytes [16, ..) IEEE-754 little-endian values in layout order
// Element width (4 or 8 bytes) is implied by the payload length.

#pragma once

#include "sicnet/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace sicnet {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { Single, Double };

inline constexpr std::size_t kTensorHeaderBytes = 16;

inline std::size_t element_bytes(Precision p) { return p == Precision::Single ? 4 : 8; }

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

template <typename Bits>
void put_bits(std::vector<unsigned char>& out, Bits bits) {
  for (std::size_t i = 0; i < sizeof(Bits); ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <typename Bits>
Bits get_bits(const unsigned char* p) {
  Bits v = 0;
  for (std::size_t i = 0; i < sizeof(Bits); ++i) v |= Bits(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

/// Serializes `t` with the requested element precision.
template <typename Scalar>
std::vector<unsigned char> encode_tensor(const Tensor4<Scalar>& t, Precision precision) {
  const Shape4 s = t.shape();
  const auto fits = [](Index d) { return d <= Index(std::numeric_limits<std::uint32_t>::max()); };
  if (!fits(s.batch) || !fits(s.channels) || !fits(s.height) || !fits(s.width))
    throw FormatError("encode_tensor: dimension exceeds uint32");
  std::vector<unsigned char> out;
  out.reserve(kTensorHeaderBytes + std::size_t(t.size()) * element_bytes(precision));
  detail::put_u32(out, std::uint32_t(s.batch));
  detail::put_u32(out, std::uint32_t(s.channels));
  detail::put_u32(out, std::uint32_t(s.height));
  detail::put_u32(out, std::uint32_t(s.width));
  for (Index i = 0; i < t.size(); ++i) {
    if (precision == Precision::Single)
      detail::put_bits(out, std::bit_cast<std::uint32_t>(static_cast<float>(t.data()[i])));
    else
      detail::put_bits(out, std::bit_cast<std::uint64_t>(static_cast<double>(t.data()[i])));
  }
  return out;
}

/// Parses a tensor blob; the element width is derived from the byte count.
template <typename Scalar>
Tensor4<Scalar> decode_tensor(const unsigned char* bytes, std::size_t length) {
  if (length < kTensorHeaderBytes) throw FormatError("decode_tensor: truncated header");
  const Shape4 s{Index(detail::get_u32(bytes)), Index(detail::get_u32(bytes + 4)), Index(detail::get_u32(bytes + 8)),
                 Index(detail::get_u32(bytes + 12))};
  if (!s.valid()) throw FormatError("decode_tensor: zero dimension in header");
  const std::size_t payload = length - kTensorHeaderBytes;
  const auto count = std::size_t(s.size());
  Tensor4<Scalar> t(s);
  const unsigned char* p = bytes + kTensorHeaderBytes;
  if (payload == count * 4) {
    for (std::size_t i = 0; i < count; ++i)
      t.data()[i] = static_cast<Scalar>(std::bit_cast<float>(detail::get_bits<std::uint32_t>(p + 4 * i)));
  } else if (payload == count * 8) {
    for (std::size_t i = 0; i < count; ++i)
      t.data()[i] = static_cast<Scalar>(std::bit_cast<double>(detail::get_bits<std::uint64_t>(p + 8 * i)));
  } else {
    throw FormatError("decode_tensor: payload of " + std::to_string(payload) + " bytes does not match shape " +
                      to_string(s));
  }
  return t;
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw FormatError("short write to " + path);
}

template <typename Scalar>
void write_tensor(const std::string& path, const Tensor4<Scalar>& t,
                  Precision precision = std::is_same_v<Scalar, float> ? Precision::Single : Precision::Double) {
  write_file_bytes(path, encode_tensor(t, precision));
}

template <typename Scalar>
Tensor4<Scalar> read_tensor(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return decode_tensor<Scalar>(bytes.data(), bytes.size());
}

}  // namespace sicnet
