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

// Parameter checkpoint container.
//
//   bytes 0..7    magic "SICCKPT1"
//   bytes 8..15   manifest length L, u64 little endian
//   next L bytes  UTF-8 JSON manifest
//   remainder     tensor blobs, each in the tensor-core binary format
//
// Manifest entry offsets are relative to the first blob byte. See
// README.md for the full field list.

#pragma once

#include "sicnet/network.hpp"
#include "sicnet/tensor_io.hpp"

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace sicnet {

inline constexpr char kCheckpointMagic[8] = {'S', 'I', 'C', 'C', 'K', 'P', 'T', '1'};

struct CheckpointEntry {
  std::string path;
  std::string kind;  // "param", "buffer" or "momentum"
  Shape4 shape;
  std::uint64_t offset = 0;
  std::uint64_t bytes = 0;
};

struct CheckpointContents {
  nlohmann::json manifest;
  std::vector<CheckpointEntry> entries;
  std::vector<unsigned char> blobs;

  /// Decodes one entry, nullptr-free: throws FormatError when absent.
  template <typename Scalar>
  Tensor4<Scalar> tensor(const std::string& path) const {
    for (const auto& e : entries)
      if (e.path == path) {
        if (e.offset + e.bytes > blobs.size()) throw FormatError("checkpoint: entry '" + path + "' out of bounds");
        return decode_tensor<Scalar>(blobs.data() + e.offset, e.bytes);
      }
    throw FormatError("checkpoint: missing entry '" + path + "'");
  }

  bool contains(const std::string& path) const {
    for (const auto& e : entries)
      if (e.path == path) return true;
    return false;
  }
};

/// Writes `bytes` to `path` through a temporary sibling and a rename, so a
/// reader never observes a partially written file.
inline void write_file_atomic(const std::string& path, const std::vector<unsigned char>& bytes) {
  const std::string tmp = path + ".tmp";
  write_file_bytes(tmp, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot move checkpoint into place at " + path);
  }
}

template <typename Scalar>
std::vector<unsigned char> encode_checkpoint(Network<Scalar>& net, const std::map<std::string, Tensor4<Scalar>>& momentum,
                                             const nlohmann::json& extra = nlohmann::json::object()) {
  const Precision precision = sizeof(Scalar) == 4 ? Precision::Single : Precision::Double;
  nlohmann::json manifest;
  manifest["format"] = "sicnet-checkpoint";
  manifest["version"] = 1;
  manifest["model"] = net.spec().name;
  manifest["spec"] = nlohmann::json::parse(spec_to_json(net.spec(), -1));
  manifest["dtype"] = precision == Precision::Single ? "f32" : "f64";
  manifest["input"] = {net.input_shape().height, net.input_shape().width};
  manifest["extra"] = extra;
  manifest["entries"] = nlohmann::json::array();
  std::vector<unsigned char> blobs;
  const auto put = [&](const std::string& path, const std::string& kind, const Tensor4<Scalar>& t) {
    auto enc = encode_tensor(t, precision);
    const Shape4 s = t.shape();
    manifest["entries"].push_back({{"path", path},
                                   {"kind", kind},
                                   {"shape", {s.batch, s.channels, s.height, s.width}},
                                   {"offset", blobs.size()},
                                   {"bytes", enc.size()}});
    blobs.insert(blobs.end(), enc.begin(), enc.end());
  };
  for (const auto& p : net.parameters()) put(p.name, "param", *p.value);
  for (const auto& b : net.buffers()) put(b.name, "buffer", *b.value);
  for (const auto& [path, v] : momentum) put(path, "momentum", v);

  const std::string text = manifest.dump();
  std::vector<unsigned char> out(kCheckpointMagic, kCheckpointMagic + 8);
  detail::put_bits<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blobs.begin(), blobs.end());
  return out;
}

inline CheckpointContents decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw FormatError("checkpoint: bad magic");
  const auto length = detail::get_bits<std::uint64_t>(bytes.data() + 8);
  if (length > bytes.size() - 16) throw FormatError("checkpoint: manifest length exceeds file size");
  CheckpointContents c;
  try {
    c.manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + std::ptrdiff_t(length));
    for (const auto& e : c.manifest.at("entries")) {
      const auto& sh = e.at("shape");
      c.entries.push_back({e.at("path").get<std::string>(), e.at("kind").get<std::string>(),
                           Shape4{sh.at(0).get<Index>(), sh.at(1).get<Index>(), sh.at(2).get<Index>(),
                                  sh.at(3).get<Index>()},
                           e.at("offset").get<std::uint64_t>(), e.at("bytes").get<std::uint64_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed manifest: ") + e.what());
  }
  c.blobs.assign(bytes.begin() + 16 + std::ptrdiff_t(length), bytes.end());
  return c;
}

template <typename Scalar>
void save_checkpoint(const std::string& path, Network<Scalar>& net,
                     const std::map<std::string, Tensor4<Scalar>>& momentum = {},
                     const nlohmann::json& extra = nlohmann::json::object()) {
  write_file_atomic(path, encode_checkpoint(net, momentum, extra));
}

inline CheckpointContents read_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

/// Copies parameters and running statistics into `net`; every one must be
/// present with a matching shape. Momentum entries, if any, go to `momentum`.
template <typename Scalar>
void load_checkpoint(const CheckpointContents& c, Network<Scalar>& net,
                     std::map<std::string, Tensor4<Scalar>>* momentum = nullptr) {
  const auto fill = [&](const std::string& path, Tensor4<Scalar>& dst) {
    Tensor4<Scalar> t = c.tensor<Scalar>(path);
    if (t.shape() != dst.shape())
      throw FormatError("checkpoint: '" + path + "' has shape " + to_string(t.shape()) + ", model expects " +
                        to_string(dst.shape()));
    dst = std::move(t);
  };
  for (auto& p : net.parameters()) fill(p.name, *p.value);
  for (auto& b : net.buffers()) fill(b.name, *b.value);
  if (momentum)
    for (const auto& e : c.entries)
      if (e.kind == "momentum") (*momentum)[e.path] = c.tensor<Scalar>(e.path);
}

/// Rebuilds the network recorded in a checkpoint and loads its weights.
template <typename Scalar>
std::unique_ptr<Network<Scalar>> network_from_checkpoint(const CheckpointContents& c) {
  ModelSpec spec = spec_from_json(c.manifest.at("spec").dump());
  BuildOptions o;
  o.input_height = c.manifest.at("input").at(0).get<Index>();
  o.input_width = c.manifest.at("input").at(1).get<Index>();
  auto net = build_model<Scalar>(spec, o);
  load_checkpoint(c, *net);
  return net;
}

}  // namespace sicnet
