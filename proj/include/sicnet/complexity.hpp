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

// Closed-form multiplication and parameter counts.
//
// Only scalar multiplications are counted, one per kernel-weight x input-value
// product, per image. Products against zero padding count: the counters
// describe the arithmetic a direct implementation performs.

#pragma once

#include "sicnet/model_spec.hpp"
#include "sicnet/topology.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sicnet {

using Count = std::uint64_t;

/// Exact non-negative rational in lowest terms.
class Rational {
 public:
  Rational() = default;
  Rational(Count num, Count den);

  Count num() const { return num_; }
  Count den() const { return den_; }
  double value() const { return double(num_) / double(den_); }
  std::string str() const { return std::to_string(num_) + "/" + std::to_string(den_); }

  friend bool operator==(const Rational&, const Rational&) = default;
  friend bool operator<(const Rational& a, const Rational& b);

 private:
  Count num_ = 0;
  Count den_ = 1;
};

/// Parses "1", "~2/9", "15/32"; nullopt for empty strings.
std::optional<Rational> parse_fraction(const std::string& text);

Count mults_standard(Index h, Index w, Index n_in, Index n_out, Index k);
Count mults_unraveled(Index h, Index w, Index n, Index k, Index b);

struct SicCount {
  Count intra = 0;
  Count projection = 0;
  Count total() const { return intra + projection; }
  Rational intra_fraction() const { return {intra, total()}; }
};
SicCount mults_sic(Index h, Index w, Index n, Index k);

Count mults_topo(Index h, Index w, const TopologyConfig& topo, Index k);

struct SpatialBottleneckCount {
  Count conv = 0;
  Count projection = 0;
  Count deconv = 0;
  Count total() const { return conv + projection + deconv; }
};
/// h and w must be divisible by k.
SpatialBottleneckCount mults_spatial_bottleneck(Index h, Index w, Index n, Index k);
/// General form over a padded grid (see spatial_bottleneck_padding).
SpatialBottleneckCount mults_spatial_bottleneck(Index h, Index w, Index n, Index k, const Padding& padding);

struct LayerCost {
  std::string id;
  std::string stage;
  Scheme scheme = Scheme::Standard;
  std::string label;  // e.g. "<3,128>"
  Count mults = 0;
  Count params = 0;
  std::vector<std::pair<std::string, Count>> parts;  // breakdown of mults
  bool compared = false;
  std::optional<Rational> ratio;  // vs the mean substituted baseline layer of the stage
};

/// Multiplications and learnable parameters (batch-norm affine terms and
/// fully connected biases included) of one traced layer.
LayerCost layer_cost(const LayerInstance& layer, const std::string& stage_name);

struct StageCost {
  std::string name;
  Count mults = 0;
  Count compared_mults = 0;
  Count baseline_mults = 0;  // substituted layers of the baseline in this stage
  std::optional<Rational> ratio;
  std::optional<Rational> intra_fraction;  // SIC / unraveled layers only
};

struct ComplexityReport {
  std::string model;
  std::string baseline;
  Index input_height = 0;
  Index input_width = 0;
  std::vector<LayerCost> layers;
  std::vector<StageCost> stages;
  Count total_mults = 0;
  Count total_params = 0;
  std::optional<Rational> overall_ratio;
  std::string paper_complexity;
};

/// Walks `spec` at the given input size. When `baseline` is given, each
/// compared stage gets the exact ratio of its substituted-layer
/// multiplications to the baseline's.
ComplexityReport model_report(const ModelSpec& spec, Index in_height, Index in_width,
                              const ModelSpec* baseline = nullptr);

std::string render_text(const ComplexityReport& report);
std::string render_json(const ComplexityReport& report, int indent = 2);

}  // namespace sicnet
