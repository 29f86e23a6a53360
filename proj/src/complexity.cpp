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

#include "sicnet/complexity.hpp"

#include <json.hpp>

#include <iomanip>
#include <numeric>
#include <sstream>

namespace sicnet {

Rational::Rational(Count num, Count den) : num_(num), den_(den) {
  if (den == 0) throw std::domain_error("Rational: zero denominator");
  const Count g = std::gcd(num, den);
  if (g > 1) {
    num_ /= g;
    den_ /= g;
  }
}

bool operator<(const Rational& a, const Rational& b) {
  return static_cast<unsigned __int128>(a.num_) * b.den_ < static_cast<unsigned __int128>(b.num_) * a.den_;
}

std::optional<Rational> parse_fraction(const std::string& text) {
  std::string t;
  for (char ch : text)
    if (ch != '~' && ch != ' ') t.push_back(ch);
  if (t.empty()) return std::nullopt;
  const auto slash = t.find('/');
  try {
    if (slash == std::string::npos) return Rational(std::stoull(t), 1);
    return Rational(std::stoull(t.substr(0, slash)), std::stoull(t.substr(slash + 1)));
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse fraction '" + text + "'");
  }
}

namespace {

Count u(Index v) {
  if (v < 0) throw ConfigError("complexity: negative dimension");
  return Count(v);
}

}  // namespace

Count mults_standard(Index h, Index w, Index n_in, Index n_out, Index k) {
  return u(n_in) * u(n_out) * u(k) * u(k) * u(h) * u(w);
}

Count mults_unraveled(Index h, Index w, Index n, Index k, Index b) {
  return u(b) * (u(n) * u(k) * u(k) + u(n) * u(n)) * u(h) * u(w);
}

SicCount mults_sic(Index h, Index w, Index n, Index k) {
  return {u(n) * u(k) * u(k) * u(h) * u(w), u(n) * u(n) * u(h) * u(w)};
}

Count mults_topo(Index h, Index w, const TopologyConfig& topo, Index k) {
  topo.validate();
  return u(topo.channels()) * u(topo.neighbors()) * u(k) * u(k) * u(h) * u(w);
}

SpatialBottleneckCount mults_spatial_bottleneck(Index h, Index w, Index n, Index k) {
  if (k < 1 || h % k != 0 || w % k != 0) throw ConfigError("mults_spatial_bottleneck: extent not divisible by k");
  return mults_spatial_bottleneck(h, w, n, k, Padding{});
}

SpatialBottleneckCount mults_spatial_bottleneck(Index h, Index w, Index n, Index k, const Padding& p) {
  const Index ph = h + p.top + p.bottom;
  const Index pw = w + p.left + p.right;
  if (k < 1 || ph % k != 0 || pw % k != 0) throw ConfigError("mults_spatial_bottleneck: padded extent not divisible");
  const Count blocks = u(ph / k) * u(pw / k);
  const Count spatial = u(n) * u(k) * u(k) * blocks;
  return {spatial, u(n) * u(n) * blocks, spatial};
}

LayerCost layer_cost(const LayerInstance& li, const std::string& stage_name) {
  const LayerSpec& l = li.spec;
  LayerCost c;
  c.id = li.id;
  c.stage = stage_name;
  c.scheme = l.scheme;
  const Index n = li.in_channels;
  const Index h = li.out_height;
  const Index w = li.out_width;
  const Count hw = u(h) * u(w);
  const Count k2 = u(l.k) * u(l.k);
  const Count bn = 2 * u(li.out_channels);
  std::ostringstream label;
  switch (l.scheme) {
    case Scheme::Standard:
      label << "(" << l.k << "," << l.n_out << ")" << (l.stride > 1 ? "_" + std::to_string(l.stride) : "");
      c.mults = mults_standard(h, w, n, l.n_out, l.k);
      c.params = u(n) * u(l.n_out) * k2 + bn;
      break;
    case Scheme::Project1x1:
      label << "(1," << l.n_out << ")";
      c.mults = mults_standard(h, w, n, l.n_out, 1);
      c.params = u(n) * u(l.n_out) + bn;
      break;
    case Scheme::Unraveled: {
      label << "[" << l.k << "," << l.b << "," << l.n_out << "]";
      const Count intra = u(l.b) * u(n) * k2 * hw;
      const Count proj = u(l.b) * u(n) * u(n) * hw;
      c.mults = intra + proj;
      c.parts = {{"intra", intra}, {"projection", proj}};
      c.params = u(l.b) * u(n) * k2 + u(l.b) * u(n) * u(n) + bn;
      break;
    }
    case Scheme::Sic: {
      label << "<" << l.k << "," << l.n_out << ">";
      if (l.topology) label << "{" << l.topology->neighbors() << "/" << l.topology->channels() << "}";
      const Count fan = l.topology ? u(l.topology->neighbors()) : u(n);
      const Count intra = u(l.b) * u(n) * k2 * hw;
      const Count proj = u(l.b) * u(n) * fan * hw;
      c.mults = intra + proj;
      c.parts = {{"intra", intra}, {"projection", proj}};
      c.params = u(l.b) * (u(n) * k2 + u(n) * fan + bn);
      break;
    }
    case Scheme::Topo:
      label << "topo(" << l.k << "," << l.n_out << "){" << l.topology->neighbors() << "/" << l.topology->channels()
            << "}";
      c.mults = mults_topo(h, w, *l.topology, l.k);
      c.params = u(n) * u(l.topology->neighbors()) * k2 + bn;
      break;
    case Scheme::Grouped:
      label << "group(" << l.k << "," << l.n_out << ")/" << l.groups;
      c.mults = u(n) * (u(n) / u(l.groups)) * k2 * hw;
      c.params = u(n) * (u(n) / u(l.groups)) * k2 + bn;
      break;
    case Scheme::SpatialBottleneck: {
      label << "sb(" << l.k << "," << l.n_out << ")p" << l.pad;
      const auto sb = mults_spatial_bottleneck(li.in_height, li.in_width, n, l.k, li.padding);
      c.mults = sb.total();
      c.parts = {{"conv", sb.conv}, {"projection", sb.projection}, {"deconv", sb.deconv}};
      c.params = 2 * u(n) * k2 + u(n) * u(n) + bn;
      break;
    }
    case Scheme::ChannelBottleneck: {
      label << "cb<" << l.k << "," << l.n_out << ">";
      const Count half = u(n) / 2;
      const Count intra = (u(n) + half) * k2 * hw;
      const Count proj = 2 * u(n) * half * hw;
      c.mults = intra + proj;
      c.parts = {{"intra", intra}, {"projection", proj}};
      c.params = (u(n) + half) * k2 + 2 * u(n) * half + 2 * half + bn;
      break;
    }
    case Scheme::PoolMax:
      label << l.k << "x" << l.k << " max pool /" << l.stride;
      break;
    case Scheme::PoolAvg:
      label << l.k << "x" << l.k << " avg pool /" << l.stride;
      break;
    case Scheme::FullyConnected: {
      const Count in = u(li.in_channels) * u(li.in_height) * u(li.in_width);
      label << "fc " << l.n_out;
      c.mults = in * u(l.n_out);
      c.params = in * u(l.n_out) + u(l.n_out);
      break;
    }
    case Scheme::Softmax:
      label << "softmax";
      break;
  }
  c.label = label.str();
  return c;
}

ComplexityReport model_report(const ModelSpec& spec, Index in_height, Index in_width, const ModelSpec* baseline) {
  ComplexityReport r;
  r.model = spec.name;
  r.input_height = in_height;
  r.input_width = in_width;
  r.paper_complexity = spec.paper_complexity;
  for (const auto& s : spec.stages) {
    StageCost cost;
    cost.name = s.name;
    r.stages.push_back(std::move(cost));
  }

  for (const auto& li : trace_layers(spec, in_height, in_width)) {
    const StageSpec& stage = spec.stages[li.stage];
    LayerCost c = layer_cost(li, stage.name);
    c.compared = stage.compare && is_substitutable(c.scheme);
    StageCost& sc = r.stages[li.stage];
    sc.mults += c.mults;
    if (c.compared) sc.compared_mults += c.mults;
    r.total_mults += c.mults;
    r.total_params += c.params;
    r.layers.push_back(std::move(c));
  }

  for (std::size_t si = 0; si < r.stages.size(); ++si) {
    Count intra = 0;
    Count split = 0;
    for (const auto& c : r.layers) {
      if (c.stage != r.stages[si].name || c.parts.empty() || c.parts.front().first != "intra") continue;
      intra += c.parts.front().second;
      split += c.mults;
    }
    if (split > 0) r.stages[si].intra_fraction = Rational(intra, split);
  }

  if (!baseline) return r;
  r.baseline = baseline->name;
  const ComplexityReport base = model_report(*baseline, in_height, in_width, nullptr);
  Count model_sum = 0;
  Count base_sum = 0;
  for (auto& sc : r.stages) {
    const StageSpec* stage = nullptr;
    for (const auto& s : spec.stages)
      if (s.name == sc.name) stage = &s;
    if (!stage || !stage->compare) continue;
    Count base_layers = 0;
    for (const auto& bs : base.stages)
      if (bs.name == sc.name) sc.baseline_mults = bs.compared_mults;
    for (const auto& bl : base.layers)
      if (bl.stage == sc.name && bl.compared) ++base_layers;
    if (sc.baseline_mults == 0) throw ConfigError("baseline " + baseline->name + " has no comparable stage " + sc.name);
    sc.ratio = Rational(sc.compared_mults, sc.baseline_mults);
    model_sum += sc.compared_mults;
    base_sum += sc.baseline_mults;
    for (auto& c : r.layers)
      if (c.stage == sc.name && c.compared) c.ratio = Rational(c.mults * base_layers, sc.baseline_mults);
  }
  if (base_sum > 0) r.overall_ratio = Rational(model_sum, base_sum);
  return r;
}

namespace {

std::string percent(const Rational& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * r.value() << "%";
  return os.str();
}

std::string ratio_text(const Rational& r) {
  std::ostringstream os;
  os << r.str() << " = " << std::fixed << std::setprecision(4) << r.value();
  return os.str();
}

}  // namespace

std::string render_text(const ComplexityReport& r) {
  std::ostringstream os;
  os << "model " << r.model << "  input " << r.input_height << "x" << r.input_width;
  if (!r.baseline.empty()) os << "  baseline " << r.baseline;
  os << "\n\n";
  os << std::left << std::setw(16) << "layer" << std::setw(26) << "config" << std::right << std::setw(16) << "mults"
     << std::setw(13) << "params" << "  " << std::setw(8) << "vs base" << "  breakdown\n";
  for (const auto& c : r.layers) {
    os << std::left << std::setw(16) << c.id << std::setw(26) << c.label << std::right << std::setw(16) << c.mults
       << std::setw(13) << c.params << "  ";
    if (c.ratio) {
      std::ostringstream rv;
      rv << std::fixed << std::setprecision(4) << c.ratio->value();
      os << std::setw(8) << rv.str();
    } else {
      os << std::setw(8) << "-";
    }
    os << "  ";
    for (const auto& [name, m] : c.parts) os << name << "=" << m << " ";
    if (c.mults == 0) os << "(no multiplications)";
    os << "\n";
  }
  os << "\nstage summary\n";
  for (const auto& s : r.stages) {
    os << "  " << std::left << std::setw(12) << s.name << std::right << std::setw(16) << s.mults << " mults";
    if (s.intra_fraction)
      os << "  intra-channel " << percent(*s.intra_fraction) << " / projection "
         << percent(Rational(s.intra_fraction->den() - s.intra_fraction->num(), s.intra_fraction->den()));
    if (s.ratio) os << "  ratio " << ratio_text(*s.ratio);
    os << "\n";
  }
  os << "\ntotal " << r.total_mults << " mults, " << r.total_params << " params\n";
  if (r.overall_ratio) {
    os << "overall ratio vs " << r.baseline << ": " << ratio_text(*r.overall_ratio);
    if (!r.paper_complexity.empty()) os << "  (paper: " << r.paper_complexity << ")";
    os << "\n";
  }
  return os.str();
}

std::string render_json(const ComplexityReport& r, int indent) {
  using nlohmann::json;
  const auto put_ratio = [](json& j, const std::optional<Rational>& q) {
    if (q) {
      j["ratio_num"] = q->num();
      j["ratio_den"] = q->den();
      j["ratio"] = q->value();
    } else {
      j["ratio_num"] = nullptr;
      j["ratio_den"] = nullptr;
      j["ratio"] = nullptr;
    }
  };
  json j;
  j["model"] = r.model;
  j["baseline"] = r.baseline.empty() ? json(nullptr) : json(r.baseline);
  j["input"] = {{"height", r.input_height}, {"width", r.input_width}};
  j["layers"] = json::array();
  for (const auto& c : r.layers) {
    json jl{{"layer", c.id},         {"stage", c.stage},   {"scheme", to_string(c.scheme)},
            {"config", c.label},     {"mults", c.mults},   {"params", c.params},
            {"compared", c.compared}, {"parts", json::object()}};
    for (const auto& [name, m] : c.parts) jl["parts"][name] = m;
    put_ratio(jl, c.ratio);
    j["layers"].push_back(std::move(jl));
  }
  j["stages"] = json::array();
  for (const auto& s : r.stages) {
    json js{{"stage", s.name}, {"mults", s.mults}, {"compared_mults", s.compared_mults},
            {"baseline_mults", s.baseline_mults}};
    put_ratio(js, s.ratio);
    if (s.intra_fraction) {
      js["intra_num"] = s.intra_fraction->num();
      js["intra_den"] = s.intra_fraction->den();
    }
    j["stages"].push_back(std::move(js));
  }
  j["total_mults"] = r.total_mults;
  j["total_params"] = r.total_params;
  json overall;
  put_ratio(overall, r.overall_ratio);
  overall["paper"] = r.paper_complexity;
  j["overall"] = overall;
  return j.dump(indent);
}

}  // namespace sicnet
