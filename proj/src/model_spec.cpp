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

#include "sicnet/model_spec.hpp"

#include "sicnet/blocks.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

namespace sicnet {

namespace {

struct SchemeInfo {
  Scheme scheme;
  const char* name;
  std::set<std::string> required;
  std::set<std::string> optional;
};

const std::vector<SchemeInfo>& scheme_table() {
  static const std::vector<SchemeInfo> table = {
      {Scheme::Standard, "standard", {"k", "n_out"}, {"stride", "pad", "repeat"}},
      {Scheme::Unraveled, "unraveled", {"k", "b", "n_out"}, {"repeat"}},
      {Scheme::Sic, "sic", {"k", "n_out"}, {"b", "repeat", "topology"}},
      {Scheme::Topo, "topo", {"k", "n_out", "topology"}, {"repeat"}},
      {Scheme::Grouped, "grouped", {"k", "n_out", "groups"}, {"repeat"}},
      {Scheme::SpatialBottleneck, "spatial_bottleneck", {"k", "n_out", "pad"}, {"repeat"}},
      {Scheme::ChannelBottleneck, "channel_bottleneck", {"k", "n_out"}, {"repeat"}},
      {Scheme::PoolMax, "pool_max", {"k", "stride"}, {}},
      {Scheme::PoolAvg, "pool_avg", {"k", "stride"}, {}},
      {Scheme::Project1x1, "project1x1", {"n_out"}, {}},
      {Scheme::FullyConnected, "fully_connected", {"n_out"}, {}},
      {Scheme::Softmax, "softmax", {}, {}},
  };
  return table;
}

const SchemeInfo& info(Scheme s) {
  for (const auto& i : scheme_table())
    if (i.scheme == s) return i;
  throw ConfigError("unknown scheme");
}

// Fields that carry a non-default value.
std::set<std::string> present_fields(const LayerSpec& l) {
  std::set<std::string> f;
  if (l.k != 0) f.insert("k");
  if (l.n_out != 0) f.insert("n_out");
  if (l.b != 1 || l.scheme == Scheme::Unraveled) f.insert("b");
  if (l.repeat != 1) f.insert("repeat");
  if (l.topology) f.insert("topology");
  if (l.groups != 0) f.insert("groups");
  if (l.stride != 1 || l.scheme == Scheme::PoolMax || l.scheme == Scheme::PoolAvg) f.insert("stride");
  if (l.pad != -1) f.insert("pad");
  return f;
}

}  // namespace

std::string to_string(Scheme s) { return info(s).name; }

Scheme scheme_from_string(const std::string& name) {
  for (const auto& i : scheme_table())
    if (name == i.name) return i.scheme;
  throw ConfigError("unknown layer scheme '" + name + "'");
}

bool is_substitutable(Scheme s) {
  switch (s) {
    case Scheme::Standard:
    case Scheme::Unraveled:
    case Scheme::Sic:
    case Scheme::Topo:
    case Scheme::Grouped:
    case Scheme::SpatialBottleneck:
    case Scheme::ChannelBottleneck:
      return true;
    default:
      return false;
  }
}

void LayerSpec::validate() const {
  const SchemeInfo& si = info(scheme);
  const auto fields = present_fields(*this);
  for (const auto& r : si.required)
    if (!fields.count(r)) throw ConfigError(std::string(si.name) + " layer requires field '" + r + "'");
  for (const auto& f : fields)
    if (!si.required.count(f) && !si.optional.count(f))
      throw ConfigError(std::string(si.name) + " layer does not take field '" + f + "'");
  if (fields.count("k") && k < 1) throw ConfigError("k must be >= 1");
  if (fields.count("n_out") && n_out < 1) throw ConfigError("n_out must be >= 1");
  if (b < 1) throw ConfigError("b must be >= 1");
  if (repeat < 1) throw ConfigError("repeat must be >= 1");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (pad < -1) throw ConfigError("pad must be >= 0");
  if (scheme == Scheme::Grouped && groups < 1) throw ConfigError("groups must be >= 1");
  if (topology) topology->validate();
}

Index ModelSpec::classes() const {
  for (auto s = stages.rbegin(); s != stages.rend(); ++s)
    for (auto l = s->layers.rbegin(); l != s->layers.rend(); ++l)
      if (l->scheme == Scheme::FullyConnected) return l->n_out;
  return 0;
}

std::vector<LayerInstance> trace_layers(const ModelSpec& spec, Index in_height, Index in_width) {
  if (spec.input_channels < 1 || in_height < 1 || in_width < 1) throw ConfigError(spec.name + ": invalid input shape");
  const bool native = in_height == spec.input_height && in_width == spec.input_width;
  Index c = spec.input_channels;
  Index h = in_height;
  Index w = in_width;
  bool flat = false;
  bool closed = false;
  std::vector<LayerInstance> out;
  for (std::size_t si = 0; si < spec.stages.size(); ++si) {
    const StageSpec& stage = spec.stages[si];
    Index counter = 0;
    for (const LayerSpec& l : stage.layers) {
      l.validate();
      for (Index r = 0; r < l.repeat; ++r) {
        LayerInstance li;
        li.id = stage.name + "." + std::to_string(++counter);
        li.stage = si;
        li.spec = l;
        li.in_channels = c;
        li.in_height = h;
        li.in_width = w;
        const auto where = [&] { return spec.name + " " + li.id + " (" + to_string(l.scheme) + "): "; };
        if (closed) throw ConfigError(where() + "layers after softmax");
        if (flat && l.scheme != Scheme::FullyConnected && l.scheme != Scheme::Softmax)
          throw ConfigError(where() + "spatial layer after fully connected");
        const auto same = [&](bool need_same_width) {
          if (l.k % 2 == 0) throw ConfigError(where() + "kernel size must be odd");
          if (need_same_width && l.n_out != c)
            throw ConfigError(where() + "expects " + std::to_string(l.n_out) + " channels but receives " +
                              std::to_string(c));
          li.padding = Padding::uniform((l.k - 1) / 2);
        };
        switch (l.scheme) {
          case Scheme::Standard: {
            const Index p = l.pad >= 0 ? l.pad : (l.k - 1) / 2;
            if (l.pad < 0 && (l.k % 2 == 0 || l.stride != 1))
              throw ConfigError(where() + "implicit padding needs odd k and stride 1");
            li.padding = Padding::uniform(p);
            if (l.k > h + 2 * p || l.k > w + 2 * p) throw ConfigError(where() + "kernel larger than padded input");
            h = (h + 2 * p - l.k) / l.stride + 1;
            w = (w + 2 * p - l.k) / l.stride + 1;
            c = l.n_out;
            break;
          }
          case Scheme::Project1x1:
            c = l.n_out;
            break;
          case Scheme::Unraveled:
          case Scheme::ChannelBottleneck:
            same(true);
            if (l.scheme == Scheme::ChannelBottleneck && c % 2 != 0)
              throw ConfigError(where() + "channel bottleneck needs an even channel count");
            break;
          case Scheme::Sic:
          case Scheme::Topo:
            same(true);
            if (l.topology && l.topology->channels() != c)
              throw ConfigError(where() + "topology covers " + std::to_string(l.topology->channels()) +
                                " channels, layer has " + std::to_string(c));
            break;
          case Scheme::Grouped:
            same(true);
            if (c % l.groups != 0) throw ConfigError(where() + "groups do not divide the channel count");
            break;
          case Scheme::SpatialBottleneck:
            if (l.n_out != c) throw ConfigError(where() + "spatial bottleneck must preserve channels");
            li.padding = spatial_bottleneck_padding(h, w, l.k, l.pad);
            break;
          case Scheme::PoolMax:
          case Scheme::PoolAvg:
            if (l.k > h || l.k > w) throw ConfigError(where() + "pooling window larger than input");
            h = (h - l.k) / l.stride + 1;
            w = (w - l.k) / l.stride + 1;
            break;
          case Scheme::FullyConnected:
            c = l.n_out;
            h = w = 1;
            flat = true;
            break;
          case Scheme::Softmax:
            if (!flat) throw ConfigError(where() + "softmax must follow a fully connected layer");
            closed = true;
            break;
        }
        li.out_channels = c;
        li.out_height = h;
        li.out_width = w;
        out.push_back(std::move(li));
      }
    }
    if (native && stage.resolution > 0 && (h != stage.resolution || w != stage.resolution))
      throw ConfigError(spec.name + " " + stage.name + ": ends at " + std::to_string(h) + "x" + std::to_string(w) +
                        " but declares resolution " + std::to_string(stage.resolution));
  }
  if (!closed) throw ConfigError(spec.name + ": model must end with softmax");
  return out;
}

// --- builtins ------------------------------------------------------------------

namespace {

struct Scale {
  std::string suffix;
  Index input = 221;
  Index stem_pad = 0;
  std::array<Index, 4> resolution{108, 36, 18, 6};
  Index divisor = 1;
  Index classes = 1000;
  // per stage 2..4
  std::array<TopologyConfig, 3> topo2d;
  std::array<TopologyConfig, 3> topo3d;
};

Scale full_scale() {
  Scale s;
  s.topo2d = {TopologyConfig{{8, 16}, {4, 8}}, TopologyConfig{{16, 16}, {8, 8}}, TopologyConfig{{16, 32}, {8, 16}}};
  s.topo3d = {TopologyConfig{{4, 8, 4}, {2, 5, 3}}, TopologyConfig{{8, 8, 4}, {4, 5, 3}},
              TopologyConfig{{8, 8, 8}, {4, 5, 6}}};
  return s;
}

// 32x32 input; a 7x7 / stride 2 stem with 5 pixels of padding gives 18x18,
// and the 3 / 2 / 3 pooling strides then give 6, 3 and 1.
Scale desk_scale() {
  Scale s;
  s.suffix = "-tiny";
  s.input = 32;
  s.stem_pad = 5;
  s.resolution = {18, 6, 3, 1};
  s.divisor = 4;
  s.classes = 10;
  s.topo2d = {TopologyConfig{{4, 8}, {2, 4}}, TopologyConfig{{8, 8}, {4, 4}}, TopologyConfig{{8, 16}, {4, 8}}};
  s.topo3d = {TopologyConfig{{4, 4, 2}, {2, 2, 2}}, TopologyConfig{{4, 8, 2}, {3, 5, 1}},
              TopologyConfig{{4, 8, 4}, {2, 5, 3}}};
  return s;
}

LayerSpec layer(Scheme s, Index k, Index n, Index repeat = 1) {
  LayerSpec l;
  l.scheme = s;
  l.k = k;
  l.n_out = n;
  l.repeat = repeat;
  return l;
}

LayerSpec pool(Scheme s, Index k) {
  LayerSpec l;
  l.scheme = s;
  l.k = k;
  l.stride = k;
  return l;
}

LayerSpec bottleneck(Index n, Index pad) {
  LayerSpec l = layer(Scheme::SpatialBottleneck, 2, n);
  l.pad = pad;
  return l;
}

using StageBody = std::vector<LayerSpec> (*)(Index n, std::size_t stage, const Scale& s);

struct Family {
  const char* name;
  const char* description;
  const char* source;
  const char* complexity;
  double top1;
  double top5;
  StageBody body;
};

const std::vector<Family>& families() {
  static const std::vector<Family> f = {
      {"A", "baseline: two standard 3x3 layers per stage", "model table, column A", "1", 0.3067, 0.1124,
       [](Index n, std::size_t, const Scale&) { return std::vector{layer(Scheme::Standard, 3, n, 2)}; }},
      {"B", "unraveled 3x3 layers with 4 filters per channel", "model table, column B", "~4/9", 0.3069, 0.1127,
       [](Index n, std::size_t, const Scale&) {
         auto l = layer(Scheme::Unraveled, 3, n, 2);
         l.b = 4;
         return std::vector{l};
       }},
      {"C", "four 3x3 SIC layers per stage", "model table, column C", "~2/9", 0.2978, 0.1078,
       [](Index n, std::size_t, const Scale&) { return std::vector{layer(Scheme::Sic, 3, n, 4)}; }},
      {"D", "four 5x5 SIC layers per stage", "model table, column D", "~2/9", 0.2923, 0.1048,
       [](Index n, std::size_t, const Scale&) { return std::vector{layer(Scheme::Sic, 5, n, 4)}; }},
      {"E", "six 3x3 SIC layers per stage", "model table, column E", "~1/3", 0.2883, 0.0988,
       [](Index n, std::size_t, const Scale&) { return std::vector{layer(Scheme::Sic, 3, n, 6)}; }},
      {"F", "four 2D-topology 3x3 layers per stage (c = n/4)", "topology table, 2D column", "~1/2", 0.3053, 0.1128,
       [](Index n, std::size_t st, const Scale& s) {
         auto l = layer(Scheme::Topo, 3, n, 4);
         l.topology = s.topo2d[st];
         return std::vector{l};
       }},
      {"G", "four 3D-topology 3x3 layers per stage (c ~ n/4.27)", "topology table, 3D column", "~15/32", 0.3069,
       0.1138,
       [](Index n, std::size_t st, const Scale& s) {
         auto l = layer(Scheme::Topo, 3, n, 4);
         l.topology = s.topo3d[st];
         return std::vector{l};
       }},
      {"H", "four grouped 3x3 layers per stage (4 groups)", "grouping baseline", "~1/2", 0.3123, 0.1173,
       [](Index n, std::size_t, const Scale&) {
         auto l = layer(Scheme::Grouped, 3, n, 4);
         l.groups = 4;
         return std::vector{l};
       }},
      {"I", "eight 3x3 SIC layers per stage with 2D-topology projections", "topology results, SIC+2D row", "~1/9",
       0.3078, 0.1129,
       [](Index n, std::size_t st, const Scale& s) {
         auto l = layer(Scheme::Sic, 3, n, 8);
         l.topology = s.topo2d[st];
         return std::vector{l};
       }},
      {"J", "model C with every other SIC layer replaced by two 2x2 spatial bottlenecks", "spatial results, J row",
       "~1/6", 0.2972, 0.1066,
       [](Index n, std::size_t, const Scale&) {
         std::vector<LayerSpec> v;
         for (int i = 0; i < 2; ++i) {
           v.push_back(layer(Scheme::Sic, 3, n));
           v.push_back(bottleneck(n, 0));
           v.push_back(bottleneck(n, 1));
         }
         return v;
       }},
      {"K", "model C with every SIC layer replaced by two 2x2 spatial bottlenecks", "spatial results, K row", "~1/9",
       0.3078, 0.1134,
       [](Index n, std::size_t, const Scale&) {
         std::vector<LayerSpec> v;
         for (int i = 0; i < 4; ++i) {
           v.push_back(bottleneck(n, 0));
           v.push_back(bottleneck(n, 1));
         }
         return v;
       }},
  };
  return f;
}

ModelSpec build_family(const Family& f, const Scale& s) {
  ModelSpec m;
  m.name = std::string(f.name) + s.suffix;
  m.description = f.description;
  m.source = f.source;
  m.baseline = std::string("A") + s.suffix;
  m.paper_complexity = f.complexity;
  m.paper_top1_error = f.top1;
  m.paper_top5_error = f.top5;
  m.input_height = m.input_width = s.input;
  const Index d = s.divisor;

  LayerSpec stem = layer(Scheme::Standard, 7, 64 / d);
  stem.stride = 2;
  stem.pad = s.stem_pad;
  m.stages.push_back({"stage1", s.resolution[0], false, {stem}});

  const std::array<Index, 3> pools{3, 2, 3};
  const std::array<Index, 3> widths{128, 256, 512};
  for (std::size_t st = 0; st < 3; ++st) {
    const Index n = widths[st] / d;
    StageSpec stage{"stage" + std::to_string(st + 2), s.resolution[st + 1], true, {}};
    stage.layers.push_back(pool(Scheme::PoolMax, pools[st]));
    stage.layers.push_back(layer(Scheme::Project1x1, 0, n));
    for (auto& l : f.body(n, st, s)) stage.layers.push_back(l);
    if (st == 2) stage.layers.push_back(layer(Scheme::Project1x1, 0, 1024 / d));
    m.stages.push_back(std::move(stage));
  }
  StageSpec head{"classifier", 1, false, {}};
  head.layers.push_back(pool(Scheme::PoolAvg, s.resolution[3]));
  head.layers.push_back(layer(Scheme::FullyConnected, 0, 2048 / d));
  head.layers.push_back(layer(Scheme::FullyConnected, 0, s.classes));
  LayerSpec softmax;
  softmax.scheme = Scheme::Softmax;
  head.layers.push_back(softmax);
  m.stages.push_back(std::move(head));
  return m;
}

ModelSpec channel_bottleneck_demo(const Scale& s) {
  Family f{"CB", "model C with each SIC layer replaced by an n -> n/2 -> n channel-wise bottleneck block",
           "channel-wise bottleneck description (no published configuration)", "", 0, 0,
           [](Index n, std::size_t, const Scale&) { return std::vector{layer(Scheme::ChannelBottleneck, 3, n, 4)}; }};
  ModelSpec m = build_family(f, s);
  m.paper_complexity.clear();
  m.paper_top1_error.reset();
  m.paper_top5_error.reset();
  return m;
}

}  // namespace

const std::map<std::string, ModelSpec>& builtin_specs() {
  static const std::map<std::string, ModelSpec> specs = [] {
    std::map<std::string, ModelSpec> m;
    for (const Scale& s : {full_scale(), desk_scale()}) {
      for (const auto& f : families()) {
        ModelSpec spec = build_family(f, s);
        m.emplace(spec.name, std::move(spec));
      }
      ModelSpec cb = channel_bottleneck_demo(s);
      m.emplace(cb.name, std::move(cb));
    }
    return m;
  }();
  return specs;
}

const ModelSpec* find_builtin(const std::string& name) {
  const auto& specs = builtin_specs();
  const auto it = specs.find(name);
  return it == specs.end() ? nullptr : &it->second;
}

// --- JSON ----------------------------------------------------------------------

namespace {

using nlohmann::json;

json layer_to_json(const LayerSpec& l) {
  json j;
  j["scheme"] = to_string(l.scheme);
  const auto fields = present_fields(l);
  if (fields.count("k")) j["k"] = l.k;
  if (fields.count("n_out")) j["n_out"] = l.n_out;
  if (fields.count("b")) j["b"] = l.b;
  if (fields.count("groups")) j["groups"] = l.groups;
  if (fields.count("stride")) j["stride"] = l.stride;
  if (fields.count("pad")) j["pad"] = l.pad;
  if (fields.count("repeat")) j["repeat"] = l.repeat;
  if (l.topology) j["topology"] = {{"dims", l.topology->dims}, {"neighborhood", l.topology->neighborhood}};
  return j;
}

Index get_count(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(std::string("field '") + key + "' must be an integer");
  return v.get<Index>();
}

LayerSpec layer_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("layer entry must be an object");
  if (!j.contains("scheme") || !j["scheme"].is_string()) throw ConfigError("layer entry needs a string 'scheme'");
  LayerSpec l;
  l.scheme = scheme_from_string(j["scheme"].get<std::string>());
  const SchemeInfo& si = info(l.scheme);
  for (const auto& [key, value] : j.items()) {
    if (key == "scheme") continue;
    if (!si.required.count(key) && !si.optional.count(key))
      throw ConfigError(std::string(si.name) + " layer does not take field '" + key + "'");
  }
  for (const auto& r : si.required)
    if (!j.contains(r)) throw ConfigError(std::string(si.name) + " layer requires field '" + r + "'");
  if (j.contains("k")) l.k = get_count(j, "k");
  if (j.contains("n_out")) l.n_out = get_count(j, "n_out");
  if (j.contains("b")) l.b = get_count(j, "b");
  if (j.contains("groups")) l.groups = get_count(j, "groups");
  if (j.contains("stride")) l.stride = get_count(j, "stride");
  if (j.contains("pad")) {
    l.pad = get_count(j, "pad");
    if (l.pad < 0) throw ConfigError("pad must be >= 0");
  }
  if (j.contains("repeat")) l.repeat = get_count(j, "repeat");
  if (j.contains("topology")) {
    const auto& t = j["topology"];
    if (!t.is_object() || !t.contains("dims") || !t.contains("neighborhood"))
      throw ConfigError("topology needs 'dims' and 'neighborhood'");
    l.topology = TopologyConfig{t["dims"].get<std::vector<Index>>(), t["neighborhood"].get<std::vector<Index>>()};
  }
  l.validate();
  return l;
}

}  // namespace

std::string spec_to_json(const ModelSpec& spec, int indent) {
  json j;
  j["name"] = spec.name;
  j["description"] = spec.description;
  j["source"] = spec.source;
  if (!spec.baseline.empty()) j["baseline"] = spec.baseline;
  if (!spec.paper_complexity.empty()) j["paper_complexity"] = spec.paper_complexity;
  if (spec.paper_top1_error) j["paper_top1_error"] = *spec.paper_top1_error;
  if (spec.paper_top5_error) j["paper_top5_error"] = *spec.paper_top5_error;
  j["input"] = {{"channels", spec.input_channels}, {"height", spec.input_height}, {"width", spec.input_width}};
  j["stages"] = json::array();
  for (const auto& s : spec.stages) {
    json js{{"name", s.name}, {"resolution", s.resolution}, {"compare", s.compare}, {"layers", json::array()}};
    for (const auto& l : s.layers) js["layers"].push_back(layer_to_json(l));
    j["stages"].push_back(std::move(js));
  }
  return j.dump(indent);
}

ModelSpec spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model spec: ") + e.what());
  }
  try {
    ModelSpec m;
    m.name = j.at("name").get<std::string>();
    m.description = j.value("description", "");
    m.source = j.value("source", "");
    m.baseline = j.value("baseline", "");
    m.paper_complexity = j.value("paper_complexity", "");
    if (j.contains("paper_top1_error")) m.paper_top1_error = j["paper_top1_error"].get<double>();
    if (j.contains("paper_top5_error")) m.paper_top5_error = j["paper_top5_error"].get<double>();
    const auto& in = j.at("input");
    m.input_channels = get_count(in, "channels");
    m.input_height = get_count(in, "height");
    m.input_width = get_count(in, "width");
    for (const auto& js : j.at("stages")) {
      StageSpec s;
      s.name = js.at("name").get<std::string>();
      s.resolution = js.value("resolution", Index(0));
      s.compare = js.value("compare", false);
      for (const auto& jl : js.at("layers")) s.layers.push_back(layer_from_json(jl));
      m.stages.push_back(std::move(s));
    }
    trace_layers(m);
    return m;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model spec: ") + e.what());
  }
}

ModelSpec load_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model spec '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return spec_from_json(ss.str());
}

ModelSpec resolve_spec(const std::string& name_or_path) {
  if (const ModelSpec* m = find_builtin(name_or_path)) return *m;
  if (name_or_path.find('/') != std::string::npos || name_or_path.ends_with(".json"))
    return load_spec_file(name_or_path);
  throw ConfigError("unknown model '" + name_or_path + "' (see list-models)");
}

}  // namespace sicnet
