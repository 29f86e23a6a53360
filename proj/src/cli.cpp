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

#include "sicnet/cli.hpp"

#include "sicnet/checkpoint.hpp"
#include "sicnet/complexity.hpp"
#include "sicnet/gradcheck.hpp"
#include "sicnet/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iomanip>
#include <sstream>

namespace sicnet {
namespace {

using nlohmann::json;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Resolution {
  Index height = 0;
  Index width = 0;
};

Resolution parse_resolution(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw UsageError("");
    std::size_t used = 0;
    const Index h = std::stol(text.substr(0, x), &used);
    if (used != x) throw UsageError("");
    const Index w = std::stol(text.substr(x + 1), &used);
    if (used != text.size() - x - 1 || h < 1 || w < 1) throw UsageError("");
    return {h, w};
  } catch (const std::logic_error&) {
    throw UsageError("--input expects HxW, e.g. 221x221, got '" + text + "'");
  }
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// --- overrides -------------------------------------------------------------------

struct RunSettings {
  TrainConfig train;
  SyntheticConfig data;
  SyntheticConfig validation{1000, 10, 32, 32, 0.35, 8};
};

void apply_override(RunSettings& s, const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + item + "'");
  const std::string key = item.substr(0, eq);
  const std::string value = item.substr(eq + 1);
  try {
    std::size_t used = 0;
    const auto real = [&] {
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("");
      return v;
    };
    const auto count = [&] {
      const long long v = std::stoll(value, &used);
      if (used != value.size()) throw std::invalid_argument("");
      return Index(v);
    };
    if (key == "lr") s.train.lr = real();
    else if (key == "lr_step") s.train.lr_step = count();
    else if (key == "lr_factor") s.train.lr_factor = real();
    else if (key == "momentum") s.train.momentum = real();
    else if (key == "weight_decay") s.train.weight_decay = real();
    else if (key == "batch") s.train.batch = count();
    else if (key == "epochs") s.train.epochs = count();
    else if (key == "dropout") s.train.dropout = real();
    else if (key == "seed") s.train.seed = std::uint64_t(count());
    else if (key == "stop_accuracy") s.train.stop_accuracy = real();
    else if (key == "min_epochs") s.train.min_epochs = count();
    else if (key == "precision") {
      if (value != "single" && value != "double") throw UsageError("precision must be single or double");
      s.train.double_precision = value == "double";
    } else if (key == "samples") s.data.samples = count();
    else if (key == "val_samples") s.validation.samples = count();
    else if (key == "noise") s.data.noise = s.validation.noise = real();
    else if (key == "data_seed") s.data.seed = std::uint64_t(count());
    else throw UsageError("unknown --set key '" + key + "'");
  } catch (const UsageError&) {
    throw;
  } catch (const std::logic_error&) {
    throw UsageError("--set " + key + ": cannot parse '" + value + "'");
  }
}

// --- list-models / describe ----------------------------------------------------------

int list_models(bool as_json, std::ostream& out) {
  json j = json::array();
  for (const auto& [name, spec] : builtin_specs()) {
    if (as_json) {
      j.push_back({{"name", name},
                   {"description", spec.description},
                   {"source", spec.source},
                   {"input", {spec.input_height, spec.input_width}},
                   {"classes", spec.classes()},
                   {"paper_complexity", spec.paper_complexity}});
    } else {
      out << std::left << std::setw(8) << name << " " << std::setw(9)
          << (std::to_string(spec.input_height) + "x" + std::to_string(spec.input_width)) << spec.description << "  ["
          << spec.source << "]\n";
    }
  }
  if (as_json) out << j.dump(2) << "\n";
  return kExitOk;
}

int describe(const ModelSpec& spec, Resolution r, bool as_json, std::ostream& out) {
  const auto layers = trace_layers(spec, r.height, r.width);
  Count params = 0;
  json jl = json::array();
  std::ostringstream text;
  text << "model " << spec.name << ": " << spec.description << "\n";
  if (!spec.source.empty()) text << "source: " << spec.source << "\n";
  text << "input " << spec.input_channels << "x" << r.height << "x" << r.width << ", " << spec.classes()
       << " classes\n\n";
  for (const auto& li : layers) {
    const LayerCost c = layer_cost(li, spec.stages[li.stage].name);
    params += c.params;
    const std::string in = std::to_string(li.in_channels) + "x" + std::to_string(li.in_height) + "x" +
                           std::to_string(li.in_width);
    const std::string outs = std::to_string(li.out_channels) + "x" + std::to_string(li.out_height) + "x" +
                             std::to_string(li.out_width);
    text << std::left << std::setw(14) << li.id << std::setw(24) << c.label << std::setw(14) << in << "-> "
         << std::setw(14) << outs << std::right << std::setw(12) << c.params << "\n";
    jl.push_back({{"layer", li.id},
                  {"scheme", to_string(li.spec.scheme)},
                  {"config", c.label},
                  {"input", {li.in_channels, li.in_height, li.in_width}},
                  {"output", {li.out_channels, li.out_height, li.out_width}},
                  {"params", c.params}});
  }
  text << "\n" << params << " parameters\n";
  if (spec.paper_top1_error)
    text << "published top-1 / top-5 error: " << fixed(*spec.paper_top1_error, 4) << " / "
         << fixed(spec.paper_top5_error.value_or(0), 4) << "\n";
  if (as_json) {
    json j{{"spec", json::parse(spec_to_json(spec, -1))}, {"layers", jl}, {"total_params", params}};
    out << j.dump(2) << "\n";
  } else {
    out << text.str();
  }
  return kExitOk;
}

// --- complexity --------------------------------------------------------------------

int complexity(const std::vector<std::string>& models, bool compare, const std::string& baseline_name,
               const std::string& input, bool as_json, std::ostream& out) {
  if (models.empty()) throw UsageError("complexity: --model is required");
  if (compare && models.size() != 2) throw UsageError("--compare takes exactly two --model values (baseline first)");
  if (!compare && models.size() > 1) throw UsageError("several --model values need --compare");
  if (compare && !baseline_name.empty()) throw UsageError("--baseline conflicts with --compare");

  const ModelSpec model = resolve_spec(models.back());
  std::optional<ModelSpec> baseline;
  if (compare) baseline = resolve_spec(models.front());
  else if (!baseline_name.empty()) baseline = resolve_spec(baseline_name);
  else if (!model.baseline.empty()) baseline = resolve_spec(model.baseline);

  const Resolution r = input.empty() ? Resolution{model.input_height, model.input_width} : parse_resolution(input);
  const ComplexityReport report = model_report(model, r.height, r.width, baseline ? &*baseline : nullptr);
  if (as_json) {
    out << render_json(report) << "\n";
    return kExitOk;
  }
  out << render_text(report);
  if (compare) {
    out << "\n";
    for (const auto& s : report.stages)
      if (s.ratio)
        out << s.name << " ratio " << model.name << "/" << baseline->name << " = " << s.ratio->str() << " = "
            << fixed(s.ratio->value(), 4) << (model.paper_complexity.empty() ? "" : "  (paper: " + model.paper_complexity + ")")
            << "\n";
  }
  return kExitOk;
}

// --- gradcheck ---------------------------------------------------------------------

struct GradcheckArgs {
  std::string layer;
  std::string model;
  Index n = 4;
  Index k = 3;
  Index b = 2;
  Index size = 5;
  Index batch = 0;  // 0: 2 for single layers, 4 for whole models
  Index groups = 2;
  Index stride = 1;
  Index pad = -1;
  Index window = 2;
  Index pad_sb = 0;
  std::string topology = "2x2/1x2";
  Index max_per_group = 0;
  std::uint64_t seed = 5;
  double tolerance = 1e-6;
};

TopologyConfig parse_topology(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) throw UsageError("--topology expects dims/neighborhood, e.g. 2x4/1x2");
  const auto dims = [](const std::string& part) {
    std::vector<Index> v;
    std::stringstream ss(part);
    std::string item;
    while (std::getline(ss, item, 'x')) {
      try {
        v.push_back(std::stol(item));
      } catch (const std::logic_error&) {
        throw UsageError("--topology: cannot parse '" + item + "'");
      }
    }
    return v;
  };
  TopologyConfig t{dims(text.substr(0, slash)), dims(text.substr(slash + 1))};
  t.validate();
  return t;
}

GradcheckReport run_gradcheck_impl(const GradcheckArgs& a, GradcheckOptions opt, std::mt19937_64& rng);

GradcheckReport run_gradcheck(const GradcheckArgs& a) {
  GradcheckOptions opt;
  opt.tolerance = a.tolerance;
  opt.max_per_group = a.max_per_group;
  opt.seed = a.seed;
  std::mt19937_64 rng(a.seed);
  GradcheckArgs defaults = a;
  if (defaults.batch == 0) defaults.batch = a.layer == "model" ? 4 : 2;
  return run_gradcheck_impl(defaults, opt, rng);
}

GradcheckReport run_gradcheck_impl(const GradcheckArgs& a, GradcheckOptions opt, std::mt19937_64& rng) {
  if (a.batch < 1 || a.n < 1 || a.k < 1 || a.size < 1) throw UsageError("gradcheck: sizes must be >= 1");
  if (a.layer == "model") {
    if (a.model.empty()) throw UsageError("gradcheck --layer model needs --model");
    BuildOptions bo;
    bo.seed = a.seed;
    bo.dropout = 0.0;
    auto net = build_model<double>(resolve_spec(a.model), bo);
    Shape4 s = net->input_shape();
    s.batch = a.batch;
    if (opt.max_per_group == 0) opt.max_per_group = 8;
    return gradcheck_network(*net, Tensor4<double>::Gaussian(s, rng), opt);
  }
  if (a.layer == "bn") {
    auto state = BatchNormState<double>::identity(a.n);
    state.scale = Tensor4<double>::Uniform(state.scale.shape(), rng, 0.5, 1.5);
    state.shift = Tensor4<double>::Gaussian(state.shift.shape(), rng);
    Tensor4<double> x = Tensor4<double>::Gaussian({a.batch, a.n, a.size, a.size}, rng);
    Tensor4<double> gs(state.scale.shape()), gb(state.shift.shape());
    std::optional<BatchNormCache<double>> cache;
    return gradcheck(
        [&] {
          auto r = batchnorm_forward(x, state, Mode::Train);
          cache = std::move(r.cache);
          return r.output;
        },
        [&](const Tensor4<double>& up) {
          auto g = batchnorm_backward(*cache, state, up);
          gs = g.scale;
          gb = g.shift;
          return g.input;
        },
        x, {{"scale", &state.scale, &gs}, {"shift", &state.shift, &gb}}, opt);
  }
  if (a.layer == "softmax") {
    Tensor4<double> z = Tensor4<double>::Gaussian({a.batch, a.n, 1, 1}, rng);
    std::vector<int> labels;
    for (Index i = 0; i < a.batch; ++i) labels.push_back(int(std::uniform_int_distribution<Index>(0, a.n - 1)(rng)));
    return gradcheck(
        [&] { return Tensor4<double>(1, 1, 1, 1, softmax_cross_entropy(z, labels).loss); },
        [&](const Tensor4<double>& up) { return scale(softmax_cross_entropy(z, labels).gradient, up.data()[0]); }, z,
        {}, opt);
  }
  if (a.layer == "intra" || a.layer == "deconv") {
    // Strided intra-channel conv and its transpose with explicit padding.
    const Index p = std::max<Index>(a.pad, 0);
    IntraChannelKernel<double> kern{Tensor4<double>::Gaussian({a.n, 1, a.k, a.k}, rng), a.stride};
    Tensor4<double> gk(kern.weights.shape());
    const Padding pad = Padding::uniform(p);
    const Index oh = window_output_extent(a.size, p, p, a.k, a.stride, "gradcheck");
    if (a.layer == "intra") {
      Tensor4<double> x = Tensor4<double>::Gaussian({a.batch, a.n, a.size, a.size}, rng);
      return gradcheck([&] { return intra_channel_conv(x, kern, pad); },
                       [&](const Tensor4<double>& up) {
                         auto g = intra_channel_conv_backward(x, kern, up, pad);
                         gk = g.kernel;
                         return g.input;
                       },
                       x, {{"kernel", &kern.weights, &gk}}, opt);
    }
    Tensor4<double> y = Tensor4<double>::Gaussian({a.batch, a.n, oh, oh}, rng);
    return gradcheck([&] { return intra_channel_deconv(y, kern, pad, a.size, a.size); },
                     [&](const Tensor4<double>& up) {
                       auto g = intra_channel_deconv_backward(y, kern, up, pad);
                       gk = g.kernel;
                       return g.input;
                     },
                     y, {{"kernel", &kern.weights, &gk}}, opt);
  }

  LayerSpec l;
  Index in_channels = a.n;
  if (a.layer == "conv") {
    l.scheme = Scheme::Standard;
    l.k = a.k;
    l.n_out = a.n;
    l.stride = a.stride;
    l.pad = a.pad;
  } else if (a.layer == "sic" || a.layer == "unraveled" || a.layer == "cb") {
    l.scheme = a.layer == "sic" ? Scheme::Sic : a.layer == "unraveled" ? Scheme::Unraveled : Scheme::ChannelBottleneck;
    l.k = a.k;
    l.n_out = a.n;
    if (a.layer != "cb") l.b = a.b;
  } else if (a.layer == "sic-topo" || a.layer == "topo") {
    l.scheme = a.layer == "topo" ? Scheme::Topo : Scheme::Sic;
    l.k = a.k;
    l.topology = parse_topology(a.topology);
    in_channels = l.n_out = l.topology->channels();
    if (a.layer == "sic-topo") l.b = a.b;
  } else if (a.layer == "grouped") {
    l.scheme = Scheme::Grouped;
    l.k = a.k;
    l.n_out = a.n;
    l.groups = a.groups;
  } else if (a.layer == "sb") {
    l.scheme = Scheme::SpatialBottleneck;
    l.k = a.k;
    l.n_out = a.n;
    l.pad = a.pad_sb;
  } else if (a.layer == "maxpool" || a.layer == "avgpool") {
    l.scheme = a.layer == "maxpool" ? Scheme::PoolMax : Scheme::PoolAvg;
    l.k = a.window;
    l.stride = a.stride;
  } else if (a.layer == "fc") {
    l.scheme = Scheme::FullyConnected;
    l.n_out = a.n;
  } else {
    throw UsageError("gradcheck: unknown --layer '" + a.layer + "'");
  }
  const LayerInstance li = trace_single_layer(l, in_channels, a.size, a.size);
  std::mt19937_64 init(a.seed + 1);
  auto m = make_module<double>(li, true, false, 0.0, nullptr, init);
  // Perturb the batch-norm affine terms away from the identity so they matter.
  std::vector<ParamRef<double>> params;
  m->parameters("", params);
  for (auto& p : params)
    if (p.name.ends_with("bn.scale")) *p.value = Tensor4<double>::Uniform(p.value->shape(), rng, 0.5, 1.5);
    else if (p.name.ends_with("bn.shift")) *p.value = Tensor4<double>::Gaussian(p.value->shape(), rng, 0.5);
  return gradcheck_module(*m, Tensor4<double>::Gaussian({a.batch, in_channels, a.size, a.size}, rng), opt);
}

int print_gradcheck(const GradcheckReport& r, const GradcheckArgs& a, bool as_json, std::ostream& out) {
  std::ostringstream tol;
  tol << a.tolerance;
  // "1e-06" -> "1e-6"
  std::string tol_text = tol.str();
  if (const auto e = tol_text.find("e-0"); e != std::string::npos) tol_text.erase(e + 2, 1);
  if (as_json) {
    json groups = json::array();
    for (const auto& g : r.groups)
      groups.push_back({{"group", g.name}, {"max_rel_err", g.max_rel_err}, {"checked", g.checked}});
    out << json{{"layer", a.layer}, {"groups", groups}, {"max_rel_err", r.max_rel_err()},
                {"tolerance", a.tolerance}, {"pass", r.passed()}}
               .dump(2)
        << "\n";
  } else {
    for (const auto& g : r.groups)
      out << std::left << std::setw(28) << g.name << std::right << std::setw(8) << g.checked << "  max rel err "
          << std::scientific << std::setprecision(3) << g.max_rel_err << std::defaultfloat << "\n";
    out << "max rel err " << std::scientific << std::setprecision(3) << r.max_rel_err() << std::defaultfloat << "\n";
    out << "max rel err < " << tol_text << ": " << (r.passed() ? "PASS" : "FAIL") << "\n";
  }
  return r.passed() ? kExitOk : kExitDomainError;
}

// --- train / eval ------------------------------------------------------------------

Dataset dataset_from(const std::string& images, const std::string& labels, const SyntheticConfig& synthetic,
                     Index classes, const std::string& split) {
  if (images.empty() != labels.empty()) throw UsageError("--data and --labels must be given together");
  if (!images.empty()) return load_dataset(images, labels, classes, split);
  SyntheticConfig c = synthetic;
  c.classes = classes;
  return make_synthetic(c, split);
}

template <typename Scalar>
int train_typed(const ModelSpec& spec, const RunSettings& s, const Dataset& data, const Dataset* validation,
                const std::string& output, bool as_json, std::ostream& out) {
  BuildOptions bo;
  bo.seed = s.train.seed;
  bo.dropout = s.train.dropout;
  bo.input_height = data.images.height();
  bo.input_width = data.images.width();
  auto net = build_model<Scalar>(spec, bo);
  TrainHooks hooks;
  hooks.output_dir = output;
  if (!as_json)
    hooks.on_epoch = [&](const EpochMetrics& m) {
      out << "epoch " << std::setw(3) << m.epoch << "  " << std::left << std::setw(6) << m.split << std::right
          << "  loss " << fixed(m.loss, 6) << "  top1 err " << fixed(m.top1, 4) << "  top5 err " << fixed(m.top5, 4)
          << std::endl;
    };
  const TrainResult r = train(*net, data, s.train, validation, hooks);
  if (as_json) {
    json h = json::array();
    for (const auto& m : r.history)
      h.push_back({{"epoch", m.epoch}, {"split", m.split}, {"loss", m.loss}, {"top1", m.top1}, {"top5", m.top5}});
    out << json{{"model", spec.name}, {"history", h}, {"final_train_accuracy", r.final_train_accuracy()}}.dump(2)
        << "\n";
  } else {
    out << "final train accuracy " << fixed(r.final_train_accuracy(), 4) << "\n";
    if (!output.empty()) out << "artifacts in " << output << "\n";
  }
  return kExitOk;
}

template <typename Scalar>
int eval_typed(const CheckpointContents& ckpt, const Dataset& data, const std::string& output, bool as_json,
               std::ostream& out) {
  auto net = network_from_checkpoint<Scalar>(ckpt);
  const EvalResult e = evaluate(*net, data);
  if (!output.empty()) {
    std::filesystem::create_directories(output);
    const std::string path = output + "/metrics.csv";
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream f(path, std::ios::app);
    if (!f) throw std::runtime_error("cannot open " + path);
    if (fresh) f << metrics_csv_header() << "\n";
    const Index epoch = ckpt.manifest.at("extra").value("epoch", Index(0));
    f << metrics_csv_line({epoch, data.split, e.loss, e.top1_error, e.top5_error}) << "\n";
  }
  if (as_json) {
    out << json{{"model", net->spec().name}, {"split", data.split}, {"samples", data.size()}, {"loss", e.loss},
                {"top1_error", e.top1_error}, {"top5_error", e.top5_error}}
               .dump(2)
        << "\n";
  } else {
    out << net->spec().name << " on " << data.size() << " " << data.split << " samples: loss " << fixed(e.loss, 6)
        << "  top-1 error " << fixed(e.top1_error, 4) << "  top-5 error " << fixed(e.top5_error, 4) << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"sicnet: single intra-channel convolution layers, complexity analysis and desk-scale training"};
  app.require_subcommand(1);
  std::string format = "text";
  const auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));
  };

  auto* list = app.add_subcommand("list-models", "builtin model specs");
  add_format(list);

  std::string model;
  std::string input;
  auto* desc = app.add_subcommand("describe", "layer-by-layer shapes and parameter counts");
  desc->add_option("--model", model, "builtin name or spec JSON path")->required();
  desc->add_option("--input", input, "input resolution HxW");
  add_format(desc);

  std::vector<std::string> models;
  bool compare = false;
  std::string baseline;
  auto* cx = app.add_subcommand("complexity", "multiplication and parameter counts");
  cx->add_option("--model", models, "model(s); with --compare the first is the baseline")->required();
  cx->add_flag("--compare", compare, "ratio of the second model to the first");
  cx->add_option("--baseline", baseline, "baseline model (default: the spec's own)");
  cx->add_option("--input", input, "input resolution HxW (default: the spec's own)");
  add_format(cx);

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of a layer's backward pass");
  gc->add_option("--layer", ga.layer,
                 "conv, intra, deconv, sic, sic-topo, unraveled, topo, grouped, sb, cb, bn, maxpool, avgpool, fc, "
                 "softmax or model")
      ->required();
  gc->add_option("--model", ga.model, "model for --layer model");
  gc->add_option("--n", ga.n, "channels");
  gc->add_option("--k", ga.k, "kernel size");
  gc->add_option("--b", ga.b, "SIC iterations / unraveled filters per channel");
  gc->add_option("--size", ga.size, "spatial side length");
  gc->add_option("--batch", ga.batch, "batch size (default 2, or 4 for --layer model)");
  gc->add_option("--groups", ga.groups, "groups for --layer grouped");
  gc->add_option("--stride", ga.stride, "stride for conv, intra, deconv and pooling");
  gc->add_option("--pad", ga.pad, "padding for conv, intra and deconv");
  gc->add_option("--window", ga.window, "pooling window");
  gc->add_option("--sb-pad", ga.pad_sb, "spatial bottleneck padding");
  gc->add_option("--topology", ga.topology, "dims/neighborhood, e.g. 2x4/1x2");
  gc->add_option("--max-per-group", ga.max_per_group, "sample at most this many elements per tensor (0: all)");
  gc->add_option("--seed", ga.seed, "random seed");
  gc->add_option("--tolerance", ga.tolerance, "maximum relative error");
  add_format(gc);

  std::string output;
  std::vector<std::string> sets;
  std::string data_path, labels_path, val_data, val_labels;
  bool no_validation = false;
  auto* tr = app.add_subcommand("train", "SGD training on the synthetic set or tensor files");
  tr->add_option("--model", model, "builtin name or spec JSON path")->required();
  tr->add_option("--output", output, "directory for metrics.csv and checkpoints");
  tr->add_option("--set", sets, "override, key=value (lr, lr_step, epochs, batch, seed, ...)");
  tr->add_option("--data", data_path, "training images tensor file");
  tr->add_option("--labels", labels_path, "training labels tensor file");
  tr->add_option("--val-data", val_data, "validation images tensor file");
  tr->add_option("--val-labels", val_labels, "validation labels tensor file");
  tr->add_flag("--no-validation", no_validation, "skip the per-epoch validation pass");
  add_format(tr);

  std::string checkpoint;
  auto* ev = app.add_subcommand("eval", "top-1 / top-5 error of a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--data", data_path, "images tensor file");
  ev->add_option("--labels", labels_path, "labels tensor file");
  ev->add_option("--set", sets, "override, key=value (samples, data_seed, noise)");
  ev->add_option("--output", output, "directory; appends to metrics.csv");
  add_format(ev);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  const bool as_json = format == "json";
  try {
    if (*list) return list_models(as_json, out);
    if (*desc) {
      const ModelSpec spec = resolve_spec(model);
      const Resolution r = input.empty() ? Resolution{spec.input_height, spec.input_width} : parse_resolution(input);
      return describe(spec, r, as_json, out);
    }
    if (*cx) return complexity(models, compare, baseline, input, as_json, out);
    if (*gc) return print_gradcheck(run_gradcheck(ga), ga, as_json, out);
    if (*tr) {
      RunSettings s;
      for (const auto& item : sets) apply_override(s, item);
      if (no_validation && !val_data.empty()) throw UsageError("--no-validation conflicts with --val-data");
      const ModelSpec spec = resolve_spec(model);
      s.data.height = s.validation.height = spec.input_height;
      s.data.width = s.validation.width = spec.input_width;
      const Dataset data = dataset_from(data_path, labels_path, s.data, spec.classes(), "train");
      std::optional<Dataset> validation;
      if (!no_validation) validation = dataset_from(val_data, val_labels, s.validation, spec.classes(), "val");
      const Dataset* v = validation ? &*validation : nullptr;
      return s.train.double_precision ? train_typed<double>(spec, s, data, v, output, as_json, out)
                                      : train_typed<float>(spec, s, data, v, output, as_json, out);
    }
    if (*ev) {
      RunSettings s;
      s.data.seed = s.validation.seed;
      s.data.samples = s.validation.samples;
      for (const auto& item : sets) apply_override(s, item);
      const CheckpointContents ckpt = read_checkpoint(checkpoint);
      const ModelSpec spec = spec_from_json(ckpt.manifest.at("spec").dump());
      s.data.height = ckpt.manifest.at("input").at(0).get<Index>();
      s.data.width = ckpt.manifest.at("input").at(1).get<Index>();
      const Dataset data = dataset_from(data_path, labels_path, s.data, spec.classes(), "eval");
      return ckpt.manifest.at("dtype") == "f64" ? eval_typed<double>(ckpt, data, output, as_json, out)
                                                : eval_typed<float>(ckpt, data, output, as_json, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomainError;
  }
  return kExitUsage;
}

}  // namespace sicnet
