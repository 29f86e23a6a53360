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

// Desk-scale SGD training and evaluation.

#pragma once

#include "sicnet/checkpoint.hpp"
#include "sicnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace sicnet {

struct Dataset {
  Tensor4<float> images;
  std::vector<int> labels;
  Index classes = 0;
  std::string split = "train";

  Index size() const { return images.batch(); }
  /// Throws ConfigError unless every label lies in [0, classes).
  void validate() const;
  /// Images [begin, begin + indices.size()) gathered in the given order.
  template <typename Scalar>
  Tensor4<Scalar> gather(const std::vector<Index>& indices, std::size_t begin, std::size_t count,
                         std::vector<int>& labels_out) const;
};

struct SyntheticConfig {
  Index samples = 5000;
  Index classes = 10;
  Index height = 32;
  Index width = 32;
  double noise = 0.35;
  std::uint64_t seed = 7;
};

/// Gaussian blobs: every class owns a position on a ring and a colour; each
/// sample jitters both and adds pixel noise.
Dataset make_synthetic(const SyntheticConfig& config, const std::string& split = "train");

/// Images from a tensor file and labels from an (N, 1, 1, 1) tensor file.
Dataset load_dataset(const std::string& images_path, const std::string& labels_path, Index classes,
                     const std::string& split);

struct TrainConfig {
  double lr = 0.1;
  Index lr_step = 8;  // divide by lr_factor every lr_step epochs
  double lr_factor = 10.0;
  double momentum = 0.9;
  double weight_decay = 0.0;
  Index batch = 50;
  Index epochs = 20;
  double dropout = 0.2;
  std::uint64_t seed = 1;
  bool double_precision = false;
  /// Stop once an epoch's running train accuracy reaches this value, but not
  /// before `min_epochs`. Values above 1 disable early stopping.
  double stop_accuracy = 2.0;
  Index min_epochs = 5;

  void validate() const;
  double learning_rate(Index epoch) const;  // epoch is 1-based
};

struct EpochMetrics {
  Index epoch = 0;
  std::string split;
  double loss = 0;
  double top1 = 0;  // error rates
  double top5 = 0;
};

struct EvalResult {
  double loss = 0;
  double top1_error = 0;
  double top5_error = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::vector<double> train_loss() const;
  double final_train_accuracy() const;
};

/// Per-sample correctness of a (batch, classes) logit block: top1 and top-min(5, classes).
void count_hits(const float* logits, Index classes, int label, Index& top1, Index& top5);
void count_hits(const double* logits, Index classes, int label, Index& top1, Index& top5);

std::string metrics_csv_header();
std::string metrics_csv_line(const EpochMetrics& m);

/// v <- mu v - lr (g + wd w); w <- w + v. Velocities are created on first use.
template <typename Scalar>
void sgd_step(const std::vector<ParamRef<Scalar>>& params, std::map<std::string, Tensor4<Scalar>>& velocity, double lr,
              double momentum, double weight_decay = 0.0) {
  for (const auto& p : params) {
    require_same_shape(p.value->shape(), p.grad->shape(), "sgd_step");
    auto it = velocity.find(p.name);
    if (it == velocity.end()) it = velocity.emplace(p.name, Tensor4<Scalar>(p.value->shape())).first;
    require_same_shape(it->second.shape(), p.value->shape(), "sgd_step");
    auto& v = it->second.vec();
    if (weight_decay != 0.0)
      v = Scalar(momentum) * v - Scalar(lr) * (p.grad->vec() + Scalar(weight_decay) * p.value->vec());
    else
      v = Scalar(momentum) * v - Scalar(lr) * p.grad->vec();
    p.value->vec() += v;
  }
}

template <typename Scalar>
Tensor4<Scalar> Dataset::gather(const std::vector<Index>& indices, std::size_t begin, std::size_t count,
                                std::vector<int>& labels_out) const {
  const Shape4 s = images.shape();
  Tensor4<Scalar> out(Index(count), s.channels, s.height, s.width);
  labels_out.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Index src = indices[begin + i];
    const float* p = images.data() + src * s.image();
    std::transform(p, p + s.image(), out.data() + Index(i) * s.image(), [](float v) { return Scalar(v); });
    labels_out[i] = labels[std::size_t(src)];
  }
  return out;
}

template <typename Scalar>
EvalResult evaluate(Network<Scalar>& net, const Dataset& data, Index batch = 100) {
  if (data.classes != net.classes())
    throw ConfigError("dataset has " + std::to_string(data.classes) + " classes, model " + net.spec().name + " has " +
                      std::to_string(net.classes()));
  std::vector<Index> order(std::size_t(data.size()));
  std::iota(order.begin(), order.end(), Index(0));
  double loss = 0;
  Index hit1 = 0;
  Index hit5 = 0;
  std::vector<int> labels;
  for (std::size_t begin = 0; begin < order.size(); begin += std::size_t(batch)) {
    const std::size_t count = std::min(std::size_t(batch), order.size() - begin);
    const Tensor4<Scalar> x = data.gather<Scalar>(order, begin, count, labels);
    const Tensor4<Scalar> logits = net.forward(x, Mode::Eval);
    loss += double(softmax_cross_entropy(logits, labels).loss) * double(count);
    for (std::size_t i = 0; i < count; ++i)
      count_hits(logits.data() + Index(i) * net.classes(), net.classes(), labels[i], hit1, hit5);
  }
  const double n = double(data.size());
  return {loss / n, 1.0 - double(hit1) / n, 1.0 - double(hit5) / n};
}

struct TrainHooks {
  std::string output_dir;  // metrics.csv and checkpoints; empty: no files
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Mini-batch SGD with a step schedule. Deterministic for a fixed seed.
template <typename Scalar>
TrainResult train(Network<Scalar>& net, const Dataset& data, const TrainConfig& config,
                  const Dataset* validation = nullptr, const TrainHooks& hooks = {}) {
  config.validate();
  data.validate();
  if (data.classes != net.classes())
    throw ConfigError("dataset has " + std::to_string(data.classes) + " classes, model " + net.spec().name + " has " +
                      std::to_string(net.classes()));
  std::mt19937_64 rng(config.seed);
  net.reseed_dropout(config.seed + 1);
  std::map<std::string, Tensor4<Scalar>> velocity;
  const auto params = net.parameters();
  std::vector<Index> order(std::size_t(data.size()));
  std::iota(order.begin(), order.end(), Index(0));

  std::ofstream metrics;
  if (!hooks.output_dir.empty()) {
    std::filesystem::create_directories(hooks.output_dir);
    const std::string path = hooks.output_dir + "/metrics.csv";
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    metrics.open(path, std::ios::app);
    if (!metrics) throw std::runtime_error("cannot open " + path);
    if (fresh) metrics << metrics_csv_header() << "\n";
  }
  const auto record = [&](const EpochMetrics& m, TrainResult& r) {
    r.history.push_back(m);
    if (metrics.is_open()) metrics << metrics_csv_line(m) << "\n" << std::flush;
    if (hooks.on_epoch) hooks.on_epoch(m);
  };

  TrainResult result;
  std::vector<int> labels;
  for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.learning_rate(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0;
    Index hit1 = 0;
    Index hit5 = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += std::size_t(config.batch)) {
      const std::size_t count = std::min(std::size_t(config.batch), order.size() - begin);
      const Tensor4<Scalar> x = data.gather<Scalar>(order, begin, count, labels);
      const Tensor4<Scalar> logits = net.forward(x, Mode::Train);
      auto ce = softmax_cross_entropy(logits, labels);
      if (!std::isfinite(double(ce.loss)))
        throw std::runtime_error(net.spec().name + ": loss diverged in epoch " + std::to_string(epoch));
      loss += double(ce.loss) * double(count);
      for (std::size_t i = 0; i < count; ++i)
        count_hits(logits.data() + Index(i) * net.classes(), net.classes(), labels[i], hit1, hit5);
      net.backward(ce.gradient);
      sgd_step(params, velocity, lr, config.momentum, config.weight_decay);
    }
    const double n = double(data.size());
    const EpochMetrics train_m{epoch, "train", loss / n, 1.0 - double(hit1) / n, 1.0 - double(hit5) / n};
    record(train_m, result);
    if (validation) {
      const EvalResult v = evaluate(net, *validation);
      record({epoch, validation->split, v.loss, v.top1_error, v.top5_error}, result);
    }
    if (!hooks.output_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03ld.ckpt", static_cast<long>(epoch));
      const nlohmann::json extra{{"epoch", epoch}, {"lr", lr}, {"seed", config.seed}};
      save_checkpoint(hooks.output_dir + "/" + name, net, velocity, extra);
      save_checkpoint(hooks.output_dir + "/latest.ckpt", net, velocity, extra);
    }
    if (epoch >= config.min_epochs && 1.0 - train_m.top1 >= config.stop_accuracy) break;
  }
  return result;
}

}  // namespace sicnet
