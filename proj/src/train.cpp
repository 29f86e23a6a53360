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

#include "sicnet/train.hpp"

#include <cmath>
#include <array>
#include <numbers>
#include <sstream>

namespace sicnet {

void Dataset::validate() const {
  if (classes < 1) throw ConfigError("dataset: class count must be >= 1");
  if (Index(labels.size()) != images.batch())
    throw ConfigError("dataset: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(images.batch()) + " images");
  for (int l : labels)
    if (l < 0 || l >= classes) throw ConfigError("dataset: label " + std::to_string(l) + " outside [0, classes)");
}

Dataset make_synthetic(const SyntheticConfig& cfg, const std::string& split) {
  if (cfg.samples < 1 || cfg.classes < 1 || cfg.height < 4 || cfg.width < 4)
    throw ConfigError("synthetic dataset: invalid size");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, int(cfg.classes) - 1);

  // Class prototypes: ring positions and saturated colours.
  std::vector<double> cy(std::size_t(cfg.classes)), cx(std::size_t(cfg.classes));
  std::vector<std::array<double, 3>> colour(std::size_t(cfg.classes));
  for (Index c = 0; c < cfg.classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * double(c) / double(cfg.classes);
    cy[std::size_t(c)] = 0.5 * double(cfg.height) + 0.3 * double(cfg.height) * std::sin(angle);
    cx[std::size_t(c)] = 0.5 * double(cfg.width) + 0.3 * double(cfg.width) * std::cos(angle);
    for (int ch = 0; ch < 3; ++ch)
      colour[std::size_t(c)][std::size_t(ch)] = std::cos(angle + 2.0 * std::numbers::pi * ch / 3.0);
  }

  Dataset d{Tensor4<float>(cfg.samples, 3, cfg.height, cfg.width), std::vector<int>(std::size_t(cfg.samples)),
            cfg.classes, split};
  const double sigma = 0.12 * double(std::min(cfg.height, cfg.width));
  for (Index i = 0; i < cfg.samples; ++i) {
    const int label = pick(rng);
    d.labels[std::size_t(i)] = label;
    const double y0 = cy[std::size_t(label)] + 1.5 * gauss(rng);
    const double x0 = cx[std::size_t(label)] + 1.5 * gauss(rng);
    const double gain = 1.0 + 0.2 * gauss(rng);
    for (int ch = 0; ch < 3; ++ch) {
      float* plane = d.images.plane_ptr(i, ch);
      const double amp = gain * colour[std::size_t(label)][std::size_t(ch)];
      for (Index y = 0; y < cfg.height; ++y)
        for (Index x = 0; x < cfg.width; ++x) {
          const double r2 = (double(y) - y0) * (double(y) - y0) + (double(x) - x0) * (double(x) - x0);
          plane[y * cfg.width + x] = float(amp * std::exp(-r2 / (2 * sigma * sigma)) + cfg.noise * gauss(rng));
        }
    }
  }
  return d;
}

Dataset load_dataset(const std::string& images_path, const std::string& labels_path, Index classes,
                     const std::string& split) {
  Dataset d;
  d.images = read_tensor<float>(images_path);
  const Tensor4<double> raw = read_tensor<double>(labels_path);
  if (raw.size() != d.images.batch())
    throw ConfigError("dataset: label tensor holds " + std::to_string(raw.size()) + " values for " +
                      std::to_string(d.images.batch()) + " images");
  d.labels.resize(std::size_t(raw.size()));
  for (Index i = 0; i < raw.size(); ++i) {
    const double v = raw.data()[i];
    if (v != std::floor(v)) throw ConfigError("dataset: non-integer label");
    d.labels[std::size_t(i)] = int(v);
  }
  d.classes = classes;
  d.split = split;
  d.validate();
  return d;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("train: lr must be >= 0");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (lr_step < 1 || lr_factor <= 0.0) throw ConfigError("train: invalid lr schedule");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0, 1)");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("train: dropout must be in [0, 1)");
}

double TrainConfig::learning_rate(Index epoch) const {
  return lr / std::pow(lr_factor, double((epoch - 1) / lr_step));
}

std::vector<double> TrainResult::train_loss() const {
  std::vector<double> out;
  for (const auto& m : history)
    if (m.split == "train") out.push_back(m.loss);
  return out;
}

double TrainResult::final_train_accuracy() const {
  for (auto it = history.rbegin(); it != history.rend(); ++it)
    if (it->split == "train") return 1.0 - it->top1;
  return 0.0;
}

namespace {

template <typename Scalar>
void hits(const Scalar* z, Index classes, int label, Index& top1, Index& top5) {
  Index above = 0;
  for (Index c = 0; c < classes; ++c)
    if (z[c] > z[label] || (z[c] == z[label] && c < label)) ++above;
  if (above == 0) ++top1;
  if (above < std::min<Index>(5, classes)) ++top5;
}

}  // namespace

void count_hits(const float* z, Index classes, int label, Index& top1, Index& top5) {
  hits(z, classes, label, top1, top5);
}
void count_hits(const double* z, Index classes, int label, Index& top1, Index& top5) {
  hits(z, classes, label, top1, top5);
}

std::string metrics_csv_header() { return "epoch,split,loss,top1,top5"; }

std::string metrics_csv_line(const EpochMetrics& m) {
  std::ostringstream os;
  os.precision(9);
  os << m.epoch << "," << m.split << "," << m.loss << "," << m.top1 << "," << m.top5;
  return os.str();
}

}  // namespace sicnet
