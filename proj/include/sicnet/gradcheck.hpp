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

// Central finite-difference verification of hand-written backward passes.
//
// The scalar objective is L = <f(x), R> for a fixed random R, so the analytic
// gradients are whatever backward(R) produces. Each checked element is
// compared as |a - n| / max(|a|, |n|, 1).

#pragma once

#include "sicnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace sicnet {

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  Index max_per_group = 0;  // 0: every element
  std::uint64_t seed = 11;
};

struct GroupError {
  std::string name;
  double max_rel_err = 0;
  Index checked = 0;
};

struct GradcheckReport {
  std::vector<GroupError> groups;
  double tolerance = 1e-6;

  double max_rel_err() const {
    double m = 0;
    for (const auto& g : groups) m = std::max(m, g.max_rel_err);
    return m;
  }
  bool passed() const { return max_rel_err() < tolerance; }
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1.0});
}

/// `forward()` must recompute the output from the current contents of
/// `input` and the parameter tensors; `backward(R)` must return d<f, R>/d input
/// and fill every ParamRef::grad.
inline GradcheckReport gradcheck(const std::function<Tensor4<double>()>& forward,
                                 const std::function<Tensor4<double>(const Tensor4<double>&)>& backward,
                                 Tensor4<double>& input, const std::vector<ParamRef<double>>& params,
                                 const GradcheckOptions& options = {}) {
  std::mt19937_64 rng(options.seed);
  const Tensor4<double> y = forward();
  const Tensor4<double> r = Tensor4<double>::Gaussian(y.shape(), rng);
  const Tensor4<double> grad_input = backward(r);
  std::vector<Tensor4<double>> grads;
  for (const auto& p : params) grads.push_back(*p.grad);

  const auto objective = [&] { return dot(forward(), r); };
  const auto check = [&](const std::string& name, Tensor4<double>& value, const Tensor4<double>& analytic) {
    GroupError g{name};
    std::vector<Index> idx(std::size_t(value.size()));
    for (Index i = 0; i < value.size(); ++i) idx[std::size_t(i)] = i;
    if (options.max_per_group > 0 && value.size() > options.max_per_group) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(std::size_t(options.max_per_group));
    }
    for (Index i : idx) {
      double& w = value.data()[i];
      const double saved = w;
      w = saved + options.step;
      const double up = objective();
      w = saved - options.step;
      const double down = objective();
      w = saved;
      const double numeric = (up - down) / (2 * options.step);
      g.max_rel_err = std::max(g.max_rel_err, relative_error(analytic.data()[i], numeric));
      ++g.checked;
    }
    return g;
  };

  GradcheckReport report;
  report.tolerance = options.tolerance;
  report.groups.push_back(check("input", input, grad_input));
  for (std::size_t i = 0; i < params.size(); ++i) report.groups.push_back(check(params[i].name, *params[i].value, grads[i]));
  return report;
}

/// Runs gradcheck over one module in train mode.
inline GradcheckReport gradcheck_module(Module<double>& m, Tensor4<double> input, const GradcheckOptions& options = {}) {
  std::vector<ParamRef<double>> params;
  m.parameters("", params);
  return gradcheck([&] { return m.forward(input, Mode::Train); }, [&](const Tensor4<double>& r) { return m.backward(r); },
                   input, params, options);
}

/// Whole network, dropout must be zero so repeated forwards agree.
inline GradcheckReport gradcheck_network(Network<double>& net, Tensor4<double> input,
                                         const GradcheckOptions& options = {}) {
  return gradcheck([&] { return net.forward(input, Mode::Train); },
                   [&](const Tensor4<double>& r) { return net.backward(r); }, input, net.parameters(), options);
}

}  // namespace sicnet
