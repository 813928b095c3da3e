// Copyright 2026 The esplit Authors. All Rights Reserved.
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

#include "esplit/optim.h"

#include <cmath>

#include "esplit/error.h"

namespace esplit {
namespace {

Parameter& lookup(ParamStore& params, const std::string& name, const Tensor& grad) {
  auto it = params.find(name);
  if (it == params.end()) fail(ErrorKind::kInvalidArgument, "gradient for unknown parameter " + name);
  if (it->second.value.shape() != grad.shape()) {
    fail(ErrorKind::kShape, "gradient shape " + shape_str(grad.shape()) + " does not match parameter " +
                                name + " " + shape_str(it->second.value.shape()));
  }
  if (!grad.all_finite()) fail(ErrorKind::kNumeric, "non-finite gradient for parameter " + name);
  return it->second;
}

}  // namespace

void Sgd::step(ParamStore& params, const GradMap& grads) {
  for (const auto& [name, grad] : grads) {
    Parameter& p = lookup(params, name, grad);
    if (!p.trainable) continue;
    auto [it, fresh] = velocity_.try_emplace(name, grad.shape(), 0.0);
    Tensor& v = it->second;
    for (int64_t i = 0; i < grad.numel(); ++i) {
      double g = grad[i] + opts_.weight_decay * p.value[i];
      if (opts_.momentum != 0.0) {
        v[i] = fresh ? g : opts_.momentum * v[i] + g;
        g = v[i];
      }
      p.value[i] -= opts_.lr * g;
    }
  }
}

void Adam::step(ParamStore& params, const GradMap& grads) {
  for (const auto& [name, grad] : grads) {
    Parameter& p = lookup(params, name, grad);
    if (!p.trainable) continue;
    Moments& s = state_[name];
    if (s.t == 0) {
      s.m = Tensor(grad.shape(), 0.0);
      s.v = Tensor(grad.shape(), 0.0);
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(s.t));
    for (int64_t i = 0; i < grad.numel(); ++i) {
      const double g = grad[i] + opts_.weight_decay * p.value[i];
      s.m[i] = opts_.beta1 * s.m[i] + (1.0 - opts_.beta1) * g;
      s.v[i] = opts_.beta2 * s.v[i] + (1.0 - opts_.beta2) * g * g;
      p.value[i] -= opts_.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + opts_.eps);
    }
  }
}

}  // namespace esplit
