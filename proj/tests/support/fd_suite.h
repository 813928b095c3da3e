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


// Central finite-difference oracle for the autodiff engine, plus the suite
// that runs it over every differentiable op and loss.

#ifndef ESPLIT_TESTS_FD_SUITE_H_
#define ESPLIT_TESTS_FD_SUITE_H_

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "esplit/autodiff.h"
#include "esplit/model.h"

namespace esplit::testing {

inline constexpr double kFdStep = 1e-4;
inline constexpr double kFdTolerance = 1e-4;
// Denominator floor of the relative error, so that vanishing gradients
// compare on an absolute scale.
inline constexpr double kFdFloor = 1e-6;

// Builds a scalar loss from graph leaves; `params` is the store the leaves
// of Graph::param are bound to.
using LossFn = std::function<ad::Var(ad::Graph& g, const std::vector<ad::Var>& inputs, const ParamStore& params)>;

struct FdResult {
  double max_rel_error = 0;  // worst tensor, ||analytic - numeric|| / max(norms, floor)
  int64_t entries_checked = 0;
  std::string worst;          // name of the worst tensor
};

// Differentiates `loss` with respect to every input and every trainable
// parameter. At most `max_entries` coordinates per tensor are perturbed,
// chosen by `rng`.
FdResult check_gradients(const LossFn& loss, const std::vector<Tensor>& inputs, const ParamStore& params,
                         std::mt19937_64& rng, int max_entries = 48, double step = kFdStep);

struct OpCheck {
  std::string op;
  int instances = 0;
  double max_rel_error = 0;
  bool passed() const { return max_rel_error < kFdTolerance; }
};

// Every op, `instances` random instances each.
std::vector<OpCheck> run_gradient_suite(int instances, uint64_t seed);

// Small teacher and entropic student for loss-level checks.
Checkpoint tiny_teacher(uint64_t seed);
Checkpoint tiny_student(const Checkpoint& teacher, uint64_t seed);

}  // namespace esplit::testing

#endif  // ESPLIT_TESTS_FD_SUITE_H_
