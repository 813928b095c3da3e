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

#ifndef ESPLIT_OPTIM_H_
#define ESPLIT_OPTIM_H_

#include <map>
#include <memory>
#include <string>

#include "esplit/autodiff.h"

namespace esplit {

// Updates every parameter named in `grads`. Parameters absent from `grads`
// (frozen, or untouched by the graph) are left bit-identical.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParamStore& params, const GradMap& grads) = 0;
  virtual void set_lr(double lr) = 0;
  virtual double lr() const = 0;
};

struct SgdOptions {
  double lr = 1e-2;
  double momentum = 0.0;
  // L2 decay: weight_decay * p is added to the gradient before momentum.
  double weight_decay = 0.0;
};

class Sgd : public Optimizer {
 public:
  explicit Sgd(SgdOptions opts) : opts_(opts) {}
  void step(ParamStore& params, const GradMap& grads) override;
  void set_lr(double lr) override { opts_.lr = lr; }
  double lr() const override { return opts_.lr; }

 private:
  SgdOptions opts_;
  std::map<std::string, Tensor> velocity_;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class Adam : public Optimizer {
 public:
  explicit Adam(AdamOptions opts) : opts_(opts) {}
  void step(ParamStore& params, const GradMap& grads) override;
  void set_lr(double lr) override { opts_.lr = lr; }
  double lr() const override { return opts_.lr; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
    long t = 0;
  };
  AdamOptions opts_;
  std::map<std::string, Moments> state_;
};

}  // namespace esplit

#endif  // ESPLIT_OPTIM_H_
