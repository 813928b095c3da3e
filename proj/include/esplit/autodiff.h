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

// Tape-based reverse-mode differentiation over dense float64 tensors.
//
// A Graph is built by running the forward computation: every op evaluates
// eagerly and records a closure that maps the output gradient back onto its
// inputs. Node ids increase in creation order, so walking the tape backwards
// is a valid topological order. Gradients accumulate with +=, which gives the
// correct sum over paths when a value fans out to several consumers.

#ifndef ESPLIT_AUTODIFF_H_
#define ESPLIT_AUTODIFF_H_

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "esplit/tensor.h"

namespace esplit {

struct Parameter {
  Tensor value;
  bool trainable = true;
};

// Ordered by name so iteration (and therefore optimizer updates, hashing and
// serialization) is deterministic.
using ParamStore = std::map<std::string, Parameter>;
using GradMap = std::map<std::string, Tensor>;

namespace ad {

class Graph;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

// grad_in[k] is null when input k does not need a gradient. Implementations
// must accumulate into the slots, never overwrite.
using GradSlots = std::span<Tensor* const>;
using BackwardFn = std::function<void(const Tensor& grad_out, GradSlots grad_in)>;

class Graph {
 public:
  Graph() = default;
  // With gradients disabled every leaf is constant and no closures are kept.
  explicit Graph(bool grad_enabled) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf holding a data value. Inputs only receive gradients on request
  // (gradient checks, rate gradients with respect to latents).
  Var input(Tensor value, bool requires_grad = false);

  // Leaf bound to a named parameter. Repeated calls with the same name return
  // the same node. Frozen (non-trainable) parameters never get gradients.
  Var param(const ParamStore& store, const std::string& name);

  // Appends an op node. `backward` is dropped when no input needs a gradient.
  Var record(const char* op, std::vector<Var> inputs, Tensor value, BackwardFn backward);

  bool requires_grad(Var v) const;
  bool any_requires_grad(std::initializer_list<Var> vars) const;

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  void backward(Var loss);

  // Gradient of the last backward() with respect to v; zeros if unreachable.
  Tensor grad(Var v) const;

  // Gradients for every trainable parameter touched by this graph.
  GradMap param_grads() const;

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const char* op(int id) const { return nodes_[static_cast<size_t>(id)].op; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "";
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  void check_owner(Var v) const;

  std::deque<Node> nodes_;
  std::map<std::string, int> param_ids_;
  bool grad_enabled_ = true;
};

// ---- Operator set -----------------------------------------------------------
// Convolutions and pooling use NCHW layout.

Var conv2d(Var x, Var weight, std::optional<Var> bias, int stride, int pad);
Var upsample_nearest(Var x, int factor);
Var avgpool2d(Var x, int kernel);
Var linear(Var x, Var weight, std::optional<Var> bias);

Var relu(Var x);
Var abs(Var x);
Var exp(Var x);
Var log(Var x);
Var tanh(Var x);
Var softplus(Var x);
Var sigmoid(Var x);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add_scalar(Var x, double s);
Var mul_scalar(Var x, double s);

Var reshape(Var x, Shape shape);
Var sum(Var x);
Var mean(Var x);

// Row-wise over the last axis of a [N, K] tensor.
Var softmax(Var logits);
Var log_softmax(Var logits);

// sum((a - b)^2)
Var squared_error(Var a, Var b);
// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const int> labels);
// Mean over rows of KL(softmax(p_logits) || softmax(q_logits)).
Var kl_divergence(Var p_logits, Var q_logits);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator*(Var a, double s) { return mul_scalar(a, s); }
inline Var operator*(double s, Var a) { return mul_scalar(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }

}  // namespace ad
}  // namespace esplit

#endif  // ESPLIT_AUTODIFF_H_
