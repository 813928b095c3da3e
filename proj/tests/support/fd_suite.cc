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


#include "fd_suite.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "esplit/entropy_model.h"
#include "esplit/layers.h"
#include "esplit/quantizer.h"
#include "esplit/training.h"

namespace esplit::testing {
namespace {

using ad::Var;

double eval_loss(const LossFn& loss, const std::vector<Tensor>& inputs, const ParamStore& params) {
  ad::Graph g(false);
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.input(t));
  return loss(g, vars, params).value().item();
}

std::vector<int64_t> pick(int64_t n, int max_entries, std::mt19937_64& rng) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  if (n > max_entries) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<size_t>(max_entries));
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0, na = 0, nn = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), kFdFloor});
}

Tensor uniform(const Shape& s, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(s);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Magnitudes in [lo, hi] with random signs: keeps kinked ops off their kink.
Tensor away_from_zero(const Shape& s, double lo, double hi, std::mt19937_64& rng) {
  Tensor t = uniform(s, lo, hi, rng);
  std::bernoulli_distribution coin(0.5);
  for (double& v : t.data()) v = coin(rng) ? v : -v;
  return t;
}

// Scalar probe sum(y * w) with a fixed random w: checks the whole Jacobian
// along one direction per instance.
Var probe(ad::Graph& g, Var y, const Tensor& w) { return ad::sum(ad::mul(y, g.input(w))); }

struct Instance {
  LossFn loss;
  std::vector<Tensor> inputs;
  ParamStore params;
};

using Maker = std::function<Instance(std::mt19937_64&)>;

// Ops whose output is probed directly: `make_inputs` gives the inputs and
// `apply` the op.
Maker unary_probe(std::function<Tensor(std::mt19937_64&)> make_input, std::function<Var(Var)> apply) {
  return [=](std::mt19937_64& rng) {
    Instance in;
    in.inputs = {make_input(rng)};
    ad::Graph shape_g(false);
    const Shape out = apply(shape_g.input(in.inputs[0])).shape();
    const Tensor w = uniform(out, -1, 1, rng);
    in.loss = [=](ad::Graph& g, const std::vector<Var>& v, const ParamStore&) { return probe(g, apply(v[0]), w); };
    return in;
  };
}

Maker binary_probe(std::function<std::vector<Tensor>(std::mt19937_64&)> make_inputs,
                   std::function<Var(const std::vector<Var>&)> apply) {
  return [=](std::mt19937_64& rng) {
    Instance in;
    in.inputs = make_inputs(rng);
    ad::Graph shape_g(false);
    std::vector<Var> sv;
    for (const Tensor& t : in.inputs) sv.push_back(shape_g.input(t));
    const Tensor w = uniform(apply(sv).shape(), -1, 1, rng);
    in.loss = [=](ad::Graph& g, const std::vector<Var>& v, const ParamStore&) { return probe(g, apply(v), w); };
    return in;
  };
}

std::vector<int> random_labels(int n, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, k - 1);
  std::vector<int> l(static_cast<size_t>(n));
  for (int& v : l) v = d(rng);
  return l;
}

std::vector<std::pair<std::string, Maker>> makers() {
  std::vector<std::pair<std::string, Maker>> m;
  auto u = [](Shape s, double lo, double hi) {
    return [=](std::mt19937_64& r) { return uniform(s, lo, hi, r); };
  };
  auto az = [](Shape s, double lo, double hi) {
    return [=](std::mt19937_64& r) { return away_from_zero(s, lo, hi, r); };
  };

  m.push_back({"conv2d", [](std::mt19937_64& rng) {
                 Instance in;
                 const bool strided = std::bernoulli_distribution(0.5)(rng);
                 in.inputs = {uniform({2, 3, 5, 5}, -1, 1, rng), uniform({4, 3, 3, 3}, -1, 1, rng),
                              uniform({4}, -1, 1, rng)};
                 const int stride = strided ? 2 : 1, pad = strided ? 0 : 1;
                 const Tensor w = uniform({2, 4, strided ? 2 : 5, strided ? 2 : 5}, -1, 1, rng);
                 in.loss = [=](ad::Graph& g, const std::vector<Var>& v, const ParamStore&) {
                   return probe(g, ad::conv2d(v[0], v[1], v[2], stride, pad), w);
                 };
                 return in;
               }});
  m.push_back({"upsample_nearest", unary_probe(u({2, 3, 3, 3}, -1, 1), [](Var x) { return ad::upsample_nearest(x, 2); })});
  m.push_back({"avgpool2d", unary_probe(u({2, 3, 4, 4}, -1, 1), [](Var x) { return ad::avgpool2d(x, 2); })});
  m.push_back({"linear", binary_probe(
                             [](std::mt19937_64& r) {
                               return std::vector<Tensor>{uniform({3, 5}, -1, 1, r), uniform({4, 5}, -1, 1, r),
                                                          uniform({4}, -1, 1, r)};
                             },
                             [](const std::vector<Var>& v) { return ad::linear(v[0], v[1], v[2]); })});
  m.push_back({"relu", unary_probe(az({3, 7}, 0.05, 1), [](Var x) { return ad::relu(x); })});
  m.push_back({"abs", unary_probe(az({3, 7}, 0.05, 1), [](Var x) { return ad::abs(x); })});
  m.push_back({"exp", unary_probe(u({3, 7}, -1, 1), [](Var x) { return ad::exp(x); })});
  m.push_back({"log", unary_probe(u({3, 7}, 0.5, 2), [](Var x) { return ad::log(x); })});
  m.push_back({"tanh", unary_probe(u({3, 7}, -2, 2), [](Var x) { return ad::tanh(x); })});
  m.push_back({"softplus", unary_probe(u({3, 7}, -3, 3), [](Var x) { return ad::softplus(x); })});
  m.push_back({"sigmoid", unary_probe(u({3, 7}, -3, 3), [](Var x) { return ad::sigmoid(x); })});
  auto pair = [](double lo, double hi, bool b_away) {
    return [=](std::mt19937_64& r) {
      return std::vector<Tensor>{uniform({3, 4}, -1, 1, r),
                                 b_away ? away_from_zero({3, 4}, lo, hi, r) : uniform({3, 4}, lo, hi, r)};
    };
  };
  m.push_back({"add", binary_probe(pair(-1, 1, false), [](const std::vector<Var>& v) { return v[0] + v[1]; })});
  m.push_back({"sub", binary_probe(pair(-1, 1, false), [](const std::vector<Var>& v) { return v[0] - v[1]; })});
  m.push_back({"mul", binary_probe(pair(-1, 1, false), [](const std::vector<Var>& v) { return v[0] * v[1]; })});
  m.push_back({"div", binary_probe(pair(0.5, 2, true), [](const std::vector<Var>& v) { return v[0] / v[1]; })});
  m.push_back({"add_scalar", unary_probe(u({3, 4}, -1, 1), [](Var x) { return ad::add_scalar(x, 0.7); })});
  m.push_back({"mul_scalar", unary_probe(u({3, 4}, -1, 1), [](Var x) { return ad::mul_scalar(x, -1.3); })});
  m.push_back({"reshape", unary_probe(u({2, 3, 4}, -1, 1), [](Var x) { return ad::reshape(x, {6, 4}); })});
  m.push_back({"sum", unary_probe(u({3, 4}, -1, 1), [](Var x) { return ad::reshape(ad::sum(x), {1}); })});
  m.push_back({"mean", unary_probe(u({3, 4}, -1, 1), [](Var x) { return ad::reshape(ad::mean(x), {1}); })});
  m.push_back({"softmax", unary_probe(u({3, 5}, -2, 2), [](Var x) { return ad::softmax(x); })});
  m.push_back({"log_softmax", unary_probe(u({3, 5}, -2, 2), [](Var x) { return ad::log_softmax(x); })});
  m.push_back({"squared_error", [](std::mt19937_64& rng) {
                 Instance in;
                 in.inputs = {uniform({2, 3, 2, 2}, -1, 1, rng), uniform({2, 3, 2, 2}, -1, 1, rng)};
                 in.loss = [](ad::Graph&, const std::vector<Var>& v, const ParamStore&) {
                   return ad::squared_error(v[0], v[1]);
                 };
                 return in;
               }});
  m.push_back({"cross_entropy", [](std::mt19937_64& rng) {
                 Instance in;
                 in.inputs = {uniform({4, 5}, -2, 2, rng)};
                 const std::vector<int> labels = random_labels(4, 5, rng);
                 in.loss = [=](ad::Graph&, const std::vector<Var>& v, const ParamStore&) {
                   return ad::cross_entropy(v[0], labels);
                 };
                 return in;
               }});
  m.push_back({"kl_divergence", [](std::mt19937_64& rng) {
                 Instance in;
                 in.inputs = {uniform({4, 5}, -2, 2, rng), uniform({4, 5}, -2, 2, rng)};
                 in.loss = [](ad::Graph&, const std::vector<Var>& v, const ParamStore&) {
                   return ad::kl_divergence(v[0], v[1]);
                 };
                 return in;
               }});
  for (const bool inverse : {false, true}) {
    m.push_back({inverse ? "igdn" : "gdn", binary_probe(
                                               [](std::mt19937_64& r) {
                                                 return std::vector<Tensor>{away_from_zero({2, 3, 3, 3}, 0.05, 1.5, r),
                                                                            uniform({3}, 0.5, 1.5, r),
                                                                            uniform({3, 3}, 0.05, 0.5, r)};
                                               },
                                               [inverse](const std::vector<Var>& v) {
                                                 return ad::Var(gdn(v[0], v[1], v[2], inverse));
                                               })});
  }
  m.push_back({"noise_quantize", [](std::mt19937_64& rng) {
                 Instance in;
                 in.inputs = {uniform({2, 3}, -2, 2, rng)};
                 const Tensor w = uniform({2, 3}, -1, 1, rng);
                 const uint64_t noise_seed = rng();
                 in.loss = [=](ad::Graph& g, const std::vector<Var>& v, const ParamStore&) {
                   std::mt19937_64 nr(noise_seed);
                   return probe(g, noise_quantize(v[0], nr), w);
                 };
                 return in;
               }});
  m.push_back({"rate_bits", [](std::mt19937_64& rng) {
                 Instance in;
                 FactorizedPrior::init_params(in.params, 2, rng);
                 in.inputs = {uniform({2, 2, 3, 3}, -3, 3, rng)};
                 in.loss = [](ad::Graph& g, const std::vector<Var>& v, const ParamStore& ps) {
                   Var lik = prior_likelihood(g, ps, v[0], 1e-12);
                   return ad::sum(ad::log(lik)) * (-1.0 / std::numbers::ln2);
                 };
                 return in;
               }});
  m.push_back({"encoder_stage", [](std::mt19937_64& rng) {
                 Instance in;
                 const Checkpoint s = tiny_student(tiny_teacher(rng()), rng());
                 for (const auto& [name, p] : s.params) {
                   if (name.rfind("encoder.", 0) == 0) in.params[name] = p;
                 }
                 in.inputs = {uniform({2, 3, 8, 8}, -1, 1, rng)};
                 const Tensor w = uniform({2, 2, 2, 2}, -1, 1, rng);
                 const ModelSpec spec = s.spec;
                 in.loss = [=](ad::Graph& g, const std::vector<Var>& v, const ParamStore& ps) {
                   return probe(g, forward_stages(g, ps, spec, v[0], 0, 1), w);
                 };
                 return in;
               }});
  m.push_back({"decoder_stage", [](std::mt19937_64& rng) {
                 Instance in;
                 const Checkpoint s = tiny_student(tiny_teacher(rng()), rng());
                 for (const auto& [name, p] : s.params) {
                   if (name.rfind("decoder.", 0) == 0) in.params[name] = p;
                 }
                 in.inputs = {uniform({2, 2, 2, 2}, -3, 3, rng)};
                 const Tensor w = uniform({2, 16, 4, 4}, -1, 1, rng);
                 const ModelSpec spec = s.spec;
                 in.loss = [=](ad::Graph& g, const std::vector<Var>& v, const ParamStore& ps) {
                   return probe(g, forward_stages(g, ps, spec, v[0], 1, 2), w);
                 };
                 return in;
               }});
  m.push_back({"rd_loss", [](std::mt19937_64& rng) {
                 // Full stage-1 objective: encoder -> fixed noise -> decoder,
                 // distortion against a target feature plus the prior rate.
                 Instance in;
                 const Checkpoint s = tiny_student(tiny_teacher(rng()), rng());
                 in.params = s.params;
                 in.inputs = {uniform({2, 3, 8, 8}, -1, 1, rng), uniform({2, 16, 4, 4}, -1, 1, rng)};
                 const Tensor noise = uniform({2, 2, 2, 2}, -0.5, 0.5, rng);
                 const double beta = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
                 const Checkpoint student = s;
                 in.loss = [=](ad::Graph& g, const std::vector<Var>& v, const ParamStore& ps) {
                   Checkpoint c = student;
                   c.params = ps;
                   Var z = forward_stages(g, ps, c.spec, v[0], 0, 1);
                   Var zn = z + g.input(noise);
                   return rd_loss(g, c, v[1], zn, beta, 1e-12).loss;
                 };
                 return in;
               }});
  m.push_back({"kd_loss", [](std::mt19937_64& rng) {
                 Instance in;
                 in.inputs = {uniform({4, 5}, -2, 2, rng), uniform({4, 5}, -2, 2, rng)};
                 const std::vector<int> labels = random_labels(4, 5, rng);
                 const double alpha = std::uniform_real_distribution<double>(0, 1)(rng);
                 const double tau = std::uniform_real_distribution<double>(0.5, 4)(rng);
                 in.loss = [=](ad::Graph&, const std::vector<Var>& v, const ParamStore&) {
                   return kd_loss(v[0], v[1], labels, alpha, tau);
                 };
                 return in;
               }});
  return m;
}

}  // namespace

FdResult check_gradients(const LossFn& loss, const std::vector<Tensor>& inputs, const ParamStore& params,
                         std::mt19937_64& rng, int max_entries, double step) {
  ad::Graph g;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.input(t, true));
  g.backward(loss(g, vars, params));
  const GradMap pg = g.param_grads();

  FdResult r;
  auto compare = [&](const std::string& name, const Tensor& analytic, auto&& perturbed_loss, int64_t n) {
    std::vector<double> a, num;
    for (int64_t i : pick(n, max_entries, rng)) {
      a.push_back(analytic.empty() ? 0.0 : analytic[i]);
      num.push_back((perturbed_loss(i, step) - perturbed_loss(i, -step)) / (2 * step));
    }
    const double e = rel_error(a, num);
    r.entries_checked += static_cast<int64_t>(a.size());
    if (e >= r.max_rel_error) {
      r.max_rel_error = e;
      r.worst = name;
    }
  };

  for (size_t k = 0; k < inputs.size(); ++k) {
    compare("input" + std::to_string(k), g.grad(vars[k]),
            [&](int64_t i, double h) {
              std::vector<Tensor> in = inputs;
              in[k][i] += h;
              return eval_loss(loss, in, params);
            },
            inputs[k].numel());
  }
  for (const auto& [name, p] : params) {
    if (!p.trainable) continue;
    const auto it = pg.find(name);
    compare(name, it == pg.end() ? Tensor() : it->second,
            [&](int64_t i, double h) {
              ParamStore ps = params;
              ps[name].value[i] += h;
              return eval_loss(loss, inputs, ps);
            },
            p.value.numel());
  }
  return r;
}

Checkpoint tiny_teacher(uint64_t seed) {
  ArchOptions a;
  a.image_size = 8;
  Checkpoint t;
  t.spec = teacher_spec(a);
  t.stage = StageTag::kTeacher;
  std::mt19937_64 rng(seed);
  init_params(t.spec, t.params, rng);
  return t;
}

Checkpoint tiny_student(const Checkpoint& teacher, uint64_t seed) {
  ArchOptions a;
  a.image_size = teacher.spec.in_h;
  a.latent_channels = 2;
  a.encoder_channels = 3;
  a.decoder_channels = 3;
  std::mt19937_64 rng(seed);
  const int features = static_cast<int>(teacher_feature_shape(teacher.spec)[0]);
  return build_student(teacher, encoder_stage(a), decoder_stage(a, features), rng, true);
}

std::vector<OpCheck> run_gradient_suite(int instances, uint64_t seed) {
  std::vector<OpCheck> out;
  std::mt19937_64 rng(seed);
  for (const auto& [name, make] : makers()) {
    OpCheck c;
    c.op = name;
    for (int k = 0; k < instances; ++k) {
      const Instance in = make(rng);
      const FdResult r = check_gradients(in.loss, in.inputs, in.params, rng);
      c.max_rel_error = std::max(c.max_rel_error, r.max_rel_error);
      ++c.instances;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace esplit::testing
