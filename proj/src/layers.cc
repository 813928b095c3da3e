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

#include "esplit/layers.h"

#include <cmath>
#include <nlohmann/json.hpp>
#include <set>

#include "esplit/error.h"
#include "esplit/hashing.h"

namespace esplit {
namespace {

using nlohmann::json;

constexpr struct {
  LayerKind kind;
  const char* name;
} kKindNames[] = {
    {LayerKind::kConv, "conv"},         {LayerKind::kGdn, "gdn"},
    {LayerKind::kIgdn, "igdn"},         {LayerKind::kRelu, "relu"},
    {LayerKind::kUpsample, "upsample"}, {LayerKind::kResBlock, "resblock"},
    {LayerKind::kGlobalAvgPool, "gap"}, {LayerKind::kLinear, "linear"},
};

std::string layer_prefix(const StageSpec& stage, size_t i) {
  return stage.name + "." + std::to_string(i) + ".";
}

bool has_projection(const LayerSpec& l) { return l.in_ch != l.out_ch || l.stride != 1; }

int conv_out(int size, int k, int s, int p) { return (size + 2 * p - k) / s + 1; }

// Per-sample activation shape while walking the layer list.
struct Activation {
  int c = 0, h = 0, w = 0;
  bool flat = false;
  Shape shape() const { return flat ? Shape{c} : Shape{c, h, w}; }
};

[[noreturn]] void layer_error(const StageSpec& s, size_t i, const std::string& what) {
  fail(ErrorKind::kShape, "layer " + s.name + "." + std::to_string(i) + ": " + what);
}

// Advances `a` through one layer, validating channels. Returns the layer MACs.
int64_t step_layer(const StageSpec& s, size_t i, Activation& a) {
  const LayerSpec& l = s.layers[i];
  auto need_spatial = [&] {
    if (a.flat) layer_error(s, i, "needs a spatial input");
  };
  auto need_channels = [&](int c) {
    if (a.c != c) {
      layer_error(s, i, "expects " + std::to_string(c) + " channels, gets " + std::to_string(a.c));
    }
  };
  switch (l.kind) {
    case LayerKind::kConv: {
      need_spatial();
      need_channels(l.in_ch);
      if (l.kernel < 1 || l.stride < 1 || l.pad < 0) layer_error(s, i, "bad conv geometry");
      const int h = conv_out(a.h, l.kernel, l.stride, l.pad), w = conv_out(a.w, l.kernel, l.stride, l.pad);
      if (h <= 0 || w <= 0) layer_error(s, i, "output collapses to zero size");
      a = {l.out_ch, h, w, false};
      return int64_t{h} * w * l.out_ch * l.in_ch * l.kernel * l.kernel;
    }
    case LayerKind::kGdn:
    case LayerKind::kIgdn:
      need_spatial();
      need_channels(l.in_ch);
      if (l.out_ch != l.in_ch) layer_error(s, i, "GDN cannot change channel count");
      return int64_t{a.h} * a.w * a.c * a.c;
    case LayerKind::kRelu:
      return 0;
    case LayerKind::kUpsample:
      need_spatial();
      if (l.stride < 1) layer_error(s, i, "upsample factor must be >= 1");
      a.h *= l.stride;
      a.w *= l.stride;
      return 0;
    case LayerKind::kResBlock: {
      need_spatial();
      need_channels(l.in_ch);
      if (l.stride < 1) layer_error(s, i, "bad stride");
      const int h = conv_out(a.h, 3, l.stride, 1), w = conv_out(a.w, 3, l.stride, 1);
      const int64_t hw = int64_t{h} * w;
      int64_t macs = hw * l.out_ch * l.in_ch * 9 + hw * l.out_ch * l.out_ch * 9;
      if (has_projection(l)) macs += hw * l.out_ch * l.in_ch;
      a = {l.out_ch, h, w, false};
      return macs;
    }
    case LayerKind::kGlobalAvgPool:
      need_spatial();
      a.flat = true;
      return 0;
    case LayerKind::kLinear:
      if (!a.flat) layer_error(s, i, "linear needs a pooled input");
      need_channels(l.in_ch);
      a.c = l.out_ch;
      return int64_t{l.in_ch} * l.out_ch;
  }
  return 0;
}

double inverse_softplus(double v) { return std::log(std::expm1(std::max(v, 1e-30))); }

void he_init(Tensor& t, int64_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : t.data()) v = nd(rng);
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
  for (const auto& kn : kKindNames) {
    if (name == kn.name) return kn.kind;
  }
  fail(ErrorKind::kFormat, "unknown layer kind '" + name + "'");
}

void validate_spec(const ModelSpec& spec) {
  if (spec.in_ch <= 0 || spec.in_h <= 0 || spec.in_w <= 0) fail(ErrorKind::kShape, "model input shape must be positive");
  if (spec.stages.empty()) fail(ErrorKind::kInvalidArgument, "model has no stages");
  if (spec.mobile_stages < 1 || spec.mobile_stages >= static_cast<int>(spec.stages.size())) {
    fail(ErrorKind::kInvalidArgument, "split marker must leave at least one stage on each side");
  }
  std::set<std::string> names;
  Activation a{spec.in_ch, spec.in_h, spec.in_w, false};
  for (const StageSpec& s : spec.stages) {
    if (s.name.empty() || !names.insert(s.name).second) {
      fail(ErrorKind::kInvalidArgument, "stage names must be unique and non-empty: '" + s.name + "'");
    }
    for (size_t i = 0; i < s.layers.size(); ++i) step_layer(s, i, a);
  }
}

Shape stage_output_shape(const ModelSpec& spec, int stage) {
  if (stage < 0 || stage >= static_cast<int>(spec.stages.size())) fail(ErrorKind::kInvalidArgument, "stage index out of range");
  Activation a{spec.in_ch, spec.in_h, spec.in_w, false};
  for (int si = 0; si <= stage; ++si) {
    const StageSpec& s = spec.stages[static_cast<size_t>(si)];
    for (size_t i = 0; i < s.layers.size(); ++i) step_layer(s, i, a);
  }
  return a.shape();
}

int stage_index(const ModelSpec& spec, const std::string& name) {
  for (size_t i = 0; i < spec.stages.size(); ++i) {
    if (spec.stages[i].name == name) return static_cast<int>(i);
  }
  fail(ErrorKind::kInvalidArgument, "model has no stage '" + name + "'");
}

std::string spec_to_json(const ModelSpec& spec) {
  json j;
  j["in_ch"] = spec.in_ch;
  j["in_h"] = spec.in_h;
  j["in_w"] = spec.in_w;
  j["mobile_stages"] = spec.mobile_stages;
  j["stages"] = json::array();
  for (const StageSpec& s : spec.stages) {
    json js;
    js["name"] = s.name;
    js["layers"] = json::array();
    for (const LayerSpec& l : s.layers) {
      js["layers"].push_back({{"kind", layer_kind_name(l.kind)},
                              {"in", l.in_ch},
                              {"out", l.out_ch},
                              {"k", l.kernel},
                              {"s", l.stride},
                              {"p", l.pad}});
    }
    j["stages"].push_back(std::move(js));
  }
  return j.dump();
}

ModelSpec spec_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ModelSpec spec;
    spec.in_ch = j.at("in_ch").get<int>();
    spec.in_h = j.at("in_h").get<int>();
    spec.in_w = j.at("in_w").get<int>();
    spec.mobile_stages = j.at("mobile_stages").get<int>();
    for (const json& js : j.at("stages")) {
      StageSpec s;
      s.name = js.at("name").get<std::string>();
      for (const json& jl : js.at("layers")) {
        s.layers.push_back({layer_kind_from_name(jl.at("kind").get<std::string>()), jl.at("in").get<int>(),
                            jl.at("out").get<int>(), jl.at("k").get<int>(), jl.at("s").get<int>(),
                            jl.at("p").get<int>()});
      }
      spec.stages.push_back(std::move(s));
    }
    validate_spec(spec);
    return spec;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed model spec: ") + e.what());
  }
}

std::string spec_hash(const ModelSpec& spec) { return sha256_hex(spec_to_json(spec)); }

std::vector<std::pair<std::string, Shape>> spec_parameters(const ModelSpec& spec) {
  std::vector<std::pair<std::string, Shape>> out;
  for (const StageSpec& s : spec.stages) {
    for (size_t i = 0; i < s.layers.size(); ++i) {
      const LayerSpec& l = s.layers[i];
      const std::string p = layer_prefix(s, i);
      switch (l.kind) {
        case LayerKind::kConv:
          out.emplace_back(p + "weight", Shape{l.out_ch, l.in_ch, l.kernel, l.kernel});
          out.emplace_back(p + "bias", Shape{l.out_ch});
          break;
        case LayerKind::kGdn:
        case LayerKind::kIgdn:
          out.emplace_back(p + "beta_raw", Shape{l.in_ch});
          out.emplace_back(p + "gamma_raw", Shape{l.in_ch, l.in_ch});
          break;
        case LayerKind::kResBlock:
          out.emplace_back(p + "conv1.weight", Shape{l.out_ch, l.in_ch, 3, 3});
          out.emplace_back(p + "conv1.bias", Shape{l.out_ch});
          out.emplace_back(p + "conv2.weight", Shape{l.out_ch, l.out_ch, 3, 3});
          out.emplace_back(p + "conv2.bias", Shape{l.out_ch});
          if (has_projection(l)) {
            out.emplace_back(p + "proj.weight", Shape{l.out_ch, l.in_ch, 1, 1});
            out.emplace_back(p + "proj.bias", Shape{l.out_ch});
          }
          break;
        case LayerKind::kLinear:
          out.emplace_back(p + "weight", Shape{l.out_ch, l.in_ch});
          out.emplace_back(p + "bias", Shape{l.out_ch});
          break;
        default:
          break;
      }
    }
  }
  return out;
}

int64_t count_params(const ModelSpec& spec, Side side) {
  validate_spec(spec);
  int64_t total = 0;
  for (size_t si = 0; si < spec.stages.size(); ++si) {
    const bool mobile = static_cast<int>(si) < spec.mobile_stages;
    if ((side == Side::kMobile && !mobile) || (side == Side::kServer && mobile)) continue;
    ModelSpec one;
    one.stages = {spec.stages[si]};
    for (const auto& [name, shape] : spec_parameters(one)) total += shape_numel(shape);
  }
  return total;
}

int64_t count_stage_macs(const ModelSpec& spec, int first_stage, int end_stage) {
  Activation a{spec.in_ch, spec.in_h, spec.in_w, false};
  int64_t macs = 0;
  for (int si = 0; si < end_stage && si < static_cast<int>(spec.stages.size()); ++si) {
    const StageSpec& s = spec.stages[static_cast<size_t>(si)];
    for (size_t i = 0; i < s.layers.size(); ++i) {
      const int64_t m = step_layer(s, i, a);
      if (si >= first_stage) macs += m;
    }
  }
  return macs;
}

int64_t count_macs(const ModelSpec& spec, Side side) {
  validate_spec(spec);
  const int n = static_cast<int>(spec.stages.size());
  switch (side) {
    case Side::kMobile: return count_stage_macs(spec, 0, spec.mobile_stages);
    case Side::kServer: return count_stage_macs(spec, spec.mobile_stages, n);
    case Side::kAll: return count_stage_macs(spec, 0, n);
  }
  return 0;
}

void init_stage_params(const ModelSpec& spec, int stage, ParamStore& store, std::mt19937_64& rng) {
  ModelSpec one;
  one.stages = {spec.stages.at(static_cast<size_t>(stage))};
  for (const auto& [name, shape] : spec_parameters(one)) {
    Tensor t(shape, 0.0);
    const std::string field = name.substr(name.rfind('.') + 1);
    if (field == "weight") {
      // Residual branches start at zero so each block begins as its skip path.
      if (!name.ends_with("conv2.weight")) he_init(t, shape_numel(shape) / shape[0], rng);
    } else if (field == "beta_raw") {
      for (double& v : t.data()) v = inverse_softplus(1.0 - kGdnBetaMin);
    } else if (field == "gamma_raw") {
      const int64_t C = shape[0];
      for (int64_t r = 0; r < C; ++r) {
        for (int64_t c = 0; c < C; ++c) t[r * C + c] = (r == c) ? inverse_softplus(0.1) : -8.0;
      }
    }
    store[name] = {std::move(t), true};
  }
}

void init_params(const ModelSpec& spec, ParamStore& store, std::mt19937_64& rng) {
  validate_spec(spec);
  for (size_t si = 0; si < spec.stages.size(); ++si) init_stage_params(spec, static_cast<int>(si), store, rng);
}

ad::Var forward_stages(ad::Graph& g, const ParamStore& store, const ModelSpec& spec, ad::Var x, int first,
                       int end) {
  if (first < end) {
    const Shape want = first == 0 ? Shape{spec.in_ch, spec.in_h, spec.in_w} : stage_output_shape(spec, first - 1);
    const Shape& got = x.shape();
    if (got.size() != want.size() + 1 || !std::equal(want.begin(), want.end(), got.begin() + 1)) {
      fail(ErrorKind::kShape, "stage " + spec.stages.at(static_cast<size_t>(first)).name + " expects [N, " +
                                  shape_str(want) + "] input, got " + shape_str(got));
    }
  }
  for (int si = first; si < end; ++si) {
    const StageSpec& s = spec.stages.at(static_cast<size_t>(si));
    for (size_t i = 0; i < s.layers.size(); ++i) {
      const LayerSpec& l = s.layers[i];
      const std::string p = layer_prefix(s, i);
      auto P = [&](const char* field) { return g.param(store, p + field); };
      switch (l.kind) {
        case LayerKind::kConv:
          x = ad::conv2d(x, P("weight"), P("bias"), l.stride, l.pad);
          break;
        case LayerKind::kGdn:
        case LayerKind::kIgdn:
          x = gdn_from_store(g, store, p, x, l.kind == LayerKind::kIgdn);
          break;
        case LayerKind::kRelu:
          x = ad::relu(x);
          break;
        case LayerKind::kUpsample:
          x = ad::upsample_nearest(x, l.stride);
          break;
        case LayerKind::kResBlock: {
          ad::Var y = ad::relu(ad::conv2d(x, P("conv1.weight"), P("conv1.bias"), l.stride, 1));
          y = ad::conv2d(y, P("conv2.weight"), P("conv2.bias"), 1, 1);
          ad::Var skip = has_projection(l) ? ad::conv2d(x, P("proj.weight"), P("proj.bias"), l.stride, 0) : x;
          x = ad::relu(y + skip);
          break;
        }
        case LayerKind::kGlobalAvgPool: {
          const Shape& sh = x.shape();
          if (sh.size() != 4 || sh[2] != sh[3]) fail(ErrorKind::kShape, "global pool needs square [N,C,H,W]");
          x = ad::reshape(ad::avgpool2d(x, static_cast<int>(sh[2])), {sh[0], sh[1]});
          break;
        }
        case LayerKind::kLinear:
          x = ad::linear(x, P("weight"), P("bias"));
          break;
      }
    }
  }
  return x;
}

// ---- GDN ------------------------------------------------------------------------

GdnRaw gdn_raw_from(const GdnParams& p) {
  GdnRaw raw{Tensor(p.beta.shape()), Tensor(p.gamma.shape())};
  for (int64_t i = 0; i < p.beta.numel(); ++i) raw.beta_raw[i] = inverse_softplus(p.beta[i] - kGdnBetaMin);
  for (int64_t i = 0; i < p.gamma.numel(); ++i) raw.gamma_raw[i] = inverse_softplus(p.gamma[i]);
  return raw;
}

GdnParams gdn_params_from(const GdnRaw& raw) {
  ad::Graph g;
  ad::Var beta = ad::softplus(g.input(raw.beta_raw)) + kGdnBetaMin;
  ad::Var gamma = ad::softplus(g.input(raw.gamma_raw));
  return {beta.value(), gamma.value()};
}

ad::Var gdn(ad::Var x, ad::Var beta, ad::Var gamma, bool inverse) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) fail(ErrorKind::kShape, "gdn expects [N,C,H,W], got " + shape_str(xs));
  const int64_t C = xs[1];
  if (beta.shape() != Shape{C} || gamma.shape() != Shape{C, C}) {
    fail(ErrorKind::kShape, "gdn: input has " + std::to_string(C) + " channels but parameters are " +
                                shape_str(beta.shape()) + "/" + shape_str(gamma.shape()));
  }
  ad::Var denom = ad::conv2d(ad::abs(x), ad::reshape(gamma, {C, C, 1, 1}), beta, 1, 0);
  return inverse ? x * denom : x / denom;
}

ad::Var gdn_from_store(ad::Graph& g, const ParamStore& store, const std::string& prefix, ad::Var x,
                       bool inverse) {
  ad::Var beta = ad::softplus(g.param(store, prefix + "beta_raw")) + kGdnBetaMin;
  ad::Var gamma = ad::softplus(g.param(store, prefix + "gamma_raw"));
  return gdn(x, beta, gamma, inverse);
}

namespace {

Tensor run_gdn(const Tensor& x, const GdnParams& p, bool inverse) {
  const bool single = x.rank() == 3;
  if (!single && x.rank() != 4) fail(ErrorKind::kShape, "gdn expects [C,H,W] or [N,C,H,W]");
  const int64_t C = single ? x.dim(0) : x.dim(1);
  if (p.beta.numel() != C) {
    fail(ErrorKind::kShape, "gdn: input has " + std::to_string(C) + " channels, parameters have " +
                                std::to_string(p.beta.numel()));
  }
  for (double b : p.beta.data()) {
    if (!(b >= kGdnBetaMin)) fail(ErrorKind::kInvalidArgument, "gdn: beta below beta_min");
  }
  for (double v : p.gamma.data()) {
    if (!(v >= 0)) fail(ErrorKind::kInvalidArgument, "gdn: negative gamma");
  }
  ad::Graph g;
  ad::Var xv = g.input(single ? x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}) : x);
  Tensor y = gdn(xv, g.input(p.beta), g.input(p.gamma), inverse).value();
  return single ? y.reshaped(x.shape()) : y;
}

}  // namespace

Tensor gdn_forward(const Tensor& x, const GdnParams& p) { return run_gdn(x, p, false); }
Tensor igdn_forward(const Tensor& x, const GdnParams& p) { return run_gdn(x, p, true); }

// ---- Default architectures -----------------------------------------------------

ModelSpec teacher_spec(const ArchOptions& o) {
  ModelSpec spec;
  spec.in_ch = 3;
  spec.in_h = spec.in_w = o.image_size;
  spec.stages = {
      {"stem", {{LayerKind::kConv, 3, 16, 3, 2, 1}, {LayerKind::kRelu}}},
      {"stage1", {{LayerKind::kResBlock, 16, 16, 3, 1, 1}}},
      {"stage2", {{LayerKind::kResBlock, 16, 32, 3, 2, 1}, {LayerKind::kResBlock, 32, 64, 3, 2, 1}}},
      {"head", {{LayerKind::kGlobalAvgPool}, {LayerKind::kLinear, 64, o.num_classes}}},
  };
  spec.mobile_stages = 2;
  validate_spec(spec);
  return spec;
}

StageSpec encoder_stage(const ArchOptions& o) {
  const int c = o.encoder_channels;
  return {"encoder",
          {{LayerKind::kConv, 3, c, 3, 2, 1},
           {LayerKind::kGdn, c, c},
           {LayerKind::kConv, c, c, 3, 2, 1},
           {LayerKind::kGdn, c, c},
           {LayerKind::kConv, c, o.latent_channels, 3, 1, 1}}};
}

StageSpec decoder_stage(const ArchOptions& o, int feature_channels) {
  const int c = o.decoder_channels;
  return {"decoder",
          {{LayerKind::kConv, o.latent_channels, c, 3, 1, 1},
           {LayerKind::kIgdn, c, c},
           {LayerKind::kUpsample, 0, 0, 0, 2, 0},
           {LayerKind::kConv, c, feature_channels, 3, 1, 1},
           {LayerKind::kIgdn, feature_channels, feature_channels},
           {LayerKind::kConv, feature_channels, feature_channels, 1, 1, 0}}};
}

Shape teacher_feature_shape(const ModelSpec& teacher) {
  return stage_output_shape(teacher, teacher.mobile_stages - 1);
}

}  // namespace esplit
