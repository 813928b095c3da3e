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

// Model description and execution.
//
// A model is an ordered list of named stages, each a list of layers. The
// split marker says how many leading stages run on the mobile side; the
// rest runs on the server. Parameters are named "<stage>.<layer>.<field>",
// so a student can adopt a teacher's tail by copying matching names.

#ifndef ESPLIT_LAYERS_H_
#define ESPLIT_LAYERS_H_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "esplit/autodiff.h"

namespace esplit {

enum class LayerKind {
  kConv,           // kernel/stride/pad, weight + bias
  kGdn,            // simplified GDN over in_ch channels
  kIgdn,           // inverse simplified GDN
  kRelu,
  kUpsample,       // nearest neighbour, factor = stride
  kResBlock,       // two 3x3 convs + identity or 1x1 projection, stride on the first
  kGlobalAvgPool,  // [N,C,H,W] -> [N,C]
  kLinear,
};

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::kConv;
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct StageSpec {
  std::string name;
  std::vector<LayerSpec> layers;
  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

struct ModelSpec {
  int in_ch = 3;
  int in_h = 32;
  int in_w = 32;
  std::vector<StageSpec> stages;
  int mobile_stages = 1;  // split marker: stages [0, mobile_stages) run on the device
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

enum class Side { kMobile, kServer, kAll };

// Throws kShape/kInvalidArgument on inconsistent channel counts, a missing or
// out-of-range split marker, or duplicate stage names.
void validate_spec(const ModelSpec& spec);

// Per-sample [C, H, W] (or [F] after pooling) output shape of stage `stage`.
Shape stage_output_shape(const ModelSpec& spec, int stage);
int stage_index(const ModelSpec& spec, const std::string& name);

// Canonical JSON text of the spec and its SHA-256 (hex).
std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const std::string& text);
std::string spec_hash(const ModelSpec& spec);

// Every parameter the spec declares, with its shape.
std::vector<std::pair<std::string, Shape>> spec_parameters(const ModelSpec& spec);
int64_t count_params(const ModelSpec& spec, Side side);
// Multiply-accumulates for one forward pass of one sample.
int64_t count_macs(const ModelSpec& spec, Side side);
int64_t count_stage_macs(const ModelSpec& spec, int first_stage, int end_stage);

// He fan-in init for convs and linears; GDN beta = 1, gamma = 0.1 I.
void init_stage_params(const ModelSpec& spec, int stage, ParamStore& store, std::mt19937_64& rng);
void init_params(const ModelSpec& spec, ParamStore& store, std::mt19937_64& rng);

// Runs stages [first, end) on a batched input.
ad::Var forward_stages(ad::Graph& g, const ParamStore& store, const ModelSpec& spec, ad::Var x,
                       int first, int end);

// ---- GDN ------------------------------------------------------------------------

inline constexpr double kGdnBetaMin = 1e-6;

// Constrained GDN parameters: beta [C] >= kGdnBetaMin, gamma [C, C] >= 0.
struct GdnParams {
  Tensor beta;
  Tensor gamma;
};

// Unconstrained storage: beta = softplus(beta_raw) + kGdnBetaMin,
// gamma = softplus(gamma_raw).
struct GdnRaw {
  Tensor beta_raw;
  Tensor gamma_raw;
};
GdnRaw gdn_raw_from(const GdnParams& p);
GdnParams gdn_params_from(const GdnRaw& raw);

// y_i = x_i / (beta_i + sum_j gamma_ij |x_j|) at every spatial position
// (inverse: multiply). x is [C,H,W] or [N,C,H,W].
Tensor gdn_forward(const Tensor& x, const GdnParams& p);
Tensor igdn_forward(const Tensor& x, const GdnParams& p);

// Graph versions taking constrained parameters as Vars (beta [C], gamma [C,C]).
ad::Var gdn(ad::Var x, ad::Var beta, ad::Var gamma, bool inverse);
// Graph version on stored raw parameters "<prefix>beta_raw"/"<prefix>gamma_raw".
ad::Var gdn_from_store(ad::Graph& g, const ParamStore& store, const std::string& prefix, ad::Var x,
                       bool inverse);

// ---- Default desk-scale architectures --------------------------------------------

struct ArchOptions {
  int image_size = 32;
  int num_classes = 10;
  int latent_channels = 16;
  int encoder_channels = 24;
  int decoder_channels = 32;
};

// Residual CNN: stem (3x3 s2 conv + relu) | stage1 (res block) || stage2
// (strided res block) | head (pool + linear). Split after stage1; the output
// of stage1 is the distillation target h.
ModelSpec teacher_spec(const ArchOptions& opts = {});

// Encoder: conv s2 -> GDN -> conv s2 -> GDN -> conv s1 to latent channels.
StageSpec encoder_stage(const ArchOptions& opts = {});
// Decoder: conv -> IGDN -> upsample x2 -> conv -> IGDN -> 1x1 conv to the
// teacher's feature channels.
StageSpec decoder_stage(const ArchOptions& opts, int feature_channels);

// Per-sample shape of the teacher feature the student must reproduce.
Shape teacher_feature_shape(const ModelSpec& teacher);

}  // namespace esplit

#endif  // ESPLIT_LAYERS_H_
