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


#include "esplit/model.h"

#include <nlohmann/json.hpp>

#include "esplit/bytes.h"
#include "esplit/error.h"
#include "esplit/hashing.h"

namespace esplit {
namespace {

constexpr const char* kTagNames[] = {"teacher", "stage1", "stage2", "task-head", "end2end", "crbq"};
constexpr char kMagic[4] = {'E', 'S', 'C', 'K'};

}  // namespace

const char* stage_tag_name(StageTag tag) { return kTagNames[static_cast<int>(tag)]; }

StageTag stage_tag_from_name(const std::string& name) {
  for (int i = 0; i < 6; ++i) {
    if (name == kTagNames[i]) return static_cast<StageTag>(i);
  }
  fail(ErrorKind::kFormat, "unknown stage tag '" + name + "'");
}

void validate_checkpoint(const Checkpoint& ckpt) {
  validate_spec(ckpt.spec);
  for (const auto& [name, shape] : spec_parameters(ckpt.spec)) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end()) fail(ErrorKind::kFormat, "checkpoint lacks parameter '" + name + "'");
    if (it->second.value.shape() != shape) {
      fail(ErrorKind::kShape, "parameter '" + name + "' has shape " + shape_str(it->second.value.shape()) +
                                  ", spec declares " + shape_str(shape));
    }
  }
  for (const CdfTable& t : ckpt.tables) validate_cdf_table(t);
  if (!ckpt.tables.empty() && static_cast<int64_t>(ckpt.tables.size()) != ckpt.latent_shape()[0]) {
    fail(ErrorKind::kFormat, "checkpoint has " + std::to_string(ckpt.tables.size()) +
                                 " cdf tables for " + std::to_string(ckpt.latent_shape()[0]) + " latent channels");
  }
}

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  validate_checkpoint(ckpt);
  ByteWriter w(Endian::kLittle);
  w.put_bytes(std::span(reinterpret_cast<const uint8_t*>(kMagic), 4));
  w.put(kCheckpointVersion);
  w.put(static_cast<uint8_t>(ckpt.stage));
  const std::string spec_json = spec_to_json(ckpt.spec);
  w.put_string(spec_json);
  w.put_string(sha256_hex(spec_json));
  w.put(static_cast<uint32_t>(ckpt.params.size()));
  for (const auto& [name, p] : ckpt.params) {
    w.put_string(name);
    w.put(static_cast<uint8_t>(p.trainable));
    w.put(static_cast<uint8_t>(p.value.rank()));
    for (int64_t d : p.value.shape()) w.put(d);
    for (double v : p.value.data()) w.put(v);
  }
  w.put(static_cast<uint32_t>(ckpt.tables.size()));
  for (const CdfTable& t : ckpt.tables) {
    w.put(t.offset);
    w.put(static_cast<uint8_t>(t.precision));
    w.put(static_cast<uint32_t>(t.cdf.size()));
    for (uint32_t c : t.cdf) w.put(c);
  }
  w.put_string(nlohmann::json(ckpt.metadata).dump());
  w.put(crc32(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint parse_checkpoint(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8) fail(ErrorKind::kFormat, "checkpoint too short");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader crc_reader(bytes.last(4), Endian::kLittle, "checkpoint crc");
  if (crc_reader.get<uint32_t>() != crc32(body)) fail(ErrorKind::kFormat, "checkpoint crc mismatch");

  ByteReader r(body, Endian::kLittle, "checkpoint");
  const auto magic = r.get_bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) fail(ErrorKind::kFormat, "not a checkpoint (bad magic)");
  const uint32_t version = r.get<uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kUnsupported, "checkpoint version " + std::to_string(version) + " not supported");
  }
  Checkpoint ckpt;
  const uint8_t tag = r.get<uint8_t>();
  if (tag > static_cast<uint8_t>(StageTag::kCrbq)) fail(ErrorKind::kFormat, "bad stage tag");
  ckpt.stage = static_cast<StageTag>(tag);
  const std::string spec_json = r.get_string();
  if (r.get_string() != sha256_hex(spec_json)) fail(ErrorKind::kFormat, "checkpoint spec hash mismatch");
  ckpt.spec = spec_from_json(spec_json);
  const uint32_t n_params = r.get<uint32_t>();
  for (uint32_t i = 0; i < n_params; ++i) {
    std::string name = r.get_string();
    const bool trainable = r.get<uint8_t>() != 0;
    const uint8_t rank = r.get<uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<int64_t>();
    if (rank > 0) {
      for (int64_t d : shape) {
        if (d <= 0 || d > (int64_t{1} << 32)) fail(ErrorKind::kFormat, "bad tensor dims for '" + name + "'");
      }
    }
    const int64_t n = shape_numel(shape);
    if (static_cast<uint64_t>(n) * 8 > r.remaining()) fail(ErrorKind::kFormat, "truncated checkpoint");
    std::vector<double> data(static_cast<size_t>(n));
    for (double& v : data) v = r.get<double>();
    ckpt.params[std::move(name)] = {Tensor(std::move(shape), std::move(data)), trainable};
  }
  const uint32_t n_tables = r.get<uint32_t>();
  for (uint32_t i = 0; i < n_tables; ++i) {
    CdfTable t;
    t.offset = r.get<int32_t>();
    t.precision = r.get<uint8_t>();
    const uint32_t n = r.get<uint32_t>();
    if (static_cast<uint64_t>(n) * 4 > r.remaining()) fail(ErrorKind::kFormat, "truncated checkpoint");
    t.cdf.resize(n);
    for (auto& c : t.cdf) c = r.get<uint32_t>();
    ckpt.tables.push_back(std::move(t));
  }
  try {
    ckpt.metadata = nlohmann::json::parse(r.get_string()).get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("bad checkpoint metadata: ") + e.what());
  }
  if (r.remaining() != 0) fail(ErrorKind::kFormat, "trailing bytes in checkpoint");
  validate_checkpoint(ckpt);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) { write_file(path, serialize_checkpoint(ckpt)); }

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

std::string checkpoint_hash(const Checkpoint& ckpt) { return sha256_hex(serialize_checkpoint(ckpt)); }

Checkpoint build_student(const Checkpoint& teacher, const StageSpec& encoder, const StageSpec& decoder,
                         std::mt19937_64& rng, bool with_prior) {
  validate_checkpoint(teacher);
  const ModelSpec& ts = teacher.spec;
  Checkpoint s;
  s.stage = StageTag::kStage1;
  s.spec.in_ch = ts.in_ch;
  s.spec.in_h = ts.in_h;
  s.spec.in_w = ts.in_w;
  s.spec.stages = {encoder, decoder};
  for (size_t i = static_cast<size_t>(ts.mobile_stages); i < ts.stages.size(); ++i) s.spec.stages.push_back(ts.stages[i]);
  s.spec.mobile_stages = 1;
  validate_spec(s.spec);
  if (stage_output_shape(s.spec, 1) != teacher_feature_shape(ts)) {
    fail(ErrorKind::kShape, "decoder output " + shape_str(stage_output_shape(s.spec, 1)) +
                                " does not match teacher feature " + shape_str(teacher_feature_shape(ts)));
  }
  init_stage_params(s.spec, 0, s.params, rng);
  init_stage_params(s.spec, 1, s.params, rng);
  for (size_t i = 2; i < s.spec.stages.size(); ++i) {
    const std::string prefix = s.spec.stages[i].name + ".";
    for (const auto& [name, p] : teacher.params) {
      if (name.rfind(prefix, 0) == 0) s.params[name] = p;
    }
  }
  if (with_prior) {
    FactorizedPrior::init_params(s.params, static_cast<int>(s.latent_shape()[0]), rng);
  }
  validate_checkpoint(s);
  return s;
}

Tensor run_stages(const Checkpoint& ckpt, const Tensor& x, int first, int end) {
  ad::Graph g(false);
  return forward_stages(g, ckpt.params, ckpt.spec, g.input(x), first, end).value();
}

Tensor encoder_forward(const Checkpoint& ckpt, const Tensor& images) {
  return run_stages(ckpt, images, 0, ckpt.spec.mobile_stages);
}

Tensor decoder_forward(const Checkpoint& ckpt, const Tensor& z) {
  return run_stages(ckpt, z, ckpt.spec.mobile_stages, ckpt.spec.mobile_stages + 1);
}

Tensor server_forward(const Checkpoint& ckpt, const Tensor& z) {
  return run_stages(ckpt, z, ckpt.spec.mobile_stages, static_cast<int>(ckpt.spec.stages.size()));
}

Tensor full_forward(const Checkpoint& ckpt, const Tensor& images) {
  return run_stages(ckpt, images, 0, static_cast<int>(ckpt.spec.stages.size()));
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) fail(ErrorKind::kShape, "argmax_rows expects [N,K]");
  const int64_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    int best = 0;
    for (int64_t j = 1; j < k; ++j) {
      if (logits[i * k + j] > logits[i * k + best]) best = static_cast<int>(j);
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

void set_trainable(ParamStore& params, const std::string& prefix, bool trainable) {
  for (auto& [name, p] : params) {
    if (name.rfind(prefix, 0) == 0) p.trainable = trainable;
  }
}

}  // namespace esplit
