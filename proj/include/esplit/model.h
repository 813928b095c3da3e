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


// Checkpoints and whole-model execution.
//
// File layout (little-endian):
//   "ESCK" | u32 version | u8 stage tag | str spec_json | str spec_sha256
//   | u32 n_params, each: str name, u8 trainable, u8 rank, i64 dims[rank],
//     f64 data[numel]
//   | u32 n_tables, each: i32 offset, u8 precision, u32 n, u32 cdf[n]
//   | str metadata_json | u32 crc32 of all preceding bytes
// where str = u32 length + bytes. Parameters are written in name order, so
// equal checkpoints serialize to equal bytes.

#ifndef ESPLIT_MODEL_H_
#define ESPLIT_MODEL_H_

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "esplit/entropy_model.h"
#include "esplit/layers.h"

namespace esplit {

inline constexpr uint32_t kCheckpointVersion = 1;

enum class StageTag : uint8_t { kTeacher = 0, kStage1, kStage2, kTaskHead, kEnd2End, kCrbq };
const char* stage_tag_name(StageTag tag);
StageTag stage_tag_from_name(const std::string& name);

struct Checkpoint {
  ModelSpec spec;
  StageTag stage = StageTag::kTeacher;
  ParamStore params;
  std::vector<CdfTable> tables;  // one per latent channel once exported
  std::map<std::string, std::string> metadata;

  // Entropic students carry prior parameters under "prior.".
  bool has_prior() const { return params.count("prior.matrix0") != 0; }
  // Per-sample shape at the split point.
  Shape latent_shape() const { return stage_output_shape(spec, spec.mobile_stages - 1); }
};

// Throws if a declared parameter is missing or misshapen.
void validate_checkpoint(const Checkpoint& ckpt);

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
// SHA-256 of the serialized bytes.
std::string checkpoint_hash(const Checkpoint& ckpt);

// Student = encoder + decoder + every teacher stage after the split, with the
// teacher's tail parameters copied verbatim and a fresh prior when requested.
Checkpoint build_student(const Checkpoint& teacher, const StageSpec& encoder, const StageSpec& decoder,
                         std::mt19937_64& rng, bool with_prior = true);

// Batched inference helpers on [N, ...] tensors; no gradients are recorded.
Tensor run_stages(const Checkpoint& ckpt, const Tensor& x, int first, int end);
Tensor encoder_forward(const Checkpoint& ckpt, const Tensor& images);
// Decoder stage only (the stage right after the split).
Tensor decoder_forward(const Checkpoint& ckpt, const Tensor& z);
// Everything after the split: decoder and tail for students.
Tensor server_forward(const Checkpoint& ckpt, const Tensor& z);
Tensor full_forward(const Checkpoint& ckpt, const Tensor& images);

std::vector<int> argmax_rows(const Tensor& logits);

// Marks every parameter whose name starts with `prefix` as trainable or frozen.
void set_trainable(ParamStore& params, const std::string& prefix, bool trainable);

}  // namespace esplit

#endif  // ESPLIT_MODEL_H_
