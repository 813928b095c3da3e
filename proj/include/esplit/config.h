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


// Experiment configuration: the frozen training recipe plus dataset,
// channel and compute settings, readable from and writable to JSON.
//
// JSON keys (all optional, unknown keys rejected):
//   seed                      base seed for every training phase
//   dataset   {train_path, test_path, n_train, n_test, train_seed, test_seed}
//   model     {image_size, num_classes, latent_channels, encoder_channels,
//              decoder_channels, crbq_latent_channels}
//   teacher | stage1 | stage2 | end2end | crbq | head
//             {beta, alpha, tau, lr: {initial, milestones, factor, cosine},
//              batch_size, epochs, optimizer: "sgd"|"adam", momentum,
//              weight_decay, clip_norm, aux_features}
//   betas     [stage-1 beta per sweep point, increasing]
//   channel   {data_rate_bps, overhead_bytes, loss_probability}
//   compute   {mobile | server: {seconds_per_mac, measured, multiplier}}

#ifndef ESPLIT_CONFIG_H_
#define ESPLIT_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "esplit/dataset.h"
#include "esplit/layers.h"
#include "esplit/split_runtime.h"
#include "esplit/training.h"

namespace esplit {

struct DatasetConfig {
  std::string train_path;  // empty: synthesize
  std::string test_path;
  size_t n_train = 6000;
  size_t n_test = 2000;
  uint64_t train_seed = 1;
  uint64_t test_seed = 2;
};

struct RunConfig {
  uint64_t seed = 1;
  DatasetConfig dataset;
  ArchOptions arch;
  int crbq_latent_channels = 8;
  TrainConfig teacher;
  TrainConfig stage1;
  TrainConfig stage2;
  TrainConfig end2end;
  TrainConfig crbq;
  TrainConfig head;
  std::vector<double> betas;
  ChannelProfile channel;
  ComputeProfile mobile = default_mobile_profile();
  ComputeProfile server = default_server_profile();

  // Phase configs with the base seed applied.
  TrainConfig phase(const TrainConfig& c) const;
  void validate() const;
};

// Calibrated defaults used by the CLI and the acceptance run.
RunConfig default_config();

// Overlays the keys present in `json_text` onto `base`. Malformed JSON,
// unknown keys and wrong types are kConfig errors.
RunConfig config_from_json(const std::string& json_text, RunConfig base = default_config());
RunConfig load_config(const std::string& path, RunConfig base = default_config());
std::string config_to_json(const RunConfig& cfg);

// Synthesized at arch.image_size, or read from file; a file whose image size
// differs from the architecture is a kConfig error.
Dataset load_train_set(const RunConfig& cfg);
Dataset load_test_set(const RunConfig& cfg);

// ---- Recipe steps shared by the CLI, bindings and acceptance run -----------------

// Untrained student on `teacher`: entropic (GDN encoder + prior) or the
// channel-reduced 8-bit baseline.
Checkpoint fresh_student(const Checkpoint& teacher, const RunConfig& cfg, bool entropic);

TrainResult recipe_teacher(const Dataset& train, const RunConfig& cfg);
TrainResult recipe_stage1(const Checkpoint& teacher, const Dataset& train, const RunConfig& cfg, double beta,
                          uint16_t beta_id);
TrainResult recipe_stage2(const Checkpoint& stage1, const Checkpoint& teacher, const Dataset& train,
                          const RunConfig& cfg);
TrainResult recipe_end2end(const Checkpoint& teacher, const Dataset& train, const RunConfig& cfg);
TrainResult recipe_crbq(const Checkpoint& teacher, const Dataset& train, const RunConfig& cfg);
TrainResult recipe_head(const Checkpoint& student, Task task, const Dataset& train, const RunConfig& cfg);

}  // namespace esplit

#endif  // ESPLIT_CONFIG_H_
