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


// Deployed split pipeline: device-side encode and framing, a rate-limited
// channel, server-side decode and tail inference, and latency accounting.
//
// Compute time comes from a per-MAC cost model by default, so latency
// reports are reproducible; a profile may opt into measured wall time
// scaled by a device multiplier instead.

#ifndef ESPLIT_SPLIT_RUNTIME_H_
#define ESPLIT_SPLIT_RUNTIME_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "esplit/csv.h"
#include "esplit/dataset.h"
#include "esplit/frame.h"
#include "esplit/model.h"

namespace esplit {

inline constexpr double kDefaultDataRateBps = 37500.0;

struct ChannelProfile {
  double data_rate_bps = kDefaultDataRateBps;
  double overhead_bytes = 0;     // fixed per message
  double loss_probability = 0;   // dropped frames yield no prediction
  void validate() const;
};

// (payload_bytes + overhead) * 8 / data_rate_bps.
double simulate_channel(size_t payload_bytes, const ChannelProfile& profile);

struct ComputeProfile {
  std::string name;
  double seconds_per_mac = 0;
  bool measured = false;
  double multiplier = 1.0;  // scales measured wall time
  double cost(int64_t macs, double wall_s) const;
};
ComputeProfile default_mobile_profile();
ComputeProfile default_server_profile();

struct LatencyReport {
  double encode_s = 0;
  double comm_s = 0;
  double server_s = 0;
  double total_s = 0;
  size_t payload_bytes = 0;
  static LatencyReport make(double encode_s, double comm_s, double server_s, size_t payload_bytes);
};

struct ClientResult {
  std::vector<uint8_t> frame;
  double encode_s = 0;
};
// One [C, H, W] image through the mobile stages, quantizer and coder.
ClientResult client_encode(const Checkpoint& ckpt, const Tensor& image, const ComputeProfile& mobile);

struct ServerResult {
  int prediction = -1;
  Tensor logits;
  double server_s = 0;
};
// Raw frames run the whole model; bottleneck frames run the server stages.
ServerResult server_decode_infer(std::span<const uint8_t> frame, const Checkpoint& ckpt, const ComputeProfile& server);

// Unsplit reference: the same student on one image with the same
// bottleneck quantization, no framing or coding.
Tensor monolithic_logits(const Checkpoint& ckpt, const Tensor& image);

enum class Transport { kInProcess, kSocket };
const char* transport_name(Transport t);
Transport transport_from_name(const std::string& name);

struct SplitOptions {
  ChannelProfile channel;
  ComputeProfile mobile = default_mobile_profile();
  ComputeProfile server = default_server_profile();
  Transport transport = Transport::kInProcess;
  uint64_t seed = 1;  // drives frame loss
  size_t limit = 0;   // 0 = whole dataset
};

struct SampleResult {
  int label = 0;
  int prediction = -1;
  bool delivered = true;
  LatencyReport latency;
};

struct LatencySummary {
  double mean_encode_s = 0;
  double mean_comm_s = 0;
  double mean_server_s = 0;
  double mean_total_s = 0;
  double p50_total_s = 0;
  double p95_total_s = 0;
  double mean_payload_bytes = 0;
  double accuracy = 0;  // over all samples, lost frames counted wrong
};

struct SplitRun {
  std::vector<SampleResult> samples;
  LatencySummary summary;
};

SplitRun run_split(const Dataset& data, const Checkpoint& ckpt, const SplitOptions& opts);
LatencySummary summarize(std::span<const SampleResult> samples);

inline const std::vector<std::string> kLatencyColumns = {"sample",   "label",  "prediction", "payload_bytes",
                                                         "encode_s", "comm_s", "server_s",   "total_s"};
inline constexpr const char* kLatencySchema = "latency/1";
CsvTable latency_table(const SplitRun& run);

struct ScenarioRow {
  std::string scenario;  // local | edge | split
  std::string model;
  double beta = 0;
  double accuracy = 0;
  double payload_bytes = 0;
  double encode_s = 0;
  double comm_s = 0;
  double server_s = 0;
  double total_s = 0;
};

// Local: the teacher on the device. Edge: raw image frames to a server
// running the teacher. Split: each student through run_split.
std::vector<ScenarioRow> compare_scenarios(const Dataset& data, const Checkpoint& teacher,
                                           std::span<const Checkpoint> students,
                                           std::span<const std::string> student_names, const SplitOptions& opts);

inline const std::vector<std::string> kScenarioColumns = {"scenario", "model",  "beta",     "accuracy", "payload_bytes",
                                                          "encode_s", "comm_s", "server_s", "total_s"};
inline constexpr const char* kScenarioSchema = "scenarios/1";
CsvTable scenario_table(std::span<const ScenarioRow> rows);

}  // namespace esplit

#endif  // ESPLIT_SPLIT_RUNTIME_H_
