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


// Training pipelines and rate-distortion evaluation.
//
// Loss conventions. Stage 1 minimizes, per feature element,
//   (1/2 ||h - h_hat||^2 + beta * sum(-ln P(z~))) / numel(h),
// so beta is in nats per feature element. The end-to-end baseline minimizes
// CE + beta * sum(-ln P(z~)) per sample. Reported rates are in bits.

#ifndef ESPLIT_TRAINING_H_
#define ESPLIT_TRAINING_H_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "esplit/autodiff.h"
#include "esplit/csv.h"
#include "esplit/dataset.h"
#include "esplit/model.h"
#include "esplit/optim.h"

namespace esplit {

struct LrSchedule {
  double initial = 1e-3;
  std::vector<int> milestones;  // lr *= factor after each listed epoch
  double factor = 0.1;
  bool cosine = false;          // cosine decay to 0 over all epochs instead
  double lr_at(int epoch, int total_epochs) const;
};

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  double beta = 1.28e-3;
  double alpha = 0.5;
  double tau = 1.0;
  LrSchedule lr;
  int batch_size = 32;
  int epochs = 1;
  uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double momentum = 0.9;
  double weight_decay = 0.0;
  // Rescale the global gradient norm down to this value; 0 disables.
  double clip_norm = 0.0;
  // Also match the first frozen tail stage's output during stage 1.
  bool aux_features = false;
  uint16_t beta_id = 0;

  // Throws kConfig on beta <= 0 (or < 0 where allow_zero_beta), tau <= 0,
  // alpha outside [0, 1], or non-positive sizes.
  void validate(bool allow_zero_beta = false) const;
};

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double loss = 0;        // mean over batches
  double distortion = 0;  // mean distortion term
  double rate_bits = 0;   // mean bits per sample (noisy latents), 0 if unused
};

struct TrainResult {
  Checkpoint ckpt;
  std::vector<EpochLog> log;
};

// ---- Losses ----------------------------------------------------------------------

struct RdTerms {
  ad::Var loss;
  ad::Var h_hat;
  ad::Var distortion;  // 1/2 ||h - h_hat||^2 / numel(h)
  ad::Var rate_nats;   // sum(-ln P) / numel(h)
};

// Decoder and prior are read from `student`; `z_noisy` is [N, C, H, W].
RdTerms rd_loss(ad::Graph& g, const Checkpoint& student, ad::Var h, ad::Var z_noisy, double beta,
                double p_min = 1.0 / (1 << kDefaultPrecision));

// alpha * CE(student, y) + (1 - alpha) * tau^2 * KL(softmax(s/tau) || softmax(t/tau)).
ad::Var kd_loss(ad::Var student_logits, ad::Var teacher_logits, std::span<const int> labels, double alpha,
                double tau);

// ---- Pipelines -------------------------------------------------------------------

TrainResult train_teacher(const Dataset& data, const TrainConfig& cfg, const ArchOptions& arch = {});
TrainResult stage1_distill(const Checkpoint& student, const Checkpoint& teacher, const Dataset& data,
                           const TrainConfig& cfg);
TrainResult stage2_finetune(const Checkpoint& stage1, const Checkpoint& teacher, const Dataset& data,
                            const TrainConfig& cfg);
TrainResult train_end2end(const Checkpoint& student, const Dataset& data, const TrainConfig& cfg);
// GHND-style: squared error on the split feature and on the first tail
// stage's output, tail frozen. The bottleneck is 8-bit quantized at eval.
TrainResult train_crbq(const Checkpoint& student, const Checkpoint& teacher, const Dataset& data,
                       const TrainConfig& cfg);
// New head for `task` on the frozen encoder/decoder of `student`. The tail
// stages are cloned under "<task>_<stage>" names; with warm_start the cloned
// weights start from the student's tail, the final linear layer is always
// fresh.
TrainResult finetune_task(const Checkpoint& student, Task task, const Dataset& data, const TrainConfig& cfg,
                          bool warm_start = true);

// Exports one CdfTable per latent channel from the stored prior.
void export_tables(Checkpoint& ckpt, int bound = kDefaultClampBound, int precision = kDefaultPrecision);

// ---- Evaluation -------------------------------------------------------------------

enum class BottleneckMode { kContinuous, kRounded, kU8 };

// Logits for a batch. Teachers ignore `mode`.
Tensor predict_logits(const Checkpoint& ckpt, const Tensor& images, BottleneckMode mode);
// Task the checkpoint's head predicts (from metadata, default digit).
Task checkpoint_task(const Checkpoint& ckpt);
BottleneckMode default_mode(const Checkpoint& ckpt);
double evaluate_accuracy(const Checkpoint& ckpt, const Dataset& data, BottleneckMode mode, size_t batch = 100);

struct RDPoint {
  uint16_t beta_id = 0;
  double beta = 0;
  double bytes_per_sample = 0;  // mean full frame size
  double bits_per_pixel = 0;    // frame bits per input pixel
  double accuracy = 0;
  double analytic_bits = 0;     // mean -sum log2 P under the tables
  double coded_bits = 0;        // mean bitstream bits
  int64_t escapes = 0;
};

// Rates come from real frames produced by the coder.
RDPoint eval_rd(const Checkpoint& ckpt, const Dataset& data);

// Per-pixel rate map of one [C, H, W] image: bits per latent position,
// upsampled to the image grid and scaled to [0, 1]. `total_bits` receives the
// unnormalized sum.
Tensor bit_allocation_map(const Checkpoint& ckpt, const Tensor& image, double* total_bits = nullptr);

inline const std::vector<std::string> kRdColumns = {"run_id",        "beta",     "bytes_per_sample",
                                                    "bits_per_pixel", "accuracy", "params_mobile",
                                                    "params_server"};
inline constexpr const char* kRdSchema = "rd/1";
void append_rd_row(CsvTable& table, const std::string& run_id, const RDPoint& p, const Checkpoint& ckpt);
CsvTable make_rd_table();

inline const std::vector<std::string> kTrainLogColumns = {"epoch", "lr", "loss", "distortion", "rate_bits"};
inline constexpr const char* kTrainLogSchema = "trainlog/1";
CsvTable train_log_table(std::span<const EpochLog> log);

}  // namespace esplit

#endif  // ESPLIT_TRAINING_H_
