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


#include "esplit/training.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "esplit/entropy_model.h"
#include "esplit/error.h"
#include "esplit/frame.h"
#include "esplit/quantizer.h"
#include "esplit/range_coder.h"

namespace esplit {
namespace {

constexpr size_t kEvalBatch = 100;

// Per-sample rows of a frozen network's output, kept in float to bound memory.
class FeatureCache {
 public:
  FeatureCache() = default;
  FeatureCache(const Dataset& data, const std::function<Tensor(const Tensor&)>& fn) {
    for (size_t b = 0; b < data.size(); b += kEvalBatch) {
      const size_t e = std::min(data.size(), b + kEvalBatch);
      const Tensor out = fn(data.images(b, e));
      if (row_shape_.empty()) {
        row_shape_.assign(out.shape().begin() + 1, out.shape().end());
        row_ = shape_numel(row_shape_);
        rows_.reserve(data.size() * static_cast<size_t>(row_));
      }
      for (double v : out.data()) rows_.push_back(static_cast<float>(v));
    }
  }

  Tensor gather(std::span<const size_t> idx) const {
    Shape shape{static_cast<int64_t>(idx.size())};
    shape.insert(shape.end(), row_shape_.begin(), row_shape_.end());
    Tensor t(shape);
    for (size_t b = 0; b < idx.size(); ++b) {
      const float* src = rows_.data() + idx[b] * static_cast<size_t>(row_);
      for (int64_t k = 0; k < row_; ++k) t[static_cast<int64_t>(b) * row_ + k] = src[k];
    }
    return t;
  }

 private:
  Shape row_shape_;
  int64_t row_ = 0;
  std::vector<float> rows_;
};

struct BatchStats {
  double distortion = 0;
  double rate_bits = 0;
};

void clip_grad_norm(GradMap& grads, double max_norm) {
  double sq = 0;
  for (const auto& [name, gt] : grads) {
    for (double v : gt.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const double scale = max_norm / norm;
  for (auto& [name, gt] : grads) {
    for (double& v : gt.data()) v *= scale;
  }
}

using StepFn = std::function<ad::Var(ad::Graph&, std::span<const size_t>, std::mt19937_64&, BatchStats&)>;

std::vector<EpochLog> run_training(size_t n, const TrainConfig& cfg, ParamStore& params, const StepFn& step,
                                   const char* what) {
  if (n == 0) fail(ErrorKind::kInvalidArgument, std::string(what) + ": empty dataset");
  auto opt = make_optimizer(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<EpochLog> log;
  const size_t bs = static_cast<size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr.lr_at(epoch, cfg.epochs);
    opt->set_lr(lr);
    const std::vector<size_t> order = shuffled_indices(n, rng);
    EpochLog el;
    el.epoch = epoch;
    el.lr = lr;
    int batches = 0;
    for (size_t b = 0; b < n; b += bs) {
      const std::span<const size_t> batch(order.data() + b, std::min(bs, n - b));
      ad::Graph g;
      BatchStats stats;
      ad::Var loss = step(g, batch, rng, stats);
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) {
        std::ostringstream msg;
        msg << what << ": non-finite loss at epoch " << epoch << " batch " << b / bs << " (lr " << lr
            << ", distortion " << stats.distortion << ", rate " << stats.rate_bits << " bits)";
        fail(ErrorKind::kNumeric, msg.str());
      }
      g.backward(loss);
      GradMap grads = g.param_grads();
      if (cfg.clip_norm > 0) clip_grad_norm(grads, cfg.clip_norm);
      opt->step(params, grads);
      el.loss += lv;
      el.distortion += stats.distortion;
      el.rate_bits += stats.rate_bits;
      ++batches;
    }
    el.loss /= batches;
    el.distortion /= batches;
    el.rate_bits /= batches;
    log.push_back(el);
  }
  return log;
}

int num_stages(const Checkpoint& c) { return static_cast<int>(c.spec.stages.size()); }

void set_meta(Checkpoint& c, const TrainConfig& cfg) {
  c.metadata["beta"] = format_double(cfg.beta);
  c.metadata["beta_id"] = std::to_string(cfg.beta_id);
  c.metadata["seed"] = std::to_string(cfg.seed);
  c.metadata["epochs"] = std::to_string(cfg.epochs);
}

void set_all_trainable(Checkpoint& c, bool trainable) { set_trainable(c.params, "", trainable); }

void set_stage_trainable(Checkpoint& c, int stage, bool trainable) {
  set_trainable(c.params, c.spec.stages.at(static_cast<size_t>(stage)).name + ".", trainable);
}

// -sum ln P over the batch, from per-element likelihoods.
ad::Var neg_log_sum(ad::Var lik) { return ad::sum(ad::log(lik)) * -1.0; }

}  // namespace

double LrSchedule::lr_at(int epoch, int total_epochs) const {
  if (cosine) {
    const double t = total_epochs > 0 ? static_cast<double>(epoch) / total_epochs : 0.0;
    return initial * 0.5 * (1 + std::cos(std::numbers::pi * t));
  }
  double lr = initial;
  for (int m : milestones) {
    if (epoch >= m) lr *= factor;
  }
  return lr;
}

void TrainConfig::validate(bool allow_zero_beta) const {
  if (!(beta > 0 || (allow_zero_beta && beta == 0))) fail(ErrorKind::kConfig, "beta must be positive");
  if (!(tau > 0)) fail(ErrorKind::kConfig, "tau must be positive");
  if (!(alpha >= 0 && alpha <= 1)) fail(ErrorKind::kConfig, "alpha must lie in [0, 1]");
  if (batch_size <= 0 || epochs < 0) fail(ErrorKind::kConfig, "batch_size must be positive and epochs >= 0");
  if (!(lr.initial > 0) || !(lr.factor > 0)) fail(ErrorKind::kConfig, "learning rate and decay factor must be positive");
  if (momentum < 0 || weight_decay < 0 || clip_norm < 0) {
    fail(ErrorKind::kConfig, "momentum, weight_decay and clip_norm must be >= 0");
  }
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg) {
  if (cfg.optimizer == OptimizerKind::kSgd) {
    return std::make_unique<Sgd>(SgdOptions{cfg.lr.initial, cfg.momentum, cfg.weight_decay});
  }
  AdamOptions o;
  o.lr = cfg.lr.initial;
  o.weight_decay = cfg.weight_decay;
  return std::make_unique<Adam>(o);
}

// ---- Losses ----------------------------------------------------------------------

RdTerms rd_loss(ad::Graph& g, const Checkpoint& student, ad::Var h, ad::Var z_noisy, double beta, double p_min) {
  const int split = student.spec.mobile_stages;
  ad::Var h_hat = forward_stages(g, student.params, student.spec, z_noisy, split, split + 1);
  if (h_hat.shape() != h.shape()) {
    fail(ErrorKind::kShape, "rd_loss: decoder output " + shape_str(h_hat.shape()) + " vs target " +
                                shape_str(h.shape()));
  }
  const double inv = 1.0 / static_cast<double>(h.value().numel());
  RdTerms t;
  t.h_hat = h_hat;
  t.distortion = ad::squared_error(h, h_hat) * (0.5 * inv);
  t.rate_nats = neg_log_sum(prior_likelihood(g, student.params, z_noisy, p_min)) * inv;
  t.loss = beta == 0 ? t.distortion : t.distortion + t.rate_nats * beta;
  return t;
}

ad::Var kd_loss(ad::Var student_logits, ad::Var teacher_logits, std::span<const int> labels, double alpha,
                double tau) {
  if (student_logits.shape() != teacher_logits.shape()) {
    fail(ErrorKind::kShape, "kd_loss: student logits " + shape_str(student_logits.shape()) + " vs teacher " +
                                shape_str(teacher_logits.shape()));
  }
  if (!(tau > 0) || !(alpha >= 0 && alpha <= 1)) fail(ErrorKind::kInvalidArgument, "kd_loss: bad alpha/tau");
  ad::Var ce = ad::cross_entropy(student_logits, labels);
  if (alpha == 1) return ce;
  ad::Var kl = ad::kl_divergence(student_logits * (1 / tau), teacher_logits * (1 / tau));
  ad::Var soft = kl * ((1 - alpha) * tau * tau);
  return alpha == 0 ? soft : ce * alpha + soft;
}

// ---- Pipelines -------------------------------------------------------------------

TrainResult train_teacher(const Dataset& data, const TrainConfig& cfg, const ArchOptions& arch) {
  cfg.validate(true);
  TrainResult r;
  Checkpoint& c = r.ckpt;
  c.spec = teacher_spec(arch);
  c.stage = StageTag::kTeacher;
  std::mt19937_64 init_rng(cfg.seed ^ 0x7465616368ULL);
  init_params(c.spec, c.params, init_rng);
  const int end = num_stages(c);
  r.log = run_training(
      data.size(), cfg, c.params,
      [&](ad::Graph& g, std::span<const size_t> batch, std::mt19937_64&, BatchStats& s) {
        ad::Var logits = forward_stages(g, c.params, c.spec, g.input(data.images(batch)), 0, end);
        ad::Var loss = ad::cross_entropy(logits, data.task_labels(batch, Task::kDigit));
        s.distortion = loss.value().item();
        return loss;
      },
      "train_teacher");
  set_meta(c, cfg);
  c.metadata["task"] = "digit";
  return r;
}

TrainResult stage1_distill(const Checkpoint& student, const Checkpoint& teacher, const Dataset& data,
                           const TrainConfig& cfg) {
  cfg.validate(true);
  if (!student.has_prior()) fail(ErrorKind::kInvalidArgument, "stage1_distill needs a student with a prior");
  TrainResult r{student, {}};
  Checkpoint& c = r.ckpt;
  const int split = c.spec.mobile_stages;
  set_all_trainable(c, false);
  set_stage_trainable(c, 0, true);
  set_stage_trainable(c, split, true);
  set_trainable(c.params, "prior.", true);

  const int t_split = teacher.spec.mobile_stages;
  const FeatureCache h_cache(data, [&](const Tensor& x) { return run_stages(teacher, x, 0, t_split); });
  FeatureCache aux_cache;
  if (cfg.aux_features) {
    aux_cache = FeatureCache(data, [&](const Tensor& x) { return run_stages(teacher, x, 0, t_split + 1); });
  }
  r.log = run_training(
      data.size(), cfg, c.params,
      [&](ad::Graph& g, std::span<const size_t> batch, std::mt19937_64& rng, BatchStats& s) {
        ad::Var z = forward_stages(g, c.params, c.spec, g.input(data.images(batch)), 0, split);
        ad::Var zn = noise_quantize(z, rng);
        ad::Var h = g.input(h_cache.gather(batch));
        RdTerms t = rd_loss(g, c, h, zn, cfg.beta);
        s.distortion = t.distortion.value().item();
        s.rate_bits = t.rate_nats.value().item() * static_cast<double>(h.value().numel()) /
                      static_cast<double>(batch.size()) / std::numbers::ln2;
        if (!cfg.aux_features) return t.loss;
        ad::Var a = forward_stages(g, c.params, c.spec, t.h_hat, split + 1, split + 2);
        ad::Var target = g.input(aux_cache.gather(batch));
        return t.loss + ad::squared_error(target, a) * (0.5 / static_cast<double>(target.value().numel()));
      },
      "stage1_distill");
  c.stage = StageTag::kStage1;
  set_meta(c, cfg);
  c.metadata["task"] = "digit";
  export_tables(c);
  return r;
}

TrainResult stage2_finetune(const Checkpoint& stage1, const Checkpoint& teacher, const Dataset& data,
                            const TrainConfig& cfg) {
  cfg.validate(true);
  TrainResult r{stage1, {}};
  Checkpoint& c = r.ckpt;
  if (c.tables.empty()) export_tables(c);
  const int split = c.spec.mobile_stages, end = num_stages(c);
  set_all_trainable(c, true);
  for (int s = 0; s < split; ++s) set_stage_trainable(c, s, false);
  set_trainable(c.params, "prior.", false);

  // Frozen encoder + rounding: the bottleneck of every sample is fixed.
  const FeatureCache z_cache(data, [&](const Tensor& x) {
    Tensor z = encoder_forward(c, x);
    for (double& v : z.data()) v = round_half_away(v);
    return z;
  });
  const FeatureCache t_logits(data, [&](const Tensor& x) { return full_forward(teacher, x); });
  r.log = run_training(
      data.size(), cfg, c.params,
      [&](ad::Graph& g, std::span<const size_t> batch, std::mt19937_64&, BatchStats& s) {
        ad::Var logits = forward_stages(g, c.params, c.spec, g.input(z_cache.gather(batch)), split, end);
        ad::Var loss = kd_loss(logits, g.input(t_logits.gather(batch)), data.task_labels(batch, Task::kDigit),
                               cfg.alpha, cfg.tau);
        s.distortion = loss.value().item();
        return loss;
      },
      "stage2_finetune");
  c.stage = StageTag::kStage2;
  c.metadata["stage2_epochs"] = std::to_string(cfg.epochs);
  return r;
}

TrainResult train_end2end(const Checkpoint& student, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate(true);
  if (!student.has_prior()) fail(ErrorKind::kInvalidArgument, "train_end2end needs a student with a prior");
  TrainResult r{student, {}};
  Checkpoint& c = r.ckpt;
  set_all_trainable(c, true);
  const int split = c.spec.mobile_stages, end = num_stages(c);
  const double p_min = 1.0 / (1 << kDefaultPrecision);
  r.log = run_training(
      data.size(), cfg, c.params,
      [&](ad::Graph& g, std::span<const size_t> batch, std::mt19937_64& rng, BatchStats& s) {
        ad::Var z = forward_stages(g, c.params, c.spec, g.input(data.images(batch)), 0, split);
        ad::Var zn = noise_quantize(z, rng);
        ad::Var logits = forward_stages(g, c.params, c.spec, zn, split, end);
        ad::Var ce = ad::cross_entropy(logits, data.task_labels(batch, Task::kDigit));
        ad::Var rate = neg_log_sum(prior_likelihood(g, c.params, zn, p_min)) * (1.0 / static_cast<double>(batch.size()));
        s.distortion = ce.value().item();
        s.rate_bits = rate.value().item() / std::numbers::ln2;
        return cfg.beta == 0 ? ce : ce + rate * cfg.beta;
      },
      "train_end2end");
  c.stage = StageTag::kEnd2End;
  set_meta(c, cfg);
  c.metadata["task"] = "digit";
  export_tables(c);
  return r;
}

TrainResult train_crbq(const Checkpoint& student, const Checkpoint& teacher, const Dataset& data,
                       const TrainConfig& cfg) {
  cfg.validate(true);
  TrainResult r{student, {}};
  Checkpoint& c = r.ckpt;
  const int split = c.spec.mobile_stages;
  set_all_trainable(c, false);
  set_stage_trainable(c, 0, true);
  set_stage_trainable(c, split, true);
  const int t_split = teacher.spec.mobile_stages;
  const FeatureCache h_cache(data, [&](const Tensor& x) { return run_stages(teacher, x, 0, t_split); });
  const FeatureCache a_cache(data, [&](const Tensor& x) { return run_stages(teacher, x, 0, t_split + 1); });
  r.log = run_training(
      data.size(), cfg, c.params,
      [&](ad::Graph& g, std::span<const size_t> batch, std::mt19937_64&, BatchStats& s) {
        ad::Var z = forward_stages(g, c.params, c.spec, g.input(data.images(batch)), 0, split);
        ad::Var h_hat = forward_stages(g, c.params, c.spec, z, split, split + 1);
        ad::Var a = forward_stages(g, c.params, c.spec, h_hat, split + 1, split + 2);
        ad::Var h = g.input(h_cache.gather(batch));
        ad::Var at = g.input(a_cache.gather(batch));
        ad::Var loss = ad::squared_error(h, h_hat) * (0.5 / static_cast<double>(h.value().numel())) +
                       ad::squared_error(at, a) * (0.5 / static_cast<double>(at.value().numel()));
        s.distortion = loss.value().item();
        return loss;
      },
      "train_crbq");
  c.stage = StageTag::kCrbq;
  set_meta(c, cfg);
  c.metadata["task"] = "digit";
  return r;
}

TrainResult finetune_task(const Checkpoint& student, Task task, const Dataset& data, const TrainConfig& cfg,
                          bool warm_start) {
  cfg.validate(true);
  const int split = student.spec.mobile_stages;
  const int end = num_stages(student);
  if (end < split + 2) fail(ErrorKind::kInvalidArgument, "student has no tail to clone");
  TrainResult r;
  Checkpoint& c = r.ckpt;
  c.spec = student.spec;
  c.tables = student.tables;
  c.metadata = student.metadata;
  const std::string tag = task_name(task);
  for (int s = split + 1; s < end; ++s) {
    StageSpec& st = c.spec.stages[static_cast<size_t>(s)];
    st.name = tag + "_" + student.spec.stages[static_cast<size_t>(s)].name;
  }
  LayerSpec& last = c.spec.stages.back().layers.back();
  if (last.kind != LayerKind::kLinear) fail(ErrorKind::kInvalidArgument, "student head does not end in a linear layer");
  last.out_ch = task_classes(task);
  validate_spec(c.spec);

  for (const auto& [name, p] : student.params) {
    const bool front = name.rfind(student.spec.stages[0].name + ".", 0) == 0 ||
                       name.rfind(student.spec.stages[static_cast<size_t>(split)].name + ".", 0) == 0 ||
                       name.rfind("prior.", 0) == 0;
    if (front) c.params[name] = {p.value, false};
  }
  std::mt19937_64 init_rng(cfg.seed ^ 0x6865616473ULL);
  for (int s = split + 1; s < end; ++s) init_stage_params(c.spec, s, c.params, init_rng);
  if (warm_start) {
    for (int s = split + 1; s + 1 < end; ++s) {
      const std::string from = student.spec.stages[static_cast<size_t>(s)].name + ".";
      const std::string to = c.spec.stages[static_cast<size_t>(s)].name + ".";
      for (const auto& [name, p] : student.params) {
        if (name.rfind(from, 0) == 0) c.params[to + name.substr(from.size())] = {p.value, true};
      }
    }
  }
  validate_checkpoint(c);

  const FeatureCache h_cache(data, [&](const Tensor& x) {
    Tensor z = encoder_forward(c, x);
    for (double& v : z.data()) v = round_half_away(v);
    return decoder_forward(c, z);
  });
  r.log = run_training(
      data.size(), cfg, c.params,
      [&](ad::Graph& g, std::span<const size_t> batch, std::mt19937_64&, BatchStats& s) {
        ad::Var logits = forward_stages(g, c.params, c.spec, g.input(h_cache.gather(batch)), split + 1, end);
        ad::Var loss = ad::cross_entropy(logits, data.task_labels(batch, task));
        s.distortion = loss.value().item();
        return loss;
      },
      "finetune_task");
  c.stage = StageTag::kTaskHead;
  c.metadata["task"] = tag;
  c.metadata["head_epochs"] = std::to_string(cfg.epochs);
  return r;
}

void export_tables(Checkpoint& ckpt, int bound, int precision) {
  const FactorizedPrior prior(ckpt.params);
  ckpt.tables = export_cdf_tables(prior, bound, precision);
}

// ---- Evaluation -------------------------------------------------------------------

Task checkpoint_task(const Checkpoint& ckpt) {
  auto it = ckpt.metadata.find("task");
  return it == ckpt.metadata.end() ? Task::kDigit : task_from_name(it->second);
}

BottleneckMode default_mode(const Checkpoint& ckpt) {
  switch (ckpt.stage) {
    case StageTag::kTeacher: return BottleneckMode::kContinuous;
    case StageTag::kCrbq: return BottleneckMode::kU8;
    default: return BottleneckMode::kRounded;
  }
}

Tensor predict_logits(const Checkpoint& ckpt, const Tensor& images, BottleneckMode mode) {
  if (ckpt.stage == StageTag::kTeacher) return full_forward(ckpt, images);
  Tensor z = encoder_forward(ckpt, images);
  if (mode == BottleneckMode::kRounded) {
    for (double& v : z.data()) v = round_half_away(v);
  } else if (mode == BottleneckMode::kU8) {
    const int64_t n = z.dim(0), per = z.numel() / n;
    Shape one(z.shape().begin() + 1, z.shape().end());
    for (int64_t i = 0; i < n; ++i) {
      Tensor zi(one, std::vector<double>(z.data().begin() + i * per, z.data().begin() + (i + 1) * per));
      const Tensor dq = dequantize_u8(quantize_u8(zi));
      std::copy(dq.data().begin(), dq.data().end(), z.data().begin() + i * per);
    }
  }
  return server_forward(ckpt, z);
}

double evaluate_accuracy(const Checkpoint& ckpt, const Dataset& data, BottleneckMode mode, size_t batch) {
  if (data.size() == 0) fail(ErrorKind::kInvalidArgument, "evaluate_accuracy: empty dataset");
  const Task task = checkpoint_task(ckpt);
  size_t correct = 0;
  for (size_t b = 0; b < data.size(); b += batch) {
    const size_t e = std::min(data.size(), b + batch);
    const auto pred = argmax_rows(predict_logits(ckpt, data.images(b, e), mode));
    const auto labels = data.task_labels(b, e, task);
    for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

RDPoint eval_rd(const Checkpoint& ckpt, const Dataset& data) {
  if (data.size() == 0) fail(ErrorKind::kInvalidArgument, "eval_rd: empty dataset");
  RDPoint p;
  p.beta_id = checkpoint_beta_id(ckpt);
  if (auto it = ckpt.metadata.find("beta"); it != ckpt.metadata.end()) p.beta = std::stod(it->second);
  const Codec codec = checkpoint_codec(ckpt);
  double bytes = 0, analytic = 0, coded = 0;
  const Shape latent = ckpt.latent_shape();
  const int64_t per = shape_numel(latent);
  for (size_t b = 0; b < data.size(); b += kEvalBatch) {
    const size_t e = std::min(data.size(), b + kEvalBatch);
    const Tensor z = encoder_forward(ckpt, data.images(b, e));
    for (size_t i = 0; i < e - b; ++i) {
      const auto first = z.data().begin() + static_cast<int64_t>(i) * per;
      const Tensor zi(latent, std::vector<double>(first, first + per));
      LatentCode code;
      const PayloadFrame f = encode_bottleneck(ckpt, zi, &code);
      bytes += static_cast<double>(f.wire_size());
      coded += static_cast<double>(f.bitstream.size()) * 8;
      if (codec == Codec::kEntropic) {
        analytic += table_bits(code, ckpt.tables);
        p.escapes += static_cast<int64_t>(code.escapes.size());
      }
    }
  }
  const double n = static_cast<double>(data.size());
  p.bytes_per_sample = bytes / n;
  p.bits_per_pixel = p.bytes_per_sample * 8 / (static_cast<double>(data.height) * data.width);
  p.analytic_bits = analytic / n;
  p.coded_bits = coded / n;
  p.accuracy = evaluate_accuracy(ckpt, data, default_mode(ckpt));
  return p;
}

Tensor bit_allocation_map(const Checkpoint& ckpt, const Tensor& image, double* total_bits) {
  if (image.rank() != 3) fail(ErrorKind::kShape, "bit_allocation_map expects one [C,H,W] image");
  if (ckpt.tables.empty()) fail(ErrorKind::kInvalidArgument, "bit_allocation_map needs exported tables");
  const Tensor z = encoder_forward(ckpt, image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}));
  const Shape latent = ckpt.latent_shape();
  const LatentCode code = round_quantize(z.reshaped(latent), -ckpt.tables[0].offset);
  const int64_t h = latent[1], w = latent[2];
  std::vector<double> cell(static_cast<size_t>(h * w), 0.0);
  size_t e = 0;
  for (int64_t i = 0; i < code.size(); ++i) {
    const CdfTable& t = ckpt.tables[static_cast<size_t>(i / (h * w))];
    int idx;
    if (e < code.escapes.size() && code.escapes[e].index == static_cast<uint32_t>(i)) {
      idx = t.escape_index();
      ++e;
    } else {
      idx = t.index_of(code.symbols[static_cast<size_t>(i)]);
    }
    cell[static_cast<size_t>(i % (h * w))] -= std::log2(t.probability(idx));
  }
  const double total = std::accumulate(cell.begin(), cell.end(), 0.0);
  if (total_bits) *total_bits = total;
  const auto [lo, hi] = std::minmax_element(cell.begin(), cell.end());
  const double range = *hi - *lo;
  const int64_t H = image.dim(1), W = image.dim(2);
  Tensor map({H, W});
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      const double v = cell[static_cast<size_t>((y * h / H) * w + x * w / W)];
      map[y * W + x] = range > 0 ? (v - *lo) / range : 0.0;
    }
  }
  return map;
}

CsvTable make_rd_table() {
  CsvTable t;
  t.schema = kRdSchema;
  t.columns = kRdColumns;
  return t;
}

CsvTable train_log_table(std::span<const EpochLog> log) {
  CsvTable t;
  t.schema = kTrainLogSchema;
  t.columns = kTrainLogColumns;
  for (const EpochLog& e : log) {
    t.add_row({std::to_string(e.epoch), format_double(e.lr), format_double(e.loss), format_double(e.distortion),
               format_double(e.rate_bits)});
  }
  return t;
}

void append_rd_row(CsvTable& table, const std::string& run_id, const RDPoint& p, const Checkpoint& ckpt) {
  table.add_row({run_id, format_double(p.beta), format_double(p.bytes_per_sample), format_double(p.bits_per_pixel),
                 format_double(p.accuracy), std::to_string(count_params(ckpt.spec, Side::kMobile)),
                 std::to_string(count_params(ckpt.spec, Side::kServer))});
}

}  // namespace esplit
