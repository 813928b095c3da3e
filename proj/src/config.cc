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


#include "esplit/config.h"

#include <initializer_list>
#include <nlohmann/json.hpp>

#include "esplit/bytes.h"
#include "esplit/error.h"

namespace esplit {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(ErrorKind::kConfig, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) fail(ErrorKind::kConfig, "unknown config key " + where + "." + key);
  }
}

template <typename T>
void read(const json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::kConfig, "config key " + where + "." + key + " has the wrong type");
  }
}

void read_train(const json& j, const std::string& where, TrainConfig& c) {
  check_keys(j, where, {"beta", "alpha", "tau", "lr", "batch_size", "epochs", "optimizer", "momentum",
                        "weight_decay", "clip_norm", "aux_features"});
  read(j, "beta", where, c.beta);
  read(j, "alpha", where, c.alpha);
  read(j, "tau", where, c.tau);
  read(j, "batch_size", where, c.batch_size);
  read(j, "epochs", where, c.epochs);
  read(j, "momentum", where, c.momentum);
  read(j, "weight_decay", where, c.weight_decay);
  read(j, "clip_norm", where, c.clip_norm);
  read(j, "aux_features", where, c.aux_features);
  if (j.contains("optimizer")) {
    std::string o;
    read(j, "optimizer", where, o);
    if (o == "sgd") {
      c.optimizer = OptimizerKind::kSgd;
    } else if (o == "adam") {
      c.optimizer = OptimizerKind::kAdam;
    } else {
      fail(ErrorKind::kConfig, where + ".optimizer must be \"sgd\" or \"adam\"");
    }
  }
  if (j.contains("lr")) {
    const json& l = j.at("lr");
    const std::string lw = where + ".lr";
    check_keys(l, lw, {"initial", "milestones", "factor", "cosine"});
    read(l, "initial", lw, c.lr.initial);
    read(l, "milestones", lw, c.lr.milestones);
    read(l, "factor", lw, c.lr.factor);
    read(l, "cosine", lw, c.lr.cosine);
  }
}

json train_json(const TrainConfig& c) {
  return {{"beta", c.beta},
          {"alpha", c.alpha},
          {"tau", c.tau},
          {"lr", {{"initial", c.lr.initial}, {"milestones", c.lr.milestones}, {"factor", c.lr.factor},
                  {"cosine", c.lr.cosine}}},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"optimizer", c.optimizer == OptimizerKind::kSgd ? "sgd" : "adam"},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"clip_norm", c.clip_norm},
          {"aux_features", c.aux_features}};
}

void read_compute(const json& j, const std::string& where, ComputeProfile& p) {
  check_keys(j, where, {"seconds_per_mac", "measured", "multiplier"});
  read(j, "seconds_per_mac", where, p.seconds_per_mac);
  read(j, "measured", where, p.measured);
  read(j, "multiplier", where, p.multiplier);
}

json compute_json(const ComputeProfile& p) {
  return {{"seconds_per_mac", p.seconds_per_mac}, {"measured", p.measured}, {"multiplier", p.multiplier}};
}

}  // namespace

TrainConfig RunConfig::phase(const TrainConfig& c) const {
  TrainConfig out = c;
  out.seed = seed;
  return out;
}

void RunConfig::validate() const {
  teacher.validate(true);
  stage1.validate();
  stage2.validate(true);
  end2end.validate();
  crbq.validate(true);
  head.validate(true);
  channel.validate();
  if (dataset.n_train == 0 || dataset.n_test == 0) fail(ErrorKind::kConfig, "dataset sizes must be positive");
  if (arch.latent_channels <= 0 || crbq_latent_channels <= 0 || arch.encoder_channels <= 0 ||
      arch.decoder_channels <= 0 || arch.num_classes < 2 || arch.image_size < 8 || arch.image_size % 8 != 0) {
    fail(ErrorKind::kConfig, "invalid model options");
  }
  for (size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] > 0)) fail(ErrorKind::kConfig, "betas must be positive");
    if (i > 0 && !(betas[i] > betas[i - 1])) fail(ErrorKind::kConfig, "betas must be strictly increasing");
  }
  for (const ComputeProfile* p : {&mobile, &server}) {
    if (!(p->seconds_per_mac >= 0) || !(p->multiplier > 0)) {
      fail(ErrorKind::kConfig, "compute profile " + p->name + " has invalid costs");
    }
  }
}

RunConfig default_config() {
  RunConfig c;

  c.teacher.optimizer = OptimizerKind::kAdam;
  c.teacher.lr.initial = 2e-3;
  c.teacher.lr.cosine = true;
  c.teacher.batch_size = 16;
  c.teacher.epochs = 8;
  c.teacher.beta = 0;

  c.stage1.optimizer = OptimizerKind::kAdam;
  c.stage1.lr.initial = 2e-3;
  c.stage1.lr.cosine = true;
  c.stage1.batch_size = 32;
  c.stage1.epochs = 8;
  c.stage1.clip_norm = 1.0;

  c.stage2.optimizer = OptimizerKind::kAdam;
  c.stage2.lr.initial = 2e-3;
  c.stage2.lr.cosine = true;
  c.stage2.batch_size = 32;
  c.stage2.epochs = 8;

  c.end2end = c.stage1;
  c.end2end.epochs = 8;

  c.crbq = c.stage1;
  c.crbq.beta = 0;

  c.head.optimizer = OptimizerKind::kAdam;
  c.head.lr.initial = 2e-3;
  c.head.lr.cosine = true;
  c.head.batch_size = 32;
  c.head.epochs = 3;
  c.head.beta = 0;

  c.betas = {0.02, 0.08, 0.32};
  c.stage1.beta = c.betas.front();
  // Lowest e2e rate point at or above the two-stage rate at betas.back().
  c.end2end.beta = 2.5e-4;
  return c;
}

RunConfig config_from_json(const std::string& json_text, RunConfig c) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config", {"seed", "dataset", "model", "teacher", "stage1", "stage2", "end2end", "crbq", "head",
                           "betas", "channel", "compute"});
  read(j, "seed", "config", c.seed);
  read(j, "betas", "config", c.betas);
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    check_keys(d, "dataset", {"train_path", "test_path", "n_train", "n_test", "train_seed", "test_seed"});
    read(d, "train_path", "dataset", c.dataset.train_path);
    read(d, "test_path", "dataset", c.dataset.test_path);
    read(d, "n_train", "dataset", c.dataset.n_train);
    read(d, "n_test", "dataset", c.dataset.n_test);
    read(d, "train_seed", "dataset", c.dataset.train_seed);
    read(d, "test_seed", "dataset", c.dataset.test_seed);
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, "model", {"image_size", "num_classes", "latent_channels", "encoder_channels", "decoder_channels",
                            "crbq_latent_channels"});
    read(m, "image_size", "model", c.arch.image_size);
    read(m, "num_classes", "model", c.arch.num_classes);
    read(m, "latent_channels", "model", c.arch.latent_channels);
    read(m, "encoder_channels", "model", c.arch.encoder_channels);
    read(m, "decoder_channels", "model", c.arch.decoder_channels);
    read(m, "crbq_latent_channels", "model", c.crbq_latent_channels);
  }
  const std::pair<const char*, TrainConfig*> phases[] = {{"teacher", &c.teacher}, {"stage1", &c.stage1},
                                                         {"stage2", &c.stage2},   {"end2end", &c.end2end},
                                                         {"crbq", &c.crbq},       {"head", &c.head}};
  for (const auto& [key, cfg] : phases) {
    if (j.contains(key)) read_train(j[key], key, *cfg);
  }
  if (j.contains("channel")) {
    const json& ch = j["channel"];
    check_keys(ch, "channel", {"data_rate_bps", "overhead_bytes", "loss_probability"});
    read(ch, "data_rate_bps", "channel", c.channel.data_rate_bps);
    read(ch, "overhead_bytes", "channel", c.channel.overhead_bytes);
    read(ch, "loss_probability", "channel", c.channel.loss_probability);
  }
  if (j.contains("compute")) {
    const json& cp = j["compute"];
    check_keys(cp, "compute", {"mobile", "server"});
    if (cp.contains("mobile")) read_compute(cp["mobile"], "compute.mobile", c.mobile);
    if (cp.contains("server")) read_compute(cp["server"], "compute.server", c.server);
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path, RunConfig base) {
  const std::vector<uint8_t> bytes = read_file(path);
  return config_from_json(std::string(bytes.begin(), bytes.end()), std::move(base));
}

std::string config_to_json(const RunConfig& c) {
  json j = {
      {"seed", c.seed},
      {"dataset", {{"train_path", c.dataset.train_path}, {"test_path", c.dataset.test_path},
                   {"n_train", c.dataset.n_train}, {"n_test", c.dataset.n_test},
                   {"train_seed", c.dataset.train_seed}, {"test_seed", c.dataset.test_seed}}},
      {"model", {{"image_size", c.arch.image_size}, {"num_classes", c.arch.num_classes},
                 {"latent_channels", c.arch.latent_channels}, {"encoder_channels", c.arch.encoder_channels},
                 {"decoder_channels", c.arch.decoder_channels}, {"crbq_latent_channels", c.crbq_latent_channels}}},
      {"teacher", train_json(c.teacher)},
      {"stage1", train_json(c.stage1)},
      {"stage2", train_json(c.stage2)},
      {"end2end", train_json(c.end2end)},
      {"crbq", train_json(c.crbq)},
      {"head", train_json(c.head)},
      {"betas", c.betas},
      {"channel", {{"data_rate_bps", c.channel.data_rate_bps}, {"overhead_bytes", c.channel.overhead_bytes},
                   {"loss_probability", c.channel.loss_probability}}},
      {"compute", {{"mobile", compute_json(c.mobile)}, {"server", compute_json(c.server)}}},
  };
  return j.dump(2) + "\n";
}

namespace {

Dataset load_or_make(const RunConfig& cfg, const std::string& path, size_t n, uint64_t seed) {
  const int size = cfg.arch.image_size;
  if (path.empty()) return make_digits(n, seed, digit_options_for(size));
  Dataset d = load_dataset(path);
  if (d.channels != 3 || d.height != size || d.width != size) {
    fail(ErrorKind::kConfig, path + " holds " + std::to_string(d.height) + "x" + std::to_string(d.width) +
                                 " images, the architecture expects " + std::to_string(size));
  }
  return d;
}

}  // namespace

Dataset load_train_set(const RunConfig& cfg) {
  return load_or_make(cfg, cfg.dataset.train_path, cfg.dataset.n_train, cfg.dataset.train_seed);
}

Dataset load_test_set(const RunConfig& cfg) {
  return load_or_make(cfg, cfg.dataset.test_path, cfg.dataset.n_test, cfg.dataset.test_seed);
}

Checkpoint fresh_student(const Checkpoint& teacher, const RunConfig& cfg, bool entropic) {
  ArchOptions arch = cfg.arch;
  if (!entropic) arch.latent_channels = cfg.crbq_latent_channels;
  const int features = static_cast<int>(teacher_feature_shape(teacher.spec)[0]);
  StageSpec enc = encoder_stage(arch);
  if (!entropic) {
    // Plain ReLU convs in place of GDN for the baseline bottleneck.
    for (LayerSpec& l : enc.layers) {
      if (l.kind == LayerKind::kGdn) l = LayerSpec{.kind = LayerKind::kRelu};
    }
  }
  std::mt19937_64 rng(cfg.seed ^ (entropic ? 0x73747564ULL : 0x63726271ULL));
  return build_student(teacher, enc, decoder_stage(arch, features), rng, entropic);
}

TrainResult recipe_teacher(const Dataset& train, const RunConfig& cfg) {
  return train_teacher(train, cfg.phase(cfg.teacher), cfg.arch);
}

TrainResult recipe_stage1(const Checkpoint& teacher, const Dataset& train, const RunConfig& cfg, double beta,
                          uint16_t beta_id) {
  TrainConfig c = cfg.phase(cfg.stage1);
  c.beta = beta;
  c.beta_id = beta_id;
  return stage1_distill(fresh_student(teacher, cfg, true), teacher, train, c);
}

TrainResult recipe_stage2(const Checkpoint& stage1, const Checkpoint& teacher, const Dataset& train,
                          const RunConfig& cfg) {
  return stage2_finetune(stage1, teacher, train, cfg.phase(cfg.stage2));
}

TrainResult recipe_end2end(const Checkpoint& teacher, const Dataset& train, const RunConfig& cfg) {
  return train_end2end(fresh_student(teacher, cfg, true), train, cfg.phase(cfg.end2end));
}

TrainResult recipe_crbq(const Checkpoint& teacher, const Dataset& train, const RunConfig& cfg) {
  return train_crbq(fresh_student(teacher, cfg, false), teacher, train, cfg.phase(cfg.crbq));
}

TrainResult recipe_head(const Checkpoint& student, Task task, const Dataset& train, const RunConfig& cfg) {
  return finetune_task(student, task, train, cfg.phase(cfg.head));
}

}  // namespace esplit
