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


// esplit: command-line front end for training, evaluation, sweeps, split
// runs and latency simulation. Every command writes into
// $ESPLIT_RUN_ROOT/<run-id>/ (default root "runs") together with a
// manifest.json listing inputs and outputs with their git blob hashes.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "esplit/bytes.h"
#include "esplit/config.h"
#include "esplit/csv.h"
#include "esplit/error.h"
#include "esplit/hashing.h"
#include "esplit/split_runtime.h"
#include "esplit/training.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace esplit {
namespace {

constexpr int kUsageExit = 2;
constexpr int kUnexpectedExit = 1;
constexpr int kErrorExitBase = 10;  // + ErrorKind

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct GlobalOptions {
  std::string config_path;
  std::string run_id;
  std::string run_root;
  int64_t seed = -1;
  std::string train_data;
  std::string test_data;
  int64_t n_train = -1;
  int64_t n_test = -1;
  double rate_bps = 0;
};

class Run {
 public:
  Run(const GlobalOptions& g, const std::string& command, std::vector<std::string> argv, RunConfig cfg)
      : cfg_(std::move(cfg)) {
    std::string root = g.run_root;
    if (root.empty()) {
      const char* env = std::getenv("ESPLIT_RUN_ROOT");
      root = env && *env ? env : "runs";
    }
    dir_ = fs::path(root) / (g.run_id.empty() ? command : g.run_id);
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::kIo, "cannot create run directory " + dir_.string() + ": " + ec.message());
    manifest_["command"] = command;
    manifest_["argv"] = std::move(argv);
    manifest_["seed"] = cfg_.seed;
    manifest_["config"] = json::parse(config_to_json(cfg_));
    manifest_["started"] = utc_now();
    manifest_["inputs"] = json::array();
    manifest_["outputs"] = json::array();
    const std::string cfg_text = config_to_json(cfg_);
    write("config.json", std::vector<uint8_t>(cfg_text.begin(), cfg_text.end()));
  }

  const RunConfig& cfg() const { return cfg_; }
  const fs::path& dir() const { return dir_; }

  void input(const std::string& path) {
    std::lock_guard lock(mu_);
    manifest_["inputs"].push_back({{"path", path}, {"git_blob", git_blob_hash_file(path)}});
  }

  std::string write(const std::string& name, std::span<const uint8_t> bytes) {
    const fs::path p = dir_ / name;
    write_file(p.string(), bytes);
    std::lock_guard lock(mu_);
    manifest_["outputs"].push_back({{"path", name}, {"git_blob", git_blob_hash(bytes)}});
    return p.string();
  }
  std::string write_text(const std::string& name, const std::string& text) {
    return write(name, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
  }
  std::string write_csv(const std::string& name, const CsvTable& t) { return write_text(name, to_csv(t)); }
  std::string write_ckpt(const std::string& name, const Checkpoint& c) {
    const std::vector<uint8_t> bytes = serialize_checkpoint(c);
    const std::string path = write(name, bytes);
    std::lock_guard lock(mu_);
    manifest_["outputs"].back()["sha256"] = sha256_hex(bytes);
    return path;
  }

  Checkpoint load_ckpt(const std::string& path) {
    input(path);
    return load_checkpoint(path);
  }

  Dataset train_set() {
    if (!cfg_.dataset.train_path.empty()) input(cfg_.dataset.train_path);
    return load_train_set(cfg_);
  }
  Dataset test_set() {
    if (!cfg_.dataset.test_path.empty()) input(cfg_.dataset.test_path);
    return load_test_set(cfg_);
  }

  void finish() {
    manifest_["finished"] = utc_now();
    const std::string text = manifest_.dump(2) + "\n";
    write_file((dir_ / "manifest.json").string(), std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
    std::cout << "run directory: " << dir_.string() << "\n";
  }

 private:
  RunConfig cfg_;
  fs::path dir_;
  json manifest_;
  std::mutex mu_;
};

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig c = g.config_path.empty() ? default_config() : load_config(g.config_path);
  if (g.seed >= 0) c.seed = static_cast<uint64_t>(g.seed);
  if (!g.train_data.empty()) c.dataset.train_path = g.train_data;
  if (!g.test_data.empty()) c.dataset.test_path = g.test_data;
  if (g.n_train > 0) c.dataset.n_train = static_cast<size_t>(g.n_train);
  if (g.n_test > 0) c.dataset.n_test = static_cast<size_t>(g.n_test);
  if (g.rate_bps != 0) c.channel.data_rate_bps = g.rate_bps;
  c.validate();
  return c;
}

void print_log(const std::vector<EpochLog>& log) {
  for (const EpochLog& e : log) {
    std::cout << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.loss;
    if (e.rate_bits > 0) std::cout << " rate_bits " << e.rate_bits;
    std::cout << "\n";
  }
}

void print_rd(const std::string& id, const RDPoint& p) {
  std::cout << id << ": beta " << p.beta << " bytes/sample " << p.bytes_per_sample << " bpp " << p.bits_per_pixel
            << " accuracy " << p.accuracy << "\n";
}

// Known CSV schemas, for validated reads.
const std::vector<std::string>& schema_columns(const std::string& schema) {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> known = {
      {kRdSchema, kRdColumns},
      {kLatencySchema, kLatencyColumns},
      {kScenarioSchema, kScenarioColumns},
      {kTrainLogSchema, kTrainLogColumns},
  };
  for (const auto& [s, cols] : known) {
    if (s == schema) return cols;
  }
  fail(ErrorKind::kFormat, "unknown CSV schema '" + schema + "'");
}

CsvTable read_any_csv(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  const std::string prefix = "#schema=";
  if (text.rfind(prefix, 0) != 0) fail(ErrorKind::kFormat, path + " has no schema line");
  const std::string schema = text.substr(prefix.size(), text.find('\n') - prefix.size());
  return parse_csv(text, schema, schema_columns(schema));
}

std::string gnuplot_data(const CsvTable& t) {
  std::string out = "# " + t.schema + "\n#";
  for (const std::string& c : t.columns) out += " " + c;
  out += "\n";
  for (const auto& row : t.rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      out += (i ? " " : "") + (row[i].empty() ? std::string("\"\"") : row[i]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace

int run_main(int argc, char** argv);

}  // namespace esplit

namespace esplit {
namespace {

std::vector<std::string> args_of(int argc, char** argv) { return std::vector<std::string>(argv + 1, argv + argc); }

int replay(const std::string& manifest_path, const std::string& run_root);

}  // namespace

int run_main(int argc, char** argv) {
  CLI::App app{"esplit: supervised feature compression for split inference"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON config file; flags override its keys");
  app.add_option("--run-id", g.run_id, "run directory name (default: the command name)");
  app.add_option("--run-root", g.run_root, "run directory root (default: $ESPLIT_RUN_ROOT or ./runs)");
  app.add_option("--seed", g.seed, "base seed for every training phase");
  app.add_option("--train-data", g.train_data, "dataset file for training (default: synthesize)");
  app.add_option("--test-data", g.test_data, "dataset file for evaluation (default: synthesize)");
  app.add_option("--n-train", g.n_train, "synthetic training set size");
  app.add_option("--n-test", g.n_test, "synthetic test set size");
  app.add_option("--rate-bps", g.rate_bps, "channel data rate in bits per second");

  const std::vector<std::string> all_args = args_of(argc, argv);
  auto make_run = [&](const std::string& cmd) { return Run(g, cmd, all_args, resolve_config(g)); };

  // make-dataset
  auto* mk = app.add_subcommand("make-dataset", "synthesize train and test sets");
  mk->callback([&] {
    Run run = make_run("make-dataset");
    run.write("train.esds", serialize_dataset(run.train_set()));
    run.write("test.esds", serialize_dataset(run.test_set()));
    run.finish();
  });

  // train-teacher
  int teacher_epochs = 0;
  auto* tt = app.add_subcommand("train-teacher", "train the teacher classifier");
  tt->add_option("--epochs", teacher_epochs, "override teacher epochs");
  tt->callback([&] {
    Run run = make_run("train-teacher");
    RunConfig cfg = run.cfg();
    if (teacher_epochs > 0) cfg.teacher.epochs = teacher_epochs;
    const Dataset train = run.train_set();
    const TrainResult r = recipe_teacher(train, cfg);
    print_log(r.log);
    std::cout << "test accuracy " << evaluate_accuracy(r.ckpt, run.test_set(), BottleneckMode::kContinuous) << "\n";
    run.write_ckpt("teacher.ckpt", r.ckpt);
    run.write_csv("train_log.csv", train_log_table(r.log));
    run.finish();
  });

  // train-student
  int stage = 1;
  double beta = 0;
  int beta_id = -1;
  std::string teacher_path, student_path;
  auto* ts = app.add_subcommand("train-student", "stage 1 (distill + rate) or stage 2 (tail fine-tune)");
  ts->add_option("--stage", stage, "1 or 2")->check(CLI::IsMember({1, 2}));
  ts->add_option("--beta", beta, "stage-1 rate weight (default: first configured beta)");
  ts->add_option("--beta-id", beta_id, "rate-point id written into frames");
  ts->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
  ts->add_option("--student", student_path, "stage-1 checkpoint (stage 2 only)");
  ts->callback([&] {
    Run run = make_run("train-student");
    const Checkpoint teacher = run.load_ckpt(teacher_path);
    const Dataset train = run.train_set();
    TrainResult r;
    if (stage == 1) {
      const double b = beta > 0 ? beta : run.cfg().stage1.beta;
      r = recipe_stage1(teacher, train, run.cfg(), b, static_cast<uint16_t>(std::max(beta_id, 0)));
    } else {
      if (student_path.empty()) fail(ErrorKind::kConfig, "--student is required for stage 2");
      r = recipe_stage2(run.load_ckpt(student_path), teacher, train, run.cfg());
    }
    print_log(r.log);
    print_rd("student", eval_rd(r.ckpt, run.test_set()));
    run.write_ckpt("student.ckpt", r.ckpt);
    run.write_csv("train_log.csv", train_log_table(r.log));
    run.finish();
  });

  // train-baseline
  std::string kind;
  auto* tb = app.add_subcommand("train-baseline", "end-to-end entropic student or CR+BQ baseline");
  tb->add_option("--kind", kind, "end2end or crbq")->required()->check(CLI::IsMember({"end2end", "crbq"}));
  tb->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
  tb->callback([&] {
    Run run = make_run("train-baseline");
    const Checkpoint teacher = run.load_ckpt(teacher_path);
    const Dataset train = run.train_set();
    const TrainResult r =
        kind == "end2end" ? recipe_end2end(teacher, train, run.cfg()) : recipe_crbq(teacher, train, run.cfg());
    print_log(r.log);
    const Dataset test = run.test_set();
    print_rd(kind, eval_rd(r.ckpt, test));
    if (kind == "crbq") {
      std::cout << "continuous accuracy " << evaluate_accuracy(r.ckpt, test, BottleneckMode::kContinuous) << "\n";
    }
    run.write_ckpt("baseline.ckpt", r.ckpt);
    run.write_csv("train_log.csv", train_log_table(r.log));
    run.finish();
  });

  // finetune-head
  std::string task = "parity";
  auto* fh = app.add_subcommand("finetune-head", "train a new task head on a frozen encoder");
  fh->add_option("--student", student_path, "trained student checkpoint")->required();
  fh->add_option("--task", task, "digit or parity")->check(CLI::IsMember({"digit", "parity"}));
  fh->callback([&] {
    Run run = make_run("finetune-head");
    const Checkpoint student = run.load_ckpt(student_path);
    const Task t = task_from_name(task);
    const TrainResult r = recipe_head(student, t, run.train_set(), run.cfg());
    print_log(r.log);
    std::cout << "encoder hash before " << params_hash(student.params, student.spec.stages[0].name + ".")
              << "\nencoder hash after  " << params_hash(r.ckpt.params, r.ckpt.spec.stages[0].name + ".") << "\n";
    std::cout << task << " accuracy " << evaluate_accuracy(r.ckpt, run.test_set(), default_mode(r.ckpt)) << "\n";
    run.write_ckpt("head.ckpt", r.ckpt);
    run.write_csv("train_log.csv", train_log_table(r.log));
    run.finish();
  });

  // eval-rd
  std::vector<std::string> ckpt_paths;
  auto* er = app.add_subcommand("eval-rd", "rate and accuracy of trained students on the test set");
  er->add_option("--ckpt", ckpt_paths, "student checkpoints")->required();
  er->callback([&] {
    Run run = make_run("eval-rd");
    const Dataset test = run.test_set();
    CsvTable t = make_rd_table();
    for (const std::string& p : ckpt_paths) {
      const Checkpoint c = run.load_ckpt(p);
      const RDPoint pt = eval_rd(c, test);
      const std::string id = fs::path(p).parent_path().filename().string() + "/" + fs::path(p).filename().string();
      print_rd(id, pt);
      append_rd_row(t, id, pt, c);
    }
    run.write_csv("rd.csv", t);
    run.finish();
  });

  // sweep
  std::vector<double> sweep_betas;
  int jobs = 1;
  auto* sw = app.add_subcommand("sweep", "stage 1 + stage 2 for every beta, then the RD table");
  sw->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
  sw->add_option("--betas", sweep_betas, "override the configured betas")->delimiter(',');
  sw->add_option("--jobs", jobs, "parallel training runs")->check(CLI::PositiveNumber);
  sw->callback([&] {
    Run run = make_run("sweep");
    const std::vector<double> betas = sweep_betas.empty() ? run.cfg().betas : sweep_betas;
    if (betas.empty()) fail(ErrorKind::kConfig, "no betas to sweep");
    const Checkpoint teacher = run.load_ckpt(teacher_path);
    const Dataset train = run.train_set();
    const Dataset test = run.test_set();
    std::vector<Checkpoint> students(betas.size());
    std::vector<std::exception_ptr> errors(betas.size());
    std::mutex next_mu;
    size_t next = 0;
    auto worker = [&] {
      for (;;) {
        size_t i;
        {
          std::lock_guard lock(next_mu);
          if (next >= betas.size()) return;
          i = next++;
        }
        try {
          const TrainResult s1 = recipe_stage1(teacher, train, run.cfg(), betas[i], static_cast<uint16_t>(i));
          students[i] = recipe_stage2(s1.ckpt, teacher, train, run.cfg()).ckpt;
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int k = 0; k < std::min<int>(jobs, static_cast<int>(betas.size())); ++k) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    CsvTable t = make_rd_table();
    for (size_t i = 0; i < betas.size(); ++i) {
      const std::string name = "student_b" + std::to_string(i) + ".ckpt";
      run.write_ckpt(name, students[i]);
      const RDPoint p = eval_rd(students[i], test);
      print_rd(name, p);
      append_rd_row(t, name, p, students[i]);
    }
    run.write_csv("rd.csv", t);
    run.finish();
  });

  // run-split
  std::string transport = "inproc";
  size_t limit = 0;
  auto* rs = app.add_subcommand("run-split", "client encode, simulated channel, server inference");
  rs->add_option("--ckpt", student_path, "student checkpoint")->required();
  rs->add_option("--transport", transport, "inproc or socket")->check(CLI::IsMember({"inproc", "socket"}));
  rs->add_option("--limit", limit, "number of test samples (0 = all)");
  rs->callback([&] {
    Run run = make_run("run-split");
    const Checkpoint c = run.load_ckpt(student_path);
    SplitOptions o;
    o.channel = run.cfg().channel;
    o.mobile = run.cfg().mobile;
    o.server = run.cfg().server;
    o.transport = transport_from_name(transport);
    o.seed = run.cfg().seed;
    o.limit = limit;
    const SplitRun r = run_split(run.test_set(), c, o);
    const LatencySummary& s = r.summary;
    std::cout << "accuracy " << s.accuracy << " mean payload " << s.mean_payload_bytes << " B\n"
              << "mean encode " << s.mean_encode_s << " s, comm " << s.mean_comm_s << " s, server "
              << s.mean_server_s << " s, total " << s.mean_total_s << " s (p50 " << s.p50_total_s << ", p95 "
              << s.p95_total_s << ")\n";
    run.write_csv("latency.csv", latency_table(r));
    run.finish();
  });

  // latency-sim
  std::vector<std::string> student_paths;
  auto* ls = app.add_subcommand("latency-sim", "local vs edge vs split latency and accuracy");
  ls->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
  ls->add_option("--ckpt", student_paths, "student checkpoints")->required();
  ls->add_option("--limit", limit, "number of test samples (0 = all)");
  ls->callback([&] {
    Run run = make_run("latency-sim");
    const Checkpoint teacher = run.load_ckpt(teacher_path);
    std::vector<Checkpoint> students;
    std::vector<std::string> names;
    for (const std::string& p : student_paths) {
      students.push_back(run.load_ckpt(p));
      names.push_back(fs::path(p).filename().string());
    }
    SplitOptions o;
    o.channel = run.cfg().channel;
    o.mobile = run.cfg().mobile;
    o.server = run.cfg().server;
    o.seed = run.cfg().seed;
    o.limit = limit;
    const std::vector<ScenarioRow> rows = compare_scenarios(run.test_set(), teacher, students, names, o);
    for (const ScenarioRow& r : rows) {
      std::cout << r.scenario << " " << r.model << ": accuracy " << r.accuracy << " payload " << r.payload_bytes
                << " B total " << r.total_s << " s\n";
    }
    run.write_csv("scenarios.csv", scenario_table(rows));
    run.finish();
  });

  // export
  std::string input_csv, format = "csv", out_name;
  auto* ex = app.add_subcommand("export", "validate a result CSV and emit it as csv or gnuplot data");
  ex->add_option("--input", input_csv, "result CSV")->required();
  ex->add_option("--format", format, "csv or gnuplot")->check(CLI::IsMember({"csv", "gnuplot"}));
  ex->add_option("--output", out_name, "file name inside the run directory");
  ex->callback([&] {
    Run run = make_run("export");
    run.input(input_csv);
    const CsvTable t = read_any_csv(input_csv);
    const std::string stem = fs::path(input_csv).stem().string();
    if (format == "csv") {
      run.write_csv(out_name.empty() ? stem + ".csv" : out_name, t);
    } else {
      run.write_text(out_name.empty() ? stem + ".dat" : out_name, gnuplot_data(t));
    }
    run.finish();
  });

  // replay
  std::string manifest_path;
  auto* rp = app.add_subcommand("replay", "re-run a recorded command and compare output hashes");
  rp->add_option("--manifest", manifest_path, "manifest.json of the original run")->required();
  int replay_status = 0;
  rp->callback([&] { replay_status = replay(manifest_path, g.run_root); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageExit;
  }
  return replay_status;
}

namespace {

// Re-invokes the recorded argv with the recorded config snapshot and a
// "-replay" run id, then checks every output's hash.
int replay(const std::string& manifest_path, const std::string& run_root) {
  const std::vector<uint8_t> bytes = read_file(manifest_path);
  json m;
  try {
    m = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, "manifest is not valid JSON: " + std::string(e.what()));
  }
  const fs::path orig_dir = fs::path(manifest_path).parent_path();
  const std::string replay_id = orig_dir.filename().string() + "-replay";
  const fs::path cfg_path = orig_dir / "config.json";

  std::vector<std::string> args;
  const std::vector<std::string> recorded = m.at("argv").get<std::vector<std::string>>();
  for (size_t i = 0; i < recorded.size(); ++i) {
    const std::string& a = recorded[i];
    if (a == "--config" || a == "--run-id" || a == "--run-root") {
      ++i;
      continue;
    }
    if (a.rfind("--config=", 0) == 0 || a.rfind("--run-id=", 0) == 0 || a.rfind("--run-root=", 0) == 0) continue;
    args.push_back(a);
  }
  args.insert(args.begin(), {"esplit", "--config", cfg_path.string(), "--run-id", replay_id, "--run-root",
                             run_root.empty() ? orig_dir.parent_path().string() : run_root});
  std::vector<char*> cargv;
  for (std::string& a : args) cargv.push_back(a.data());
  const int rc = run_main(static_cast<int>(cargv.size()), cargv.data());
  if (rc != 0) return rc;

  const fs::path new_dir = fs::path(run_root.empty() ? orig_dir.parent_path().string() : run_root) / replay_id;
  int mismatches = 0;
  for (const json& o : m.at("outputs")) {
    const std::string name = o.at("path").get<std::string>();
    const std::string want = o.at("git_blob").get<std::string>();
    const fs::path p = new_dir / name;
    const std::string got = fs::exists(p) ? git_blob_hash_file(p.string()) : "missing";
    const bool same = got == want;
    mismatches += !same;
    std::cout << (same ? "same     " : "DIFFERS  ") << name << " " << got << "\n";
  }
  std::cout << (mismatches == 0 ? "replay reproduced every output\n" : "replay outputs differ\n");
  return mismatches == 0 ? 0 : kErrorExitBase + static_cast<int>(ErrorKind::kNumeric);
}

}  // namespace
}  // namespace esplit

int main(int argc, char** argv) {
  try {
    return esplit::run_main(argc, argv);
  } catch (const esplit::Error& e) {
    const json err = {{"error", esplit::error_kind_name(e.kind())},
                      {"exit_code", esplit::kErrorExitBase + static_cast<int>(e.kind())},
                      {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return esplit::kErrorExitBase + static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"exit_code", esplit::kUnexpectedExit}, {"message", e.what()}}.dump()
              << "\n";
    return esplit::kUnexpectedExit;
  }
}
