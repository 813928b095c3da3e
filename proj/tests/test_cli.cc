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


// End-to-end checks of the esplit command line tool.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "esplit/config.h"
#include "esplit/hashing.h"
#include "small_models.h"

namespace esplit {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("esplit_cli_" + std::to_string(::getpid()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "small.json") << config_to_json(testing::small_config());
  }
  void TearDown() override { fs::remove_all(root_); }

  Result run(const std::string& args) {
    const fs::path err = root_ / "stderr.txt";
    const std::string cmd = std::string(ESPLIT_CLI_PATH) + " --run-root " + root_.string() + " --config " +
                            (root_ / "small.json").string() + " " + args + " > /dev/null 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }

  fs::path root_;
};

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("train-student --stage 3 --teacher x").code, 2);
  EXPECT_EQ(run("train-baseline --kind other --teacher x").code, 2);
}

TEST_F(Cli, LibraryErrorsExitWithKindAndJson) {
  const Result r = run("run-split --ckpt " + (root_ / "missing.ckpt").string());
  EXPECT_EQ(r.code, 17);
  EXPECT_EQ(r.err.rfind("{\"error\":\"io\"", 0), 0u) << r.err;

  std::ofstream(root_ / "bad.json") << R"({"sede": 1})";
  const std::string cmd = std::string(ESPLIT_CLI_PATH) + " --run-root " + root_.string() + " --config " +
                          (root_ / "bad.json").string() + " make-dataset > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 18);
}

TEST_F(Cli, PipelineIsReproducible) {
  ASSERT_EQ(run("--run-id t train-teacher").code, 0);
  const std::string teacher = (root_ / "t" / "teacher.ckpt").string();
  ASSERT_EQ(run("--run-id s train-student --stage 1 --beta 0.05 --teacher " + teacher).code, 0);
  const std::string student = (root_ / "s" / "student.ckpt").string();
  ASSERT_EQ(run("--run-id rd eval-rd --ckpt " + student).code, 0);
  ASSERT_EQ(run("--run-id lat run-split --limit 8 --ckpt " + student).code, 0);

  // A second run with the same seed produces identical bytes.
  ASSERT_EQ(run("--run-id t2 train-teacher").code, 0);
  EXPECT_EQ(slurp(root_ / "t" / "teacher.ckpt"), slurp(root_ / "t2" / "teacher.ckpt"));
  EXPECT_EQ(slurp(root_ / "t" / "train_log.csv"), slurp(root_ / "t2" / "train_log.csv"));

  // Replay re-runs the manifest and verifies every output hash.
  EXPECT_EQ(run("replay --manifest " + (root_ / "s" / "manifest.json").string()).code, 0);
  EXPECT_EQ(slurp(root_ / "s" / "student.ckpt"), slurp(root_ / "s-replay" / "student.ckpt"));

  const std::string manifest = slurp(root_ / "s" / "manifest.json");
  EXPECT_NE(manifest.find(sha256_hex(slurp(root_ / "s" / "student.ckpt"))), std::string::npos);

  const std::string rd = slurp(root_ / "rd" / "rd.csv");
  EXPECT_EQ(rd.rfind("#schema=rd/1", 0), 0u);
  ASSERT_EQ(run("--run-id ex export --format gnuplot --input " + (root_ / "rd" / "rd.csv").string()).code, 0);
  EXPECT_EQ(run("--run-id ex2 export --input " + (root_ / "t" / "manifest.json").string()).code, 14);
}

}  // namespace
}  // namespace esplit
