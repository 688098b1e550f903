// Copyright 2026 The afpgic Authors.
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

// Drives the command-line tool end to end on a tiny configuration.

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "afpgic/bitstream.h"
#include "afpgic/eval.h"
#include "afpgic/image.h"
#include "afpgic/serialize.h"
#include "test_models.h"

namespace afpgic {
namespace {

namespace fs = std::filesystem;

// Regression floor for the tiny (barely trained) pipeline below.
constexpr double kPsnrFloor = 7.1;  // measured 8.18 dB

constexpr char kTinyConfig[] = R"({
  "seed": 5,
  "bank": {"iterations": 4, "batch": 2},
  "train": {"base_iterations": 2, "adversarial_iterations": 2,
            "stage3_iterations": 2, "batch": 1},
  "select": {"target_bpp": [0.2, 0.6], "prior_grid_min": 0.25,
             "prior_grid_max": 0.75, "max_iterations": 6,
             "validation_images": 1, "validation_size": 128}
})";

int RunCli(const std::string& args, std::string* err = nullptr) {
  static int counter = 0;
  const fs::path log = fs::temp_directory_path() /
                       ("afpgic_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  const std::string cmd = std::string(AFPG_CLI_PATH) + " " + args + " 2>" + log.string() + " >/dev/null";
  const int status = std::system(cmd.c_str());
  if (err) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *err = ss.str();
  }
  fs::remove(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() / ("afpgic_cli_" + std::to_string(::getpid())));
    fs::create_directories(*dir_);
    std::ofstream(P("config.json")) << kTinyConfig;
    const std::string cfg = " --config " + P("config.json");
    ASSERT_EQ(RunCli("pretrain-bank" + cfg + " --out " + P("bank.bin")), 0);
    ASSERT_EQ(RunCli("train" + cfg + " --bank " + P("bank.bin") + " --out " + P("trainer.bin") +
                  " --log " + P("train.jsonl")),
              0);
    ASSERT_EQ(RunCli("select-betas" + cfg + " --bank " + P("bank.bin") + " --checkpoint " +
                  P("trainer.bin") + " --out " + P("registry.txt")),
              0);
    WritePng(P("in.png"), testing_models::TestImage(64, 64, 21));
    WritePng(P("odd.png"), testing_models::TestImage(45, 70, 22, Family::kStreet));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
  }

  static std::string P(const std::string& name) { return (*dir_ / name).string(); }
  static std::string Models() {
    return " --bank " + P("bank.bin") + " --checkpoint " + P("trainer.bin") + " --registry " +
           P("registry.txt");
  }

  static fs::path* dir_;
};

fs::path* CliPipeline::dir_ = nullptr;

TEST_F(CliPipeline, EncodeDecodeMeetsFloorAndIsDeterministic) {
  ASSERT_EQ(RunCli("encode" + Models() + " --op 0 --in " + P("in.png") + " --out " + P("a.afpg")), 0);
  ASSERT_EQ(RunCli("encode" + Models() + " --op 0 --in " + P("in.png") + " --out " + P("b.afpg")), 0);
  EXPECT_EQ(ReadFile(P("a.afpg")), ReadFile(P("b.afpg")));
  std::string err;
  ASSERT_EQ(RunCli("decode" + Models() + " --in " + P("a.afpg") + " --out " + P("a.png"), &err), 0);
  EXPECT_NE(err.find("seed="), std::string::npos);
  EXPECT_NE(err.find("config="), std::string::npos);
  const Tensor rec = ReadPng(P("a.png"));
  const double psnr = Psnr(ReadPng(P("in.png")), rec);
  std::fprintf(stderr, "cli pipeline psnr %.3f\n", psnr);
  EXPECT_GE(psnr, kPsnrFloor);
  const Bitstream b = ReadBitstream(P("a.afpg"));
  EXPECT_EQ(b.header.width, 64);
  EXPECT_EQ(b.header.height, 64);
  EXPECT_EQ(b.header.op_index, 0);
}

TEST_F(CliPipeline, OddSizesDecodeToOriginalShape) {
  ASSERT_EQ(RunCli("encode" + Models() + " --op 1 --in " + P("odd.png") + " --out " + P("odd.afpg")), 0);
  ASSERT_EQ(RunCli("decode" + Models() + " --in " + P("odd.afpg") + " --out " + P("odd_rec.png")), 0);
  const Tensor rec = ReadPng(P("odd_rec.png"));
  EXPECT_EQ(rec.shape().h, 45);
  EXPECT_EQ(rec.shape().w, 70);
}

TEST_F(CliPipeline, ErrorsHaveDistinctExitCodes) {
  ASSERT_EQ(RunCli("encode" + Models() + " --op 0 --in " + P("in.png") + " --out " + P("c.afpg")), 0);
  EXPECT_EQ(RunCli("encode" + Models() + " --op 9 --in " + P("in.png") + " --out " + P("x.afpg")), 3);

  // A codec from a different initialization does not match the registry.
  testing_models::UntrainedCodec(99)->Save(P("foreign.bin"));
  EXPECT_EQ(RunCli("encode --bank " + P("bank.bin") + " --checkpoint " + P("foreign.bin") +
                " --registry " + P("registry.txt") + " --op 0 --in " + P("in.png") + " --out " +
                P("x.afpg")),
            4);
  EXPECT_EQ(RunCli("decode --bank " + P("bank.bin") + " --checkpoint " + P("foreign.bin") +
                " --registry " + P("registry.txt") + " --in " + P("c.afpg") + " --out " + P("x.png")),
            4);

  auto bytes = ReadFile(P("c.afpg"));
  bytes[bytes.size() / 2 + 3] ^= 0x5A;
  WriteFile(P("corrupt.afpg"), bytes);
  EXPECT_EQ(RunCli("decode" + Models() + " --in " + P("corrupt.afpg") + " --out " + P("x.png")), 5);

  EXPECT_EQ(RunCli("decode" + Models() + " --in " + P("missing.afpg") + " --out " + P("x.png")), 7);
  EXPECT_EQ(RunCli("encode --op 0"), 2);
}

TEST_F(CliPipeline, ReportAndTheoryOutputs) {
  ASSERT_EQ(RunCli("report --log " + P("train.jsonl") + " --out " + P("report1")), 0);
  ASSERT_EQ(RunCli("report --log " + P("train.jsonl") + " --out " + P("report2")), 0);
  EXPECT_EQ(ReadFile(P("report1/training_summary.csv")), ReadFile(P("report2/training_summary.csv")));
  ASSERT_EQ(RunCli("verify-theory --alignment-trials 200 --dominance-trials 50 --out " + P("theory")), 0);
  EXPECT_TRUE(fs::exists(P("theory/alignment.json")));
  EXPECT_TRUE(fs::exists(P("theory/dominance.json")));
}

}  // namespace
}  // namespace afpgic
