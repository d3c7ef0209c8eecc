// Copyright 2026 The s2r Authors
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

// End-to-end runs of the s2r executable: exit codes, error lines, outputs.

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() / ("s2r_cli_" + std::to_string(::getpid())));
    fs::create_directories(*dir_);
    std::ofstream cfg(*dir_ / "tiny.cfg");
    cfg << "# tiny world\n"
           "scene.vehicles = 6\nscene.spawn_x = 16\nscene.agent_radius = 12\n"
           "grid.x_min = -16\ngrid.x_max = 16\ngrid.y_min = -8\ngrid.y_max = 8\n"
           "grid.channels = 16\nmodel.max_agents = 2\ntrain.epochs = 1\n";
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
  }

  /// Runs `s2r <args>` with the tiny config; returns the exit code and keeps
  /// stderr in err_.
  int run(const std::string& args, bool with_config = true) {
    const fs::path err = *dir_ / "stderr.txt";
    const std::string cmd = std::string(S2R_CLI_PATH) + (with_config ? " --config " + (*dir_ / "tiny.cfg").string() : "") +
                            " " + args + " > " + (*dir_ / "stdout.txt").string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    err_ = slurp(err);
    out_ = slurp(*dir_ / "stdout.txt");
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string path(const std::string& name) const { return (*dir_ / name).string(); }

  void expect_single_error_line(const std::string& kind) const {
    EXPECT_EQ(err_.rfind("error: " + kind + ": ", 0), 0u) << err_;
    EXPECT_EQ(std::count(err_.begin(), err_.end(), '\n'), 1) << err_;
  }

  void ensure_data_and_model() {
    if (fs::exists(path("model.ckpt"))) return;
    ASSERT_EQ(run("gen --out " + path("src") + " --seed 1 --frames 4"), 0) << err_;
    ASSERT_EQ(run("gen --out " + path("real") + " --seed 2 --frames 3 --profile real"), 0) << err_;
    ASSERT_EQ(run("train --source " + path("src") + " --no-afa --out " + path("model.ckpt")), 0) << err_;
  }

  static fs::path* dir_;
  std::string out_, err_;
};
fs::path* Cli::dir_ = nullptr;

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  expect_single_error_line("usage");
  EXPECT_EQ(run("gen --seed 1"), 2);
  expect_single_error_line("usage");
  EXPECT_EQ(run("gen --out x --profile moon"), 2);
  EXPECT_EQ(run("gen --out x --frames -1"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("eval --ckpt a --data b --noise 0.2,0.2"), 2);
  expect_single_error_line("usage");
  EXPECT_EQ(run("eval --ckpt a --data b --noise x,0,0"), 2);
  EXPECT_EQ(run("eval --ckpt a --data b --range 10"), 2);
  EXPECT_EQ(run("sweep --ckpt a --data b --out c --grid speed=1"), 2);
}

TEST_F(Cli, HelpExitsZero) { EXPECT_EQ(run("--help"), 0); }

TEST_F(Cli, RuntimeErrorsExitOne) {
  EXPECT_EQ(run("eval --ckpt " + path("missing.ckpt") + " --data " + path("missing")), 1);
  EXPECT_EQ(run("gen --out " + path("nocfg"), false), 0);
  const fs::path bad = *dir_ / "bad.cfg";
  std::ofstream(bad) << "scene.unknown_knob = 3\n";
  EXPECT_EQ(run("--config " + bad.string() + " gen --out " + path("x"), false), 1);
  expect_single_error_line("config");
}

TEST_F(Cli, GenIsByteIdenticalForSameSeed) {
  ASSERT_EQ(run("gen --out " + path("g1") + " --seed 7 --frames 2"), 0) << err_;
  ASSERT_EQ(run("gen --out " + path("g2") + " --seed 7 --frames 2 --threads 2"), 0) << err_;
  ASSERT_EQ(run("gen --out " + path("g3") + " --seed 8 --frames 2"), 0) << err_;
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(path("g1"))) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), path("g1"));
    EXPECT_EQ(slurp(e.path()), slurp(fs::path(path("g2")) / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 3u);  // manifest plus two frames
  EXPECT_NE(slurp(fs::path(path("g1")) / "manifest.txt"), slurp(fs::path(path("g3")) / "manifest.txt"));
}

TEST_F(Cli, TrainWithAdaptationNeedsTarget) {
  ensure_data_and_model();
  EXPECT_EQ(run("train --source " + path("src") + " --out " + path("afa.ckpt")), 1);
  expect_single_error_line("config");
  EXPECT_FALSE(fs::exists(path("afa.ckpt")));
  ASSERT_EQ(run("train --source " + path("src") + " --target " + path("real") + " --out " + path("afa.ckpt")), 0)
      << err_;
  const std::string log = slurp(path("afa.ckpt") + ".log.tsv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);  // header + 2 steps
}

TEST_F(Cli, EvalZeroNoiseEqualsOmitted) {
  ensure_data_and_model();
  ASSERT_EQ(run("eval --ckpt " + path("model.ckpt") + " --data " + path("real") + " --out " + path("e0.tsv")), 0)
      << err_;
  const std::string omitted = out_;
  ASSERT_EQ(run("eval --ckpt " + path("model.ckpt") + " --data " + path("real") + " --noise 0,0,0 --out " +
                path("e1.tsv")),
            0);
  EXPECT_EQ(out_, omitted);
  EXPECT_EQ(slurp(path("e0.tsv")), slurp(path("e1.tsv")));
  EXPECT_EQ(omitted.rfind("AP@0.5\t", 0), 0u) << omitted;
  EXPECT_EQ(run("eval --ckpt " + path("model.ckpt") + " --data " + path("real") + " --range 8,4"), 0) << err_;
  EXPECT_TRUE(fs::exists(path("model.ckpt") + ".eval.tsv"));
}

TEST_F(Cli, SweepWritesOneRowPerSetting) {
  ensure_data_and_model();
  ASSERT_EQ(run("sweep --ckpt " + path("model.ckpt") + " --data " + path("real") + " --grid 'pos=0,0.2;lat=0,0.1'" +
                " --out " + path("sweep.tsv")),
            0)
      << err_;
  const std::string tsv = slurp(path("sweep.tsv"));
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 5);
  EXPECT_EQ(tsv.rfind("sigma_pos\tsigma_head_deg\tlatency\tap50\tap70\n", 0), 0u);
}

TEST_F(Cli, CorruptCheckpointIsFormatError) {
  ensure_data_and_model();
  std::string bytes = slurp(path("model.ckpt"));
  bytes.resize(bytes.size() / 2);
  std::ofstream(path("cut.ckpt"), std::ios::binary) << bytes;
  EXPECT_EQ(run("eval --ckpt " + path("cut.ckpt") + " --data " + path("real")), 1);
  expect_single_error_line("format");
  EXPECT_NE(err_.find("offset"), std::string::npos);
}

}  // namespace
