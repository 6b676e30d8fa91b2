// Copyright 2026 The tlpred Authors
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


#include "tlpred/predictor.hpp"
#include "tlpred/rng.hpp"

#include <json.hpp>

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace
{

struct CliResult
{
  int code = -1;
  std::string out;
  std::string err;
};

fs::path scratch()
{
  static const fs::path root = [] {
    const auto p = fs::temp_directory_path() / "tlpred_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

std::string slurp(const fs::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

CliResult run(const std::string & args, const std::string & root = "runs")
{
  static int counter = 0;
  const fs::path out = scratch() / ("out" + std::to_string(counter) + ".txt");
  const fs::path err = scratch() / ("err" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd = std::string(TLPRED_CLI) + " --out-root " + (scratch() / root).string() + " " + args +
                          " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  while (!r.out.empty() && r.out.back() == '\n') {
    r.out.pop_back();
  }
  return r;
}

std::string last_line(const std::string & s) { return s.substr(s.find_last_of('\n') + 1); }

const std::string kTinyShape =
  " --train-k 2 --k 3 --batch 8 --embed-dim 4 --hidden-dim 6 --input-dim 6 --attn-dim 4"
  " --noise-dim 2";
const std::string kTinyModel = kTinyShape + " --epochs 1";

const fs::path & dataset()
{
  static const fs::path dir = [] {
    const CliResult r = run("generate --layout crossroad --frames 120 --seed 7 --spawn-rate 0.15");
    EXPECT_EQ(r.code, 0) << r.err;
    return fs::path(last_line(r.out));
  }();
  return dir;
}

}  // namespace

TEST(Cli, GenerateWritesSplitsAndIsByteIdentical)
{
  const fs::path a = dataset();
  for (const char * name : {"train.csv", "val.csv", "test.csv", "train.map.json", "splits.json", "config.json"}) {
    EXPECT_TRUE(fs::exists(a / name)) << name;
  }
  const CliResult again = run("generate --layout crossroad --frames 120 --seed 7 --spawn-rate 0.15", "runs_again");
  ASSERT_EQ(again.code, 0);
  const fs::path b = last_line(again.out);
  EXPECT_EQ(a.filename(), b.filename());
  for (const auto & entry : fs::directory_iterator(a)) {
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path().filename();
  }
}

TEST(Cli, TooFewFramesIsConfigError)
{
  const CliResult r = run("generate --layout crossroad --frames 10 --seed 7");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("insufficient frames for one window"), std::string::npos) << r.err;
}

TEST(Cli, BadArgumentsAreConfigErrors)
{
  EXPECT_EQ(run("generate --layout hexagon").code, 2);
  EXPECT_EQ(run("train --data " + (scratch() / "missing").string()).code, 2);
  EXPECT_EQ(run("train --data " + dataset().string() + " --ablation Sx+Bb").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST(Cli, UnreadableDatasetIsConfigError)
{
  const fs::path dir = scratch() / "broken";
  fs::create_directories(dir);
  std::ofstream(dir / "train.csv") << "Fid,Aid,x\n0,1,2\n";
  EXPECT_EQ(run("train --data " + dir.string()).code, 2);
}

TEST(Cli, ZeroEpochsSavesInitialization)
{
  const CliResult r = run("train --data " + dataset().string() + kTinyShape + " --epochs 0 --seed 5");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = tlpred::load_checkpoint(fs::path(last_line(r.out)) / "checkpoint");
  const tlpred::Model fresh(model->hyper(), tlpred::derive_seed({5, 0x1417}));
  EXPECT_EQ(model->all().flat_values(), fresh.all().flat_values());
}

TEST(Cli, LightsOffDropsLightEncoderFromManifest)
{
  const CliResult r = run("train --data " + dataset().string() + kTinyShape + " --epochs 0 --lights off");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string manifest = slurp(fs::path(last_line(r.out)) / "checkpoint" / "manifest.json");
  EXPECT_EQ(manifest.find("light_mlp"), std::string::npos);
  EXPECT_NE(manifest.find("encoder"), std::string::npos);
}

TEST(Cli, TrainEvalReplayAreReproducible)
{
  const std::string train_args = "train --data " + dataset().string() + kTinyModel + " --ablation Ss+Bb+TLm+D";
  const CliResult t1 = run(train_args, "rep_a");
  const CliResult t2 = run(train_args, "rep_b");
  ASSERT_EQ(t1.code, 0) << t1.err;
  ASSERT_EQ(t2.code, 0) << t2.err;
  const fs::path c1 = last_line(t1.out);
  const fs::path c2 = last_line(t2.out);
  for (const char * f : {"checkpoint/params.bin", "checkpoint/manifest.json", "loss.csv", "config.json"}) {
    EXPECT_EQ(slurp(c1 / f), slurp(c2 / f)) << f;
  }

  const std::string eval_args =
    " --data " + dataset().string() + " --k 3 --seed 2 --dump-masks --checkpoint ";
  const CliResult e1 = run("eval" + eval_args + (c1 / "checkpoint").string(), "rep_a");
  const CliResult e2 = run("eval" + eval_args + (c1 / "checkpoint").string(), "rep_b");
  ASSERT_EQ(e1.code, 0) << e1.err;
  const fs::path r1 = last_line(e1.out);
  const fs::path r2 = last_line(e2.out);
  for (const char * f : {"report.json", "report.csv", "trace.csv", "masks.csv"}) {
    EXPECT_TRUE(fs::exists(r1 / f)) << f;
    EXPECT_EQ(slurp(r1 / f), slurp(r2 / f)) << f;
  }

  const CliResult replay = run("replay --config " + (c1 / "config.json").string(), "rep_c");
  ASSERT_EQ(replay.code, 0) << replay.err;
  EXPECT_EQ(slurp(fs::path(last_line(replay.out)) / "checkpoint/params.bin"), slurp(c1 / "checkpoint/params.bin"));

  const auto report = nlohmann::json::parse(slurp(r1 / "report.json"));
  EXPECT_EQ(report.at("k"), 3);
  EXPECT_GE(report.at("ade").get<double>(), 0.0);
}

TEST(Cli, GradcheckPasses)
{
  const CliResult r = run("gradcheck");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, ConfigLogRoundTrips)
{
  const auto cfg = nlohmann::json::parse(slurp(dataset() / "config.json"));
  EXPECT_EQ(cfg.at("command"), "generate");
  EXPECT_EQ(cfg.at("seed"), 7);
}
