// Copyright 2026 The Roentgen Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Drives the roentgen executable end to end.

#include <gtest/gtest.h>
#include <signal.h>

#include <cstdio>
#include <fstream>

#include "fixtures.hpp"
#include "httplib.h"
#include "json.hpp"
#include "roentgen/roentgen.hpp"

using namespace roentgen;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { dir = fixtures::temp_dir("cli"); }
  void TearDown() override { fs::remove_all(dir); }

  Outcome run(const std::string& args, const std::string& env = "") {
    const auto out = dir / "stdout", err = dir / "stderr";
    const std::string cmd = "cd '" + dir.string() + "' && env SOURCE_DATE_EPOCH=1700000000 " + env + " '" +
                            ROENTGEN_BIN + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  void write(const fs::path& p, const std::string& bytes) {
    std::ofstream o(dir / p, std::ios::binary);
    o << bytes;
  }

  void zero_model() { ASSERT_EQ(run("init --out zero.rkb --input-size 32 --channels 1 --head-units 8 --zero-head").code, 0); }

  fs::path dir;
};

}  // namespace

TEST_F(Cli, TrainIsDeterministic) {
  fixtures::write_dataset_dir(dir / "data", 4, 4, 24, 3);
  const std::string args = "train --data data --input-size 32 --channels 1 --head-units 8 --epochs 2 --batch-size 4 --seed 7";
  const Outcome a = run(args + " --out a.rkb --metrics a.jsonl");
  ASSERT_EQ(a.code, 0) << a.err;
  const Outcome b = run(args + " --out b.rkb");
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(dir / "a.rkb"), slurp(dir / "b.rkb"));
  const json summary = json::parse(a.out);
  EXPECT_EQ(summary["final"], json::parse(b.out)["final"]);
  EXPECT_EQ(summary["final"]["epoch"], 2);
  EXPECT_EQ(summary["images"], 8);
  std::ifstream metrics(dir / "a.jsonl");
  std::string line;
  std::size_t epochs = 0;
  while (std::getline(metrics, line)) EXPECT_EQ(epoch_metrics_from_json(json::parse(line)).epoch, ++epochs);
  EXPECT_EQ(epochs, 2u);
}

TEST_F(Cli, TrainMissingDataDir) {
  const Outcome o = run("--json train --data nowhere --out x.rkb --input-size 32");
  EXPECT_EQ(o.code, 2);
  EXPECT_EQ(json::parse(o.out)["exit_code"], 2);
  EXPECT_FALSE(fs::exists(dir / "x.rkb"));
}

TEST_F(Cli, TrainEmptyClass) {
  fixtures::write_dataset_dir(dir / "data", 3, 0, 16, 3);
  EXPECT_EQ(run("train --data data --out x.rkb --input-size 32 --channels 1").code, 2);
}

TEST_F(Cli, TrainZeroLearningRateKeepsInitialWeights) {
  fixtures::write_dataset_dir(dir / "data", 3, 3, 16, 3);
  ASSERT_EQ(run("init --out init.rkb --input-size 32 --channels 1 --head-units 8 --seed 7").code, 0);
  const Outcome t = run("train --data data --out t.rkb --input-size 32 --channels 1 --head-units 8 --seed 7 --lr 0 --epochs 2");
  ASSERT_EQ(t.code, 0) << t.err;
  const KnowledgeBase a = load_kb_file(dir / "init.rkb"), b = load_kb_file(dir / "t.rkb");
  ASSERT_EQ(a.size(), b.size());
  for (const auto& [name, tensor] : a.entries()) EXPECT_EQ(tensor, b.at(name)) << name;
}

TEST_F(Cli, TrainNonFiniteLossIsRuntimeError) {
  fixtures::write_dataset_dir(dir / "data", 3, 3, 16, 3);
  zero_model();
  KnowledgeBase kb = load_kb_file(dir / "zero.rkb");
  kb.mutable_at("predictions/bias").data()[0] = std::numeric_limits<double>::quiet_NaN();
  save_kb_file(kb, dir / "poisoned.rkb");
  const Outcome o =
      run("--json train --data data --out x.rkb --input-size 32 --channels 1 --head-units 8 --base poisoned.rkb");
  EXPECT_EQ(o.code, 3) << o.err;
  EXPECT_NE(json::parse(o.out)["error"].get<std::string>().find("non-finite"), std::string::npos);
}

TEST_F(Cli, DiagnoseZeroHead) {
  zero_model();
  Rng rng(1);
  write_pgm(dir / "scan.pgm", fixtures::bright_dark_image(40, false, rng));
  const Outcome o = run("diagnose --model zero.rkb scan.pgm");
  ASSERT_EQ(o.code, 0) << o.err;
  const Diagnosis d = diagnosis_from_json(json::parse(o.out));
  EXPECT_EQ(d.score, 0.5);
  EXPECT_EQ(d.label, Label::pneumonic);
  EXPECT_EQ(d.image_id, "scan");

  const Outcome high = run("diagnose --model zero.rkb scan.pgm --threshold 0.9");
  ASSERT_EQ(high.code, 0) << high.err;
  EXPECT_EQ(diagnosis_from_json(json::parse(high.out)).label, Label::not_pneumonic);

  const Outcome env = run("diagnose scan.pgm", "ROENTGEN_MODEL=zero.rkb ROENTGEN_THRESHOLD=0.9");
  ASSERT_EQ(env.code, 0) << env.err;
  EXPECT_EQ(diagnosis_from_json(json::parse(env.out)).label, Label::not_pneumonic);
}

TEST_F(Cli, DiagnoseCorruptImage) {
  zero_model();
  write("broken.pgm", "P5 4 4 255\n\x01\x02");
  const Outcome o = run("--json diagnose --model zero.rkb broken.pgm");
  EXPECT_EQ(o.code, 2);
  EXPECT_TRUE(json::parse(o.out).contains("error"));
  EXPECT_FALSE(o.err.empty());
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("diagnose").code, 1);
  const Outcome o = run("--json frobnicate");
  EXPECT_EQ(o.code, 1);
  EXPECT_EQ(json::parse(o.out)["exit_code"], 1);
}

TEST_F(Cli, EvaluateEchoPredictions) {
  fixtures::write_dataset_dir(dir / "data", 6, 6, 8, 2);
  json canned = json::object();
  for (const auto& img : load_manifest(dir / "data")) canned[img.id] = to_string(img.label);
  write("echo.json", canned.dump());
  const Outcome o = run("evaluate --data data --predictions echo.json --trials 2 --per-class 3 --seed 4");
  ASSERT_EQ(o.code, 0) << o.err;
  const EvaluationReport r = report_from_json(json::parse(o.out));
  EXPECT_EQ(r.trials.size(), 2u);
  EXPECT_EQ(r.gdpp, Rational(100));
  EXPECT_EQ(r.gdep, Rational(0));
  EXPECT_NE(o.err.find("100.0 %"), std::string::npos) << o.err;
}

TEST_F(Cli, EvaluateInsufficientPopulation) {
  fixtures::write_dataset_dir(dir / "data", 6, 4, 8, 2);
  write("none.json", "{}");
  const Outcome o = run("evaluate --data data --predictions none.json --trials 2 --per-class 3");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("insufficient not_pneumonic population: required 6, available 4"), std::string::npos) << o.err;
}

TEST_F(Cli, EvaluateMissingPredictionFails) {
  fixtures::write_dataset_dir(dir / "data", 3, 3, 8, 2);
  write("none.json", "{}");
  EXPECT_NE(run("evaluate --data data --predictions none.json --trials 1 --per-class 3").code, 0);
}

TEST_F(Cli, EvaluateCannedReferenceTallies) {
  // Per trial: every positive detected, the first `fp[t]` negatives flagged.
  const std::size_t fp[5] = {8, 7, 10, 9, 10};
  fixtures::write_dataset_dir(dir / "data", 250, 250, 8, 9);
  const auto images = load_manifest(dir / "data");
  Rng rng(21);
  const auto sets = build_trials(std::span<const LabeledImage>(images), 5, 50, rng);
  json canned = json::object();
  for (std::size_t t = 0; t < sets.size(); ++t) {
    std::size_t flagged = 0;
    for (const auto& img : sets[t]) {
      const bool positive = img.label == Label::pneumonic || flagged++ < fp[t];
      canned[img.id] = to_string(positive ? Label::pneumonic : Label::not_pneumonic);
    }
  }
  write("canned.json", canned.dump());
  const Outcome o = run("evaluate --data data --predictions canned.json --trials 5 --per-class 50 --seed 21 --report r.json");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.err.find("General Diagnosis Precision Percentage: 91.2 %"), std::string::npos) << o.err;
  const EvaluationReport r = report_from_json(json::parse(o.out));
  EXPECT_EQ(r.gdpp, Rational(912, 10));
  EXPECT_EQ(r.aggregate, (ConfusionMatrix{250, 44, 0, 206}));
  EXPECT_EQ(json::parse(slurp(dir / "r.json")), json::parse(o.out));
}

TEST_F(Cli, InspectFreshVgg) {
  ASSERT_EQ(run("init --out fresh.rkb --input-size 32 --channels 3").code, 0);
  const Outcome o = run("--json inspect --model fresh.rkb");
  ASSERT_EQ(o.code, 0) << o.err;
  const json j = json::parse(o.out);
  std::size_t kernels = 0, biases = 0;
  for (const auto& t : j["tensors"]) {
    const std::string name = t["name"];
    kernels += name.ends_with("/kernel");
    biases += name.ends_with("/bias");
  }
  EXPECT_EQ(kernels, 15u);
  EXPECT_EQ(biases, 15u);
  EXPECT_EQ(j["tensor_count"], 30);
  EXPECT_EQ(j["fingerprint"].get<std::string>().size(), 16u);

  const Outcome text = run("inspect --model fresh.rkb");
  ASSERT_EQ(text.code, 0);
  EXPECT_NE(text.out.find("block1_conv1/kernel"), std::string::npos);
  EXPECT_NE(text.out.find("predictions/bias"), std::string::npos);
}

TEST_F(Cli, InspectTruncated) {
  zero_model();
  const std::string bytes = slurp(dir / "zero.rkb");
  write("cut.rkb", bytes.substr(0, bytes.size() / 2));
  const Outcome o = run("--json inspect --model cut.rkb");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(json::parse(o.out)["error"].get<std::string>().find("truncated"), std::string::npos) << o.out;
}

TEST_F(Cli, ServeHealth) {
  zero_model();
  const std::string cmd = "cd '" + dir.string() + "' && sh -c 'echo $$; exec \"" + std::string(ROENTGEN_BIN) +
                          "\" serve --model zero.rkb --host 127.0.0.1 --port 0 --storage st --quiet'";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  char buf[512];
  ASSERT_NE(std::fgets(buf, sizeof buf, pipe), nullptr);
  const pid_t pid = std::stoi(buf);
  ASSERT_NE(std::fgets(buf, sizeof buf, pipe), nullptr);
  const json listening = json::parse(buf);
  httplib::Client client("127.0.0.1", listening["port"].get<int>());
  auto r = client.Get("/health");
  ::kill(pid, SIGTERM);
  const int status = ::pclose(pipe);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["status"], "ok");
  EXPECT_TRUE(WIFEXITED(status) && WEXITSTATUS(status) == 0);
}

TEST_F(Cli, ServeWithoutLoadableModel) {
  write("junk.rkb", "nope");
  EXPECT_EQ(run("serve --model junk.rkb --port 0").code, 2);
}
