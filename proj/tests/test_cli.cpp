#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "vrnd/binio.hpp"
#include "vrnd/synthdata.hpp"

#ifndef VRND_CLI
#error "VRND_CLI must name the vrnd executable"
#endif

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult vrnd_cli(const std::string& args) {
  const std::string cmd = std::string(VRND_CLI) + " " + args + " 2>&1";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("vrnd_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string at(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

const char* kTiny = "--hidden_dim 8 --latent_dim 4 --feature_dim 8 --learning_rate 1e-3 --epochs 1";

}  // namespace

TEST_F(Cli, SynthIsDeterministic) {
  ASSERT_EQ(vrnd_cli("synth --out " + at("a") + " --seed 7").code, 0);
  ASSERT_EQ(vrnd_cli("synth --out " + at("b") + " --seed 7").code, 0);
  for (const char* f : {"test/labels.jsonl", "test/test_000.wav", "train/train_005.wav", "valid/labels.jsonl"}) {
    EXPECT_EQ(vrnd::binio::read_file(at("a/") + f), vrnd::binio::read_file(at("b/") + f)) << f;
  }
}

TEST_F(Cli, FullPipelineEmitsAllArtifacts) {
  const std::string data = at("bench");
  ASSERT_EQ(vrnd_cli("synth --out " + data + " --seed 3 --contamination 0.05").code, 0);
  {
    std::ofstream cfg(at("run.cfg"));
    cfg << "seed = 3\nbatch_size = 8\n";
  }
  CliResult t = vrnd_cli("train --config " + at("run.cfg") + " --data " + data + " --out " + at("m.ckpt") + " " + kTiny);
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_TRUE(fs::exists(at("m.ckpt")));
  EXPECT_TRUE(fs::exists(at("m.ckpt.log.jsonl")));

  const std::string wavs = data + "/test/test_000.wav " + data + "/test/test_001.wav";
  CliResult s = vrnd_cli("score --ckpt " + at("m.ckpt") + " --in " + wavs + " --out " + at("s.jsonl") + " --samples 2");
  ASSERT_EQ(s.code, 0) << s.out;
  EXPECT_GT(fs::file_size(at("s.jsonl")), 0u);

  CliResult d = vrnd_cli("detect --ckpt " + at("m.ckpt") + " --valid " + data + "/valid --in " + wavs + " --out " + at("d.jsonl"));
  ASSERT_EQ(d.code, 0) << d.out;
  EXPECT_NE(d.out.find("\"theta\""), std::string::npos);
  EXPECT_NE(d.out.find("\"events\""), std::string::npos);

  CliResult e = vrnd_cli("eval --scores " + at("d.jsonl") + " --labels " + data + "/test/labels.jsonl --sweep --curve " + at("c.csv"));
  ASSERT_EQ(e.code, 0) << e.out;
  EXPECT_NE(e.out.find("VRNN*"), std::string::npos);
  EXPECT_TRUE(fs::exists(at("c.csv")));

  CliResult r = vrnd_cli("robustness --ckpt " + at("m.ckpt") + " --valid " + data + "/valid --test " + data +
                   "/test --snr 15,5 --out " + at("r.jsonl"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("clean"), std::string::npos);
  EXPECT_NE(r.out.find("5dB"), std::string::npos);
}

TEST_F(Cli, EvalOfPerfectDecisionsPrintsHundred) {
  {
    std::ofstream labels(at("labels.jsonl"));
    labels << vrnd::label_record_json({"x.wav", 160, {0, 1, 1, 0}, {}}).dump() << "\n";
    std::ofstream scores(at("d.jsonl"));
    const double s[] = {5, -9, -8, 4};
    for (int t = 0; t < 4; ++t) {
      scores << "{\"recording\":\"somewhere/x.wav\",\"frame\":" << t << ",\"score\":" << s[t]
             << ",\"decision\":" << (s[t] < 0 ? "true" : "false") << "}\n";
    }
  }
  CliResult e = vrnd_cli("eval --scores " + at("d.jsonl") + " --labels " + at("labels.jsonl"));
  ASSERT_EQ(e.code, 0) << e.out;
  EXPECT_NE(e.out.find("100.0      100.0      100.0"), std::string::npos) << e.out;
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(vrnd_cli("").code, 2);
  EXPECT_EQ(vrnd_cli("frobnicate").code, 2);
  EXPECT_EQ(vrnd_cli("train --no_such_flag 1").code, 2);
  EXPECT_EQ(vrnd_cli("synth --out " + at("x") + " --contamination 0.5").code, 2);
  EXPECT_EQ(vrnd_cli("synth --out " + at("x") + " --latent_dim many").code, 2);
  EXPECT_EQ(vrnd_cli("synth").code, 2);  // --out missing
  EXPECT_EQ(vrnd_cli("--help").code, 0);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  EXPECT_EQ(vrnd_cli("train --data " + at("missing") + " --out " + at("m.ckpt")).code, 1);
  ASSERT_EQ(vrnd_cli("synth --out " + at("bench") + " --seed 1").code, 0);
  ASSERT_EQ(vrnd_cli("train --data " + at("bench") + " --out " + at("m.ckpt") + " " + kTiny).code, 0);
  // frames cut at 80 samples do not fit a 160-sample model
  CliResult r = vrnd_cli("score --ckpt " + at("m.ckpt") + " --in " + at("bench/test/test_000.wav") + " --out " + at("s.jsonl") +
                   " --frame_dim 80");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("dimension 80"), std::string::npos) << r.out;
  std::ofstream(at("junk.wav")) << "not a wav file";
  EXPECT_EQ(vrnd_cli("score --ckpt " + at("m.ckpt") + " --in " + at("junk.wav") + " --out " + at("s.jsonl")).code, 1);
}
