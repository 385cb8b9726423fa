// Copyright 2026 The DIC-SR Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dic/image.hpp"
#include "support/tempdir.hpp"

namespace dic {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::TempDir;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt";
  const fs::path err = scratch / "stderr.txt";
  const std::string cmd = std::string("'") + DIC_CLI_PATH + "' " + args + " > '" + out.string() + "' 2> '" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

TEST(Cli, UsageErrorsExitWithTwo) {
  TempDir dir;
  RunResult r = run("", dir.path());
  EXPECT_EQ(r.code, 2);
  r = run("eval --ckpt x --manifest y --bogus", dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos);
  EXPECT_NE(r.err.find("--nrmse-source"), std::string::npos);
  EXPECT_EQ(run("train --config c.json --phase warmup", dir.path()).code, 2);
  EXPECT_EQ(run("ablate --variant dic-xl --config c.json", dir.path()).code, 2);
  EXPECT_EQ(run("frobnicate", dir.path()).code, 2);
  EXPECT_EQ(run("--help", dir.path()).code, 0);
}

TEST(Cli, FailuresGiveOneLineDiagnostic) {
  TempDir dir;
  const RunResult r = run("eval --ckpt " + (dir.path() / "missing.ckpt").string() + " --manifest m.tsv", dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(count_lines(r.err), 1);
  EXPECT_NE(r.err.find("missing.ckpt"), std::string::npos);
  const RunResult t = run("train --config " + (dir.path() / "none.json").string() + " --phase psnr", dir.path());
  EXPECT_EQ(t.code, 1);
  EXPECT_EQ(count_lines(t.err), 1);
}

TEST(Cli, EndToEnd) {
  TempDir dir;
  const fs::path data = dir.path() / "data";
  RunResult r = run("synth-faces --out " + data.string() + " --train 2 --test 1 --seed 3", dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path manifest = data / "manifest.tsv";
  ASSERT_TRUE(fs::exists(manifest));

  r = run("prepare-data --manifest " + manifest.string() + " --out " + (dir.path() / "prep").string() +
              " --margin 0.25 --sigma 1",
          dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const json index = json::parse(slurp(dir.path() / "prep" / "index.json"));
  EXPECT_EQ(index.at("samples").size(), 3u);

  const json config = {{"channels", 4},         {"groups", 1},    {"fusion_depth", 1},
                       {"align_width", 8},      {"hourglass_depth", 2}, {"n_steps", 2},
                       {"batch_size", 2},       {"max_iters", 2}, {"lr", 1e-3},
                       {"prepared_dir", "prep"}, {"output_dir", "run"}, {"seed", 1}};
  std::ofstream(dir.path() / "cfg.json") << config.dump();
  r = run("train --config " + (dir.path() / "cfg.json").string() + " --phase psnr", dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path ckpt = dir.path() / "run" / "final.ckpt";
  ASSERT_TRUE(fs::exists(ckpt));
  std::istringstream log(slurp(dir.path() / "run" / "train_log.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(log, line)) {
    const json j = json::parse(line);
    for (const char* key : {"iter", "lr", "pixel", "align", "adv", "perc", "d_loss"}) EXPECT_TRUE(j.contains(key));
    ++n;
  }
  EXPECT_EQ(n, 2);

  r = run("eval --ckpt " + ckpt.string() + " --manifest " + manifest.string() + " --per-step", dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const json report = json::parse(r.out);
  ASSERT_EQ(report.at("reports").size(), 1u);
  const json& first = report.at("reports")[0];
  for (const char* key : {"id", "psnr_db", "ssim", "nrmse", "per_step"}) EXPECT_TRUE(first.contains(key)) << key;
  EXPECT_EQ(first.at("per_step").size(), 2u);

  r = run("eval --ckpt " + ckpt.string() + " --manifest " + manifest.string() + " --nrmse-source gt-detector",
          dir.path());
  EXPECT_EQ(r.code, 2);
  r = run("eval --ckpt " + ckpt.string() + " --manifest " + manifest.string() +
              " --nrmse-source gt-detector --detections " + (data / "landmarks").string(),
          dir.path());
  ASSERT_EQ(r.code, 0) << r.err;

  const fs::path face = *fs::directory_iterator(data / "images");
  const fs::path sr = dir.path() / "sr.png";
  r = run("infer --ckpt " + ckpt.string() + " --in " + face.string() + " --out " + sr.string(), dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_png(sr).shape(), (Shape{1, 3, 128, 128}));

  const fs::path comp = dir.path() / "comp";
  r = run("render-components --ckpt " + ckpt.string() + " --in " + face.string() + " --out-dir " + comp.string() +
              " --keep all --keep none --keep left_eye,mouth",
          dir.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const json written = json::parse(r.out);
  ASSERT_EQ(written.size(), 3u);
  for (const auto& w : written) {
    EXPECT_TRUE(fs::exists(w.at("image").get<std::string>()));
    EXPECT_TRUE(fs::exists(w.at("attention").get<std::string>()));
  }
  EXPECT_EQ(run("render-components --ckpt " + ckpt.string() + " --in " + face.string() + " --out-dir " +
                    comp.string() + " --keep nose_tip",
                dir.path())
                .code,
            1);

  r = run("export-groups", dir.path());
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(json::parse(r.out).at("components").size(), 5u);
}

}  // namespace
}  // namespace dic
