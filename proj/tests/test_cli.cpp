// Copyright 2026 The qent Authors
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qent/dataset.hpp"

#ifndef QENT_CLI_PATH
#error "QENT_CLI_PATH must name the qent executable"
#endif

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("qent_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct RunResult {
  int code = -1;
  std::string output;  // stdout and stderr together
};

RunResult run(const std::string& args, const fs::path& scratch) {
  const auto log = scratch / "cli.log";
  const std::string cmd = std::string(QENT_CLI_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::ostringstream s;
  s << in.rdbuf();
  r.output = s.str();
  return r;
}

std::string group_lines(const fs::path& manifest) {
  std::string out;
  std::ifstream in(manifest);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("group = ", 0) == 0) out += line + "\n";
  }
  return out;
}

const std::string kTiny = "--embed-dim 8 --heads 2 --layers 1 --ffn-dim 16 --batch-size 8 --quiet";

}  // namespace

TEST_CASE("gen writes the scaled reference counts") {
  TempDir tmp("counts");
  const auto a = tmp.path / "a";
  auto r = run("gen --dims 2x2 --task pretrain --scale 1e-3 --seed 1 --out " + a.string(), tmp.path);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(group_lines(a / "manifest.txt") ==
        "group = sep 4000\ngroup = general-ent 2000\ngroup = werner-ent 2000\ngroup = max-ent 2000\n");
  const auto b = tmp.path / "b";
  r = run("gen --dims 2x3 --task pretrain --scale 1e-3 --seed 1 --out " + b.string(), tmp.path);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(group_lines(b / "manifest.txt") == "group = sep 8000\ngroup = general-ent 8000\n");
}

TEST_CASE("configuration and I/O errors have distinct exit codes") {
  TempDir tmp("errors");
  auto r = run("gen --dims 2x2 --groups sep,bogus --out " + (tmp.path / "x").string(), tmp.path);
  CHECK(r.code == 2);
  CHECK(r.output.find("bogus") != std::string::npos);

  r = run("gen --dims 2x3 --groups horodecki-bound --out " + (tmp.path / "y").string(), tmp.path);
  CHECK(r.code == 2);

  r = run("gen --dims 2x2 --frobnicate", tmp.path);
  CHECK(r.code == 2);

  fs::create_directories(tmp.path / "full");
  std::ofstream(tmp.path / "full" / "keep.txt") << "x";
  r = run("gen --dims 2x2 --count 3 --out " + (tmp.path / "full").string(), tmp.path);
  CHECK(r.code == 3);
  CHECK(r.output.find("already exists") != std::string::npos);

  r = run("pretrain --data " + (tmp.path / "missing").string() + " --out " + (tmp.path / "p").string(), tmp.path);
  CHECK(r.code == 3);
}

TEST_CASE("evaluating a checkpoint on a corpus of another size is a mismatch") {
  TempDir tmp("mismatch");
  const auto p = tmp.path;
  REQUIRE(run("gen --dims 2x2 --task pretrain --count 10 --seed 2 --out " + (p / "pre").string(), p).code == 0);
  REQUIRE(run("pretrain --data " + (p / "pre").string() + " --epochs 1 " + kTiny + " --out " + (p / "ck").string(), p)
              .code == 0);
  REQUIRE(run("gen --dims 2x3 --task eval --count 5 --seed 2 --out " + (p / "ev").string(), p).code == 0);
  const auto r = run("eval --data " + (p / "ev").string() + " --checkpoint " + (p / "ck" / "checkpoint.qtck").string() +
                         " --out " + (p / "r.txt").string(),
                     p);
  CHECK(r.code == 5);
  CHECK(r.output.find("tokens") != std::string::npos);
  // A pretraining corpus is not a classification corpus.
  const auto f = run("finetune --data " + (p / "pre").string() + " --checkpoint " +
                         (p / "ck" / "checkpoint.qtck").string() + " --out " + (p / "ft").string(),
                     p);
  CHECK(f.code == 5);
}

TEST_CASE("deterministic runs are byte-identical") {
  TempDir tmp("repro");
  auto pipeline = [&](const std::string& tag) {
    const auto d = tmp.path / tag;
    fs::create_directories(d);
    const std::string s = " --deterministic --seed 7";
    REQUIRE(run("gen --dims 2x2 --task pretrain --count 40" + s + " --out " + (d / "pre").string(), d).code == 0);
    REQUIRE(run("gen --dims 2x2 --task eval --count 10" + s + " --out " + (d / "ev").string(), d).code == 0);
    REQUIRE(run("pretrain --data " + (d / "pre").string() + " --epochs 2 " + kTiny + s + " --out " +
                    (d / "run").string(),
                d)
                .code == 0);
    REQUIRE(run("eval --mode reconstruction --data " + (d / "ev").string() + " --checkpoint " +
                    (d / "run" / "checkpoint.qtck").string() + s + " --out " + (d / "eval.txt").string(),
                d)
                .code == 0);
    return d;
  };
  const auto a = pipeline("a");
  const auto b = pipeline("b");
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file() || entry.path().filename() == "cli.log") continue;
    const auto rel = fs::relative(entry.path(), a);
    CHECK_MESSAGE(qent::read_file_bytes(entry.path()) == qent::read_file_bytes(b / rel), rel.string());
    ++compared;
  }
  CHECK(compared >= 6);
}
