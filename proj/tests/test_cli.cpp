// Copyright 2026 The spellkd Authors.
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

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kSource = SPELLKD_SOURCE_DIR;

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with stdout and stderr captured to a file.
Run cli(const std::string& args, const testing::TempDir& dir) {
  const auto log = dir / "cli.log";
  const std::string cmd = std::string("\"") + SPELLKD_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("evaluate on the bundled fixture") {
  testing::TempDir dir("cli_eval");
  const auto fixtures = kSource / "data/fixtures";
  const auto r = cli("evaluate --system " + (fixtures / "system.jsonl").string() + " --gold " +
                         (fixtures / "gold.jsonl").string() + " --output " + (dir / "eval.json").string(),
                     dir);
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "eval.json"));
  CHECK(j["n_gold_auto"] == 3);
  CHECK(j["n_sys_auto"] == 2);
  CHECK(j["n_match"] == 1);
  CHECK(j["precision"] == 0.5);
  CHECK(j["f1"].get<double>() == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("inject-noise is deterministic and train-tokenizer writes a model") {
  testing::TempDir dir("cli_noise");
  const auto corpus = (kSource / "data/tiny/xa.txt").string();
  for (const auto* name : {"a.jsonl", "b.jsonl"}) {
    const auto r = cli("inject-noise --input " + corpus + " --output " + (dir / name).string() +
                           " --locale xa --seed 5 --mode train",
                       dir);
    REQUIRE(r.code == 0);
  }
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  CHECK(!slurp(dir / "a.jsonl").empty());
  const auto eval = cli("inject-noise --input " + corpus + " --output " + (dir / "e.tsv").string() +
                            " --locale xa --seed 5 --mode eval --target-count 20 --min-words 1 --format tsv",
                        dir);
  CHECK(eval.code == 0);

  const auto tok = cli("train-tokenizer --input " + (dir / "a.jsonl").string() + " --output " +
                           (dir / "t.tok").string() + " --scheme bpe --vocab-size 150",
                       dir);
  REQUIRE(tok.code == 0);
  CHECK(slurp(dir / "t.tok").starts_with("subword/v1 bpe "));
}

TEST_CASE("errors exit non-zero with a message") {
  testing::TempDir dir("cli_err");
  const auto missing = cli("evaluate --system " + (dir / "nope.jsonl").string() + " --gold " +
                               (dir / "nope.jsonl").string(),
                           dir);
  CHECK(missing.code != 0);
  std::ofstream(dir / "bad.jsonl") << "{\"input\": \"a\"\n";
  const auto bad = cli("evaluate --system " + (dir / "bad.jsonl").string() + " --gold " + (dir / "bad.jsonl").string(), dir);
  CHECK(bad.code == 1);
  CHECK(bad.out.find("error:") != std::string::npos);
  CHECK(cli("no-such-command", dir).code != 0);
}
