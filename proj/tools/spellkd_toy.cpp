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

// Writes the bundled toy corpora: one file of clean sentences per locale.
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "spellkd/corpus.hpp"
#include "spellkd/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate toy-language corpora"};
  std::string out_dir = "data/toy";
  std::size_t sentences = 5000;
  std::uint64_t seed = 2026;
  std::vector<std::string> locales{"xa", "xb", "xc", "xd", "xe"};
  app.add_option("--out", out_dir);
  app.add_option("--sentences", sentences);
  app.add_option("--seed", seed);
  app.add_option("--locales", locales);
  CLI11_PARSE(app, argc, argv);
  try {
    std::filesystem::create_directories(out_dir);
    for (const auto& loc : locales) {
      const auto lines = spellkd::toy_sentences(spellkd::toy_language(loc, seed), sentences);
      spellkd::save_lines(lines, std::filesystem::path(out_dir) / (loc + ".txt"));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
