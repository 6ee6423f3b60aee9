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

#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "spellkd/rng.hpp"
#include "spellkd/text.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("spellkd_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Code-point Levenshtein distance.
inline std::size_t levenshtein(const std::string& a_utf8, const std::string& b_utf8) {
  const auto a = spellkd::text::decode_utf8(a_utf8);
  const auto b = spellkd::text::decode_utf8(b_utf8);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Random string mixing several scripts, emoji and whitespace.
inline std::string random_mixed_script(spellkd::Rng& rng, std::size_t max_len) {
  static const std::vector<std::pair<char32_t, char32_t>> blocks = {
      {0x20, 0x7E},     {0xA0, 0x17F},    {0x370, 0x3FF},   {0x400, 0x4FF},   {0x530, 0x58F},
      {0x5D0, 0x5EA},   {0x600, 0x6FF},   {0x900, 0x97F},   {0xE00, 0xE7F},   {0x10A0, 0x10FF},
      {0x3040, 0x30FF}, {0x4E00, 0x9FFF}, {0xAC00, 0xD7A3}, {0x1F300, 0x1F64F}};
  const auto len = rng.below(max_len + 1);
  std::u32string out;
  for (std::size_t i = 0; i < len; ++i) {
    if (rng.below(6) == 0) {
      static const char32_t spaces[] = {U' ', U' ', U'\t', U'\n', U'　'};
      out.push_back(spaces[rng.below(5)]);
      continue;
    }
    const auto& [lo, hi] = blocks[rng.below(blocks.size())];
    out.push_back(static_cast<char32_t>(lo + rng.below(hi - lo + 1)));
  }
  return spellkd::text::encode_utf8(out);
}

}  // namespace testing
