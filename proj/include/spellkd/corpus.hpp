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

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spellkd {

// A language with an optional region, e.g. `nl` or `pt-BR`.
struct Locale {
  std::string language;
  std::optional<std::string> region;

  // Throws spellkd::Error unless `text` is `[a-z]{2,3}` optionally followed by
  // `-[A-Z]{2}`.
  static Locale parse(std::string_view text);
  static bool is_valid(std::string_view text);

  std::string str() const;

  auto operator<=>(const Locale&) const = default;
  bool operator==(const Locale&) const = default;
};

struct ExamplePair {
  std::string input;
  std::string label;
  Locale locale;

  bool operator==(const ExamplePair&) const = default;
};

// Throws if the pair violates the record invariants (blank fields, control
// characters, malformed UTF-8).
void validate(const ExamplePair& pair);

struct Manifest {
  std::string source;
  std::uint64_t seed = 0;
  std::map<std::string, std::size_t> counts;  // keyed by Locale::str()

  bool operator==(const Manifest&) const = default;
};

// Ordered pairs plus a manifest whose per-locale counts always match them.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string source, std::uint64_t seed);

  void add(ExamplePair pair);
  void append(const Dataset& other);

  const std::vector<ExamplePair>& pairs() const { return pairs_; }
  const Manifest& manifest() const { return manifest_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const ExamplePair& operator[](std::size_t i) const { return pairs_[i]; }

  std::vector<Locale> locales() const;
  Dataset filter(const Locale& locale) const;

  void set_source(std::string source) { manifest_.source = std::move(source); }
  void set_seed(std::uint64_t seed) { manifest_.seed = seed; }

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<ExamplePair> pairs_;
  Manifest manifest_;
};

enum class PairFormat { jsonl, tsv };

PairFormat parse_pair_format(std::string_view name);

Dataset load_pairs(const std::filesystem::path& path, PairFormat format = PairFormat::jsonl);

// Writes the pairs and a `<stem>.manifest.json` sidecar next to `path`.
void save_pairs(const Dataset& dataset, const std::filesystem::path& path,
                PairFormat format = PairFormat::jsonl);

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path);

std::string manifest_to_json(const Manifest& manifest);

// Seeded Fisher-Yates partition; eval receives round(eval_fraction * n) pairs.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double eval_fraction,
                                  std::uint64_t seed);

// Eval pairs whose label string also occurs as a train label.
std::size_t overlap_count(const Dataset& train, const Dataset& eval);

// One sentence per line, blank lines skipped.
std::vector<std::string> load_lines(const std::filesystem::path& path);
void save_lines(const std::vector<std::string>& lines, const std::filesystem::path& path);

}  // namespace spellkd
