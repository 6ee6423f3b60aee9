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

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spellkd/corpus.hpp"
#include "spellkd/rng.hpp"

namespace spellkd {

// Exact fraction with a positive denominator, kept in lowest terms.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n, std::int64_t d = 1);

  // Accepts "p/q", an integer, or a finite decimal such as "0.25".
  static Rational parse(std::string_view text);
  std::string str() const;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  friend Rational operator+(const Rational& a, const Rational& b);
  bool operator==(const Rational&) const = default;
};

enum class EditOp { insert, remove, replace };

struct NoiseSpec {
  Rational p_insert{1, 3};
  Rational p_delete{1, 3};
  Rational p_replace{1, 3};
  int min_edits = 1;
  int max_edits = 3;
  int train_copies = 8;
  int eval_copies = 1;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const NoiseSpec&) const = default;
};

nlohmann::json to_json(const NoiseSpec& spec);
NoiseSpec noise_spec_from_json(const nlohmann::json& j);

// Frequency-weighted pool of non-whitespace characters.
class Alphabet {
 public:
  Alphabet(std::vector<char32_t> symbols, std::vector<double> frequencies);

  const std::vector<char32_t>& symbols() const { return symbols_; }
  const std::vector<double>& frequencies() const { return frequencies_; }
  double frequency(char32_t symbol) const;

  char32_t sample(Rng& rng) const;

 private:
  std::vector<char32_t> symbols_;
  std::vector<double> frequencies_;
  std::vector<double> cumulative_;
};

Alphabet build_alphabet(const std::vector<std::string>& corpus);

struct Edit {
  EditOp op;
  std::size_t position;  // code point index in the text before this edit
  char32_t symbol = 0;   // inserted or replacement character
};

// Applies one edit to a UTF-8 string; positions are in code points.
std::string apply_edit(std::string_view sentence, const Edit& edit);

struct Corruption {
  std::string text;
  std::vector<Edit> edits;
};

// k ~ Uniform{min..max} character edits. Whitespace is never inserted,
// deleted or replaced, and a word is never deleted entirely.
Corruption corrupt_traced(std::string_view sentence, const NoiseSpec& spec,
                          const Alphabet& alphabet, Rng& rng);

std::string corrupt(std::string_view sentence, const NoiseSpec& spec, const Alphabet& alphabet,
                    Rng& rng);

// train_copies noised pairs per sentence; sentence i uses the substream
// derive_seed(spec.seed, i) so any sharding reproduces the same output.
Dataset generate_training(const std::vector<std::string>& corpus, const NoiseSpec& spec,
                          const Alphabet& alphabet, const Locale& locale);

// One noised copy per sentence, identity pairs and short sentences removed,
// then a seeded sample of exactly target_count pairs (in corpus order).
Dataset generate_eval(const std::vector<std::string>& corpus, const NoiseSpec& spec,
                      const Alphabet& alphabet, std::size_t target_count, std::size_t min_words,
                      const Locale& locale);

}  // namespace spellkd
