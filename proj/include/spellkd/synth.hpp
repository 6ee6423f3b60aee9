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

#include <cstdint>
#include <string>
#include <vector>

namespace spellkd {

// Toy languages over disjoint scripts, used for desk-scale experiments.
enum class Script { latin, greek, cyrillic, armenian, georgian };

struct ToyLanguageSpec {
  Script script = Script::latin;
  int letters = 16;       // distinct letters drawn from the script
  int lexicon_size = 120;
  int min_word_len = 2;
  int max_word_len = 6;
  int min_sentence_words = 6;
  int max_sentence_words = 9;
  std::uint64_t seed = 0;
};

// Letters available in a script, in code point order.
std::vector<char32_t> script_letters(Script script);

// Distinct lowercase words; deterministic per spec.
std::vector<std::string> toy_lexicon(const ToyLanguageSpec& spec);

// Sentences with Zipf-distributed word choice.
std::vector<std::string> toy_sentences(const ToyLanguageSpec& spec, std::size_t count);

// Bundled toy locales xa..xe map to latin, greek, cyrillic, armenian, georgian.
ToyLanguageSpec toy_language(const std::string& locale, std::uint64_t seed);

}  // namespace spellkd
