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

#include "spellkd/synth.hpp"

#include <algorithm>
#include <set>

#include "spellkd/error.hpp"
#include "spellkd/rng.hpp"
#include "spellkd/text.hpp"

namespace spellkd {

std::vector<char32_t> script_letters(Script script) {
  std::vector<char32_t> out;
  const auto range = [&](char32_t lo, char32_t hi) {
    for (char32_t c = lo; c <= hi; ++c) out.push_back(c);
  };
  switch (script) {
    case Script::latin: range(U'a', U'z'); break;
    case Script::greek:
      range(U'α', U'ω');
      std::erase(out, U'ς');  // final sigma
      break;
    case Script::cyrillic: range(U'а', U'я'); break;
    case Script::armenian: range(U'ա', U'ֆ'); break;
    case Script::georgian: range(U'ა', U'ჰ'); break;
  }
  return out;
}

std::vector<std::string> toy_lexicon(const ToyLanguageSpec& spec) {
  auto letters = script_letters(spec.script);
  if (spec.letters < 2 || spec.letters > static_cast<int>(letters.size())) throw Error("bad letter count");
  if (spec.min_word_len < 1 || spec.max_word_len < spec.min_word_len) throw Error("bad word lengths");
  Rng rng(derive_seed(spec.seed, "lexicon"));
  shuffle(letters.begin(), letters.end(), rng);
  letters.resize(static_cast<std::size_t>(spec.letters));
  std::sort(letters.begin(), letters.end());

  std::vector<std::string> words;
  std::set<std::string> seen;
  const auto span = static_cast<std::uint64_t>(spec.max_word_len - spec.min_word_len + 1);
  int attempts = 0;
  while (static_cast<int>(words.size()) < spec.lexicon_size) {
    if (++attempts > spec.lexicon_size * 1000) throw Error("cannot build lexicon of requested size");
    const auto len = spec.min_word_len + static_cast<int>(rng.below(span));
    std::u32string w;
    for (int i = 0; i < len; ++i) w.push_back(letters[rng.below(letters.size())]);
    auto utf8 = text::encode_utf8(w);
    if (seen.insert(utf8).second) words.push_back(std::move(utf8));
  }
  return words;
}

std::vector<std::string> toy_sentences(const ToyLanguageSpec& spec, std::size_t count) {
  const auto lexicon = toy_lexicon(spec);
  std::vector<double> cumulative;
  double total = 0.0;
  for (std::size_t r = 0; r < lexicon.size(); ++r) {
    total += 1.0 / static_cast<double>(r + 1);
    cumulative.push_back(total);
  }
  Rng rng(derive_seed(spec.seed, "sentences"));
  const auto span = static_cast<std::uint64_t>(spec.max_sentence_words - spec.min_sentence_words + 1);
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto n = spec.min_sentence_words + static_cast<int>(rng.below(span));
    std::string s;
    for (int k = 0; k < n; ++k) {
      const double u = rng.uniform() * total;
      const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), lexicon.size() - 1);
      if (k) s.push_back(' ');
      s += lexicon[idx];
    }
    out.push_back(std::move(s));
  }
  return out;
}

ToyLanguageSpec toy_language(const std::string& locale, std::uint64_t seed) {
  static const std::pair<const char*, Script> table[] = {{"xa", Script::latin},
                                                         {"xb", Script::greek},
                                                         {"xc", Script::cyrillic},
                                                         {"xd", Script::armenian},
                                                         {"xe", Script::georgian}};
  for (const auto& [name, script] : table) {
    if (locale == name) {
      ToyLanguageSpec spec;
      spec.script = script;
      spec.seed = derive_seed(seed, locale);
      return spec;
    }
  }
  throw Error("unknown toy locale " + locale);
}

}  // namespace spellkd
