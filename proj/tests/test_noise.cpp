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

#include <array>
#include <cmath>
#include <set>

#include "spellkd/error.hpp"
#include "spellkd/noise.hpp"
#include "support.hpp"

using namespace spellkd;

TEST_CASE("rational parsing and the exact-sum rule") {
  CHECK(Rational::parse("1/3") == Rational(1, 3));
  CHECK(Rational::parse("2/6") == Rational(1, 3));
  CHECK(Rational::parse("0.25") == Rational(1, 4));
  CHECK(Rational::parse("1") == Rational(1, 1));
  CHECK(Rational(1, 3) + Rational(1, 3) + Rational(1, 3) == Rational(1, 1));
  CHECK_THROWS_AS(Rational::parse("1/0"), Error);
  CHECK_THROWS_AS(Rational::parse("abc"), Error);

  NoiseSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.p_replace = Rational(1, 4);
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = NoiseSpec{};
  spec.min_edits = 3;
  spec.max_edits = 2;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = NoiseSpec{};
  spec.train_copies = 0;
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("noise spec json round trip") {
  NoiseSpec spec;
  spec.p_insert = Rational(1, 2);
  spec.p_delete = Rational(1, 4);
  spec.p_replace = Rational(1, 4);
  spec.min_edits = 0;
  spec.max_edits = 5;
  spec.train_copies = 3;
  spec.seed = 12345678901234ULL;
  CHECK(noise_spec_from_json(to_json(spec)) == spec);
}

TEST_CASE("alphabet counts non-whitespace characters") {
  const auto a = build_alphabet({"aab"});
  CHECK(a.symbols() == std::vector<char32_t>{U'a', U'b'});
  CHECK(a.frequency(U'a') == doctest::Approx(2.0 / 3.0));
  CHECK(a.frequency(U'b') == doctest::Approx(1.0 / 3.0));
  const auto single = build_alphabet({"a", "a"});
  CHECK(single.symbols().size() == 1);
  CHECK(single.frequency(U'a') == 1.0);
  CHECK_THROWS_AS(build_alphabet({"  "}), Error);
  CHECK_THROWS_AS(build_alphabet({}), Error);
  const auto mixed = build_alphabet({"ab cd", "ééé 字"});
  double total = 0;
  for (double f : mixed.frequencies()) total += f;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mixed.frequency(U' ') == 0.0);
}

TEST_CASE("apply_edit follows the edit definitions") {
  CHECK(apply_edit("hello", Edit{EditOp::remove, 2, 0}) == "helo");
  CHECK(apply_edit("helo", Edit{EditOp::insert, 2, U'l'}) == "hello");
  CHECK(apply_edit("hallo", Edit{EditOp::replace, 1, U'e'}) == "hello");
  CHECK(apply_edit("ão", Edit{EditOp::replace, 0, U'a'}) == "ao");
  CHECK_THROWS_AS(apply_edit("ab", Edit{EditOp::remove, 2, 0}), Error);
}

TEST_CASE("zero edits return the input") {
  NoiseSpec spec;
  spec.min_edits = spec.max_edits = 0;
  const auto alphabet = build_alphabet({"correct horse"});
  Rng rng(1);
  CHECK(corrupt("correct horse", spec, alphabet, rng) == "correct horse");
}

TEST_CASE("corrupt regression value for seed 42") {
  const NoiseSpec spec;
  const auto alphabet = build_alphabet({"correct horse"});
  Rng rng(42);
  CHECK(corrupt("correct horse", spec, alphabet, rng) == "correct hore");
}

TEST_CASE("single character sentences are never emptied") {
  NoiseSpec spec;
  spec.p_insert = Rational(0);
  spec.p_delete = Rational(1, 2);
  spec.p_replace = Rational(1, 2);
  spec.min_edits = spec.max_edits = 3;
  const auto alphabet = build_alphabet({"ab"});
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto out = corrupt("a", spec, alphabet, rng);
    CHECK(text::decode_utf8(out).size() == 1);
  }
}

TEST_CASE("corrupt keeps words and bounds the edit distance") {
  const std::vector<std::string> corpus = {"the quick brown fox jumps over the lazy dog", "a b c",
                                           "ñandú pingüino cigüeña", "съешь же ещё этих мягких булок",
                                           "日本語の テキスト です"};
  const auto alphabet = build_alphabet(corpus);
  const NoiseSpec spec;
  Rng rng(9);
  for (int round = 0; round < 400; ++round) {
    const auto& s = corpus[static_cast<std::size_t>(round) % corpus.size()];
    const auto c = corrupt_traced(s, spec, alphabet, rng);
    CHECK_FALSE(c.text.empty());
    CHECK(text::word_count(c.text) == text::word_count(s));
    CHECK(c.edits.size() >= 1);
    CHECK(c.edits.size() <= 3);
    CHECK(testing::levenshtein(c.text, s) <= c.edits.size());
    std::string replay = s;
    for (const auto& e : c.edits) replay = apply_edit(replay, e);
    CHECK(replay == c.text);
    for (const auto& e : c.edits) {
      if (e.op != EditOp::remove) CHECK_FALSE(text::is_whitespace(e.symbol));
    }
  }
}

TEST_CASE("operation mix follows the configured probabilities") {
  const auto alphabet = build_alphabet({"abcdefghij klmnop"});
  NoiseSpec spec;
  spec.p_insert = Rational(1, 2);
  spec.p_delete = Rational(1, 5);
  spec.p_replace = Rational(3, 10);
  Rng rng(77);
  std::array<double, 3> counts{};
  std::size_t total = 0;
  while (total < 60000) {
    for (const auto& e : corrupt_traced("abcdefghij klmnop qrstu", spec, alphabet, rng).edits) {
      ++counts[static_cast<std::size_t>(e.op)];
      ++total;
    }
  }
  const double n = static_cast<double>(total);
  CHECK(std::abs(counts[0] / n - 0.5) < 0.02);
  CHECK(std::abs(counts[1] / n - 0.2) < 0.02);
  CHECK(std::abs(counts[2] / n - 0.3) < 0.02);
}

TEST_CASE("generate_training emits copies of every sentence") {
  const std::vector<std::string> corpus = {"one two three", "four five", "six", "seven eight nine ten", "eleven"};
  const auto alphabet = build_alphabet(corpus);
  NoiseSpec spec;
  spec.seed = 3;
  const auto d = generate_training(corpus, spec, alphabet, Locale::parse("en"));
  CHECK(d.size() == 8 * corpus.size());
  std::set<std::string> labels;
  for (const auto& p : d.pairs()) labels.insert(p.label);
  CHECK(labels == std::set<std::string>(corpus.begin(), corpus.end()));
  CHECK(generate_training(corpus, spec, alphabet, Locale::parse("en")) == d);

  spec.train_copies = 1;
  const auto one = generate_training(corpus, spec, alphabet, Locale::parse("en"));
  CHECK(one.size() == 5);
  for (std::size_t i = 0; i < one.size(); ++i) CHECK(one[i].label == corpus[i]);
}

TEST_CASE("generate_eval filters and samples") {
  std::vector<std::string> corpus;
  for (int i = 0; i < 40; ++i) corpus.push_back("w" + std::to_string(i) + " a b c d e");
  corpus.push_back("too short sentence");
  const auto alphabet = build_alphabet(corpus);
  NoiseSpec spec;
  spec.seed = 8;
  const auto d = generate_eval(corpus, spec, alphabet, 25, 6, Locale::parse("en"));
  CHECK(d.size() == 25);
  for (const auto& p : d.pairs()) {
    CHECK(p.input != p.label);
    CHECK(text::word_count(p.label) >= 6);
  }
  CHECK(generate_eval(corpus, spec, alphabet, 25, 6, Locale::parse("en")) == d);

  const std::vector<std::string> five = {"a b c d e", "f g h i j"};
  CHECK_THROWS_WITH_AS(generate_eval(five, spec, build_alphabet(five), 1, 6, Locale::parse("en")),
                       doctest::Contains("pool size 0"), Error);
  NoiseSpec none = spec;
  none.min_edits = none.max_edits = 0;
  CHECK_THROWS_WITH_AS(generate_eval(corpus, none, alphabet, 1, 6, Locale::parse("en")),
                       doctest::Contains("pool size 0"), Error);
}
