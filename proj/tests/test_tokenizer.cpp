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

#include <map>

#include "spellkd/error.hpp"
#include "spellkd/tokenizer.hpp"
#include "support.hpp"

using namespace spellkd;

namespace {

std::vector<std::string> classic_corpus() {
  std::vector<std::string> corpus;
  for (int i = 0; i < 5; ++i) corpus.push_back("low");
  for (int i = 0; i < 2; ++i) corpus.push_back("lower");
  for (int i = 0; i < 6; ++i) corpus.push_back("newest");
  for (int i = 0; i < 3; ++i) corpus.push_back("widest");
  return corpus;
}

std::pair<std::string, std::string> merge_tokens(const TokenizerModel& m, std::size_t i) {
  const auto& merge = m.merges().at(i);
  return {m.token(merge.left), m.token(merge.right)};
}

// Independent reference: count adjacent symbol pairs per word and return the
// most frequent one, smallest pair first on ties.
std::pair<std::string, std::string> most_frequent_pair(const std::vector<std::vector<std::string>>& words) {
  std::map<std::pair<std::string, std::string>, int> counts;
  for (const auto& w : words) {
    for (std::size_t i = 0; i + 1 < w.size(); ++i) ++counts[{w[i], w[i + 1]}];
  }
  std::pair<std::string, std::string> best;
  int best_count = 0;
  for (const auto& [pair, c] : counts) {
    if (c > best_count) {
      best = pair;
      best_count = c;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("classic merge trace") {
  const auto model = train_subword(classic_corpus(), Scheme::bpe, 40);
  REQUIRE(model.merges().size() >= 2);
  CHECK(merge_tokens(model, 0) == std::pair<std::string, std::string>{"e", "s"});
  CHECK(merge_tokens(model, 1) == std::pair<std::string, std::string>{"es", "t"});

  // Replay the greedy algorithm on explicit symbol lists for the first merges.
  std::vector<std::vector<std::string>> words;
  for (const auto& w : classic_corpus()) {
    std::vector<std::string> symbols{" "};
    for (char c : w) symbols.emplace_back(1, c);
    words.push_back(symbols);
  }
  for (std::size_t step = 0; step < 6 && step < model.merges().size(); ++step) {
    const auto expected = most_frequent_pair(words);
    CHECK(merge_tokens(model, step) == expected);
    for (auto& w : words) {
      std::vector<std::string> merged;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == expected.first && w[i + 1] == expected.second) {
          merged.push_back(w[i] + w[i + 1]);
          ++i;
        } else {
          merged.push_back(w[i]);
        }
      }
      w = merged;
    }
  }
}

TEST_CASE("training stops when no pair repeats") {
  const auto model = train_subword({"ab"}, Scheme::bpe, 100);
  CHECK(model.merges().empty());
  const auto two = train_subword({"ab", "ab"}, Scheme::bpe, 100);
  CHECK(two.merges().size() >= 1);
}

TEST_CASE("vocabulary size preconditions") {
  CHECK_THROWS_AS(train_subword(classic_corpus(), Scheme::bpe, 5), Error);
  CHECK_THROWS_AS(train_subword(classic_corpus(), Scheme::bbpe, 260), Error);
  const auto bbpe = train_subword(classic_corpus(), Scheme::bbpe, 270);
  CHECK(bbpe.vocab_size() >= 260);
  CHECK(bbpe.vocab_size() <= 270);
  for (int b = 0; b < 256; ++b) CHECK(bbpe.token(kNumSpecials + b) == std::string(1, static_cast<char>(b)));
  CHECK(bbpe.token(kPadId) == "<pad>");
  CHECK(bbpe.token(kUnkId) == "<unk>");
}

TEST_CASE("encode edge cases") {
  const auto bbpe = train_subword({"x"}, Scheme::bbpe, 300);
  CHECK(bbpe.encode("").empty());
  CHECK(bbpe.decode({}).text.empty());
  const auto e = bbpe.encode("é");
  // Boundary space then the two UTF-8 bytes.
  CHECK(e == TokenSeq{kNumSpecials + ' ', kNumSpecials + 0xC3, kNumSpecials + 0xA9});

  const auto bpe = train_subword({"forest trees"}, Scheme::bpe, 100);
  const auto unk = bpe.encode("樹");
  CHECK(std::count(unk.begin(), unk.end(), kUnkId) == 1);
  const auto back = bpe.decode(unk);
  CHECK(back.lossy);
  CHECK(back.text.find("\xEF\xBF\xBD") != std::string::npos);
}

TEST_CASE("decode flags invalid byte streams") {
  const auto bbpe = train_subword({"x"}, Scheme::bbpe, 300);
  const TokenSeq truncated{kNumSpecials + 'a', kNumSpecials + 0xC3};
  const auto d = bbpe.decode(truncated);
  CHECK(d.lossy);
  CHECK(d.text == "a\xEF\xBF\xBD");
  CHECK_FALSE(bbpe.decode(bbpe.encode("hello world")).lossy);
}

TEST_CASE("byte-level round trip on mixed scripts") {
  std::vector<std::string> corpus = {"hello world", "olá mundo", "привет мир", "γειά σου κόσμε", "こんにちは 世界"};
  const auto model = train_subword(corpus, Scheme::bbpe, 400);
  Rng rng(2024);
  for (int i = 0; i < 2000; ++i) {
    const auto s = testing::random_mixed_script(rng, 24);
    const auto d = model.decode(model.encode(s));
    REQUIRE(d.text == s);
    CHECK_FALSE(d.lossy);
  }
  for (const auto& s : {std::string("  leading"), std::string("trailing  "), std::string("a\t\tb\n"),
                        std::string(" "), std::string("\n")}) {
    CHECK(model.decode(model.encode(s)).text == s);
  }
}

TEST_CASE("character-level round trip with a seen alphabet") {
  const std::vector<std::string> corpus = {"ação é ótima", "naïve café", "the quick brown fox"};
  const auto model = train_subword(corpus, Scheme::bpe, 200);
  for (const auto& s : {std::string("café ação"), std::string("fox the brown"), std::string("é  ó")}) {
    const auto d = model.decode(model.encode(s));
    CHECK(d.text == s);
    CHECK_FALSE(d.lossy);
  }
  // NFC: a decomposed é encodes like the composed one.
  CHECK(model.encode("cafe\xCC\x81") == model.encode("café"));
}

TEST_CASE("more merges never lengthen the encoding") {
  std::vector<std::string> corpus;
  Rng rng(4);
  for (int i = 0; i < 200; ++i) corpus.push_back(testing::random_mixed_script(rng, 12));
  corpus.insert(corpus.end(), 50, "repeated words repeated words");
  const auto model = train_subword(corpus, Scheme::bbpe, 600);
  for (int i = 0; i < 50; ++i) {
    const auto s = i % 2 ? corpus[static_cast<std::size_t>(i)] : std::string("repeated words and more");
    std::size_t prev = SIZE_MAX;
    for (std::size_t m = 0; m <= model.merges().size(); m += std::max<std::size_t>(1, model.merges().size() / 10)) {
      const auto n = model.truncated(m).encode(s).size();
      CHECK(n <= prev);
      prev = n;
    }
    CHECK(model.encode(s).size() <= prev);
  }
}

TEST_CASE("file format round trip and validation") {
  testing::TempDir dir("tok");
  const auto model = train_subword({"low lower newest widest", "ñ ü 字"}, Scheme::bpe, 60);
  const auto text = model.serialize();
  CHECK(text.rfind("subword/v1 bpe ", 0) == 0);
  CHECK(text.find("\nV 0 ") != std::string::npos);
  CHECK(text.find("\nM ") != std::string::npos);
  model.save(dir / "m.tok");
  const auto back = TokenizerModel::load(dir / "m.tok");
  CHECK(back == model);
  CHECK(back.content_hash() == model.content_hash());
  CHECK(back.serialize() == text);

  CHECK_THROWS_AS(TokenizerModel::parse("subword/v2 bpe 4\n"), Error);
  CHECK_THROWS_AS(TokenizerModel::parse("garbage"), Error);
  std::string broken = text;
  broken += "M 0 1 999\n";
  CHECK_THROWS_AS(TokenizerModel::parse(broken), Error);
}

TEST_CASE("deterministic training and encoding") {
  std::vector<std::string> corpus;
  Rng rng(11);
  for (int i = 0; i < 100; ++i) corpus.push_back(testing::random_mixed_script(rng, 16));
  const auto a = train_subword(corpus, Scheme::bbpe, 500);
  const auto b = train_subword(corpus, Scheme::bbpe, 500);
  CHECK(a == b);
  for (const auto& s : corpus) CHECK(a.encode(s) == b.encode(s));
}
