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

#include <cmath>
#include <functional>
#include <map>

#include "spellkd/error.hpp"
#include "spellkd/model/search.hpp"
#include "spellkd/rng.hpp"

using namespace spellkd;

namespace {

constexpr int kEos = 0;
constexpr int kStart = 3;  // outside the 3-token vocabulary, never scored

using Table = std::function<std::vector<double>(const TokenSeq&)>;  // generated prefix -> probabilities

// Scores rows from a probability table keyed by the generated prefix.
class TableModel : public StepModel {
 public:
  TableModel(Table table, int rows) : table_(std::move(table)), rows_(static_cast<std::size_t>(rows)) {}
  int vocab_size() const override { return 3; }
  LogProbMatrix step(std::span<const int> parents, std::span<const int> tokens) override {
    std::vector<TokenSeq> next;
    for (std::size_t r = 0; r < parents.size(); ++r) {
      auto seq = rows_.at(static_cast<std::size_t>(parents[r]));
      if (tokens[r] != kStart) seq.push_back(tokens[r]);
      next.push_back(std::move(seq));
    }
    rows_ = std::move(next);
    LogProbMatrix out(static_cast<Eigen::Index>(rows_.size()), 3);
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      const auto p = table_(rows_[r]);
      for (int v = 0; v < 3; ++v) out(static_cast<Eigen::Index>(r), v) = std::log(p[static_cast<std::size_t>(v)]);
    }
    ++calls;
    return out;
  }
  int calls = 0;

 private:
  Table table_;
  std::vector<TokenSeq> rows_;
};

// "a" looks better at the first step, but every continuation after it is
// flat; "b" is followed by an almost certain eos.
std::vector<double> garden_path(const TokenSeq& prefix) {
  if (prefix.empty()) return {0.001, 0.599, 0.4};
  if (prefix.front() == 2) return {0.99, 0.005, 0.005};
  return {0.34, 0.33, 0.33};
}

Table random_table(std::uint64_t seed) {
  return [seed](const TokenSeq& prefix) {
    std::string key;
    for (int t : prefix) key += static_cast<char>('0' + t);
    Rng rng(derive_seed(seed, key));
    std::vector<double> p(3);
    double z = 0;
    for (auto& x : p) z += (x = 0.05 + rng.uniform());
    for (auto& x : p) x /= z;
    return p;
  };
}

struct Scored {
  TokenSeq tokens;
  double log_prob;
};

// Every eos-terminated sequence up to max_len tokens.
void enumerate(const Table& table, TokenSeq prefix, double lp, int max_len, std::vector<Scored>& out) {
  if (static_cast<int>(prefix.size()) == max_len) return;
  const auto p = table(prefix);
  for (int v = 0; v < 3; ++v) {
    auto next = prefix;
    next.push_back(v);
    const double nlp = lp + std::log(p[static_cast<std::size_t>(v)]);
    if (v == kEos) {
      out.push_back({next, nlp});
    } else {
      enumerate(table, next, nlp, max_len, out);
    }
  }
}

Scored exhaustive_best(const Table& table, int max_len) {
  std::vector<Scored> all;
  enumerate(table, {}, 0.0, max_len, all);
  REQUIRE_FALSE(all.empty());
  Scored best = all.front();
  for (const auto& s : all) {
    if (s.log_prob / static_cast<double>(s.tokens.size()) > best.log_prob / static_cast<double>(best.tokens.size())) {
      best = s;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("beam search escapes a garden path that greedy takes") {
  const auto oracle = exhaustive_best(garden_path, 4);
  CHECK(oracle.tokens == TokenSeq{2, kEos});

  TableModel greedy_model(garden_path, 1);
  const auto greedy = greedy_search(greedy_model, 1, 4, kStart, kEos);
  REQUIRE(greedy.size() == 1);
  CHECK(greedy[0].tokens == TokenSeq{1, kEos});
  CHECK(greedy[0].finished);

  TableModel beam_model(garden_path, 1);
  const auto beam = beam_search(beam_model, 2, 4, kStart, kEos);
  CHECK(beam.tokens == oracle.tokens);
  CHECK(beam.log_prob == doctest::Approx(oracle.log_prob).epsilon(1e-12));
  CHECK(beam.finished);
}

TEST_CASE("wide beam equals the exhaustive optimum") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto table = random_table(seed);
    const auto oracle = exhaustive_best(table, 4);
    TableModel model(table, 1);
    const auto beam = beam_search(model, 100, 4, kStart, kEos);
    CHECK(beam.tokens == oracle.tokens);
  }
}

TEST_CASE("beam of one is greedy") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto table = random_table(seed + 1000);
    TableModel a(table, 1), b(table, 1);
    const auto greedy = greedy_search(a, 1, 6, kStart, kEos).front();
    const auto beam = beam_search(b, 1, 6, kStart, kEos);
    CHECK(beam.tokens == greedy.tokens);
    CHECK(beam.log_prob == greedy.log_prob);
    CHECK(beam.finished == greedy.finished);
  }
}

TEST_CASE("greedy picks the lowest id on ties and stops at max_len") {
  const Table flat = [](const TokenSeq&) { return std::vector<double>{0.2, 0.4, 0.4}; };
  TableModel model(flat, 3);
  const auto out = greedy_search(model, 3, 5, kStart, kEos);
  REQUIRE(out.size() == 3);
  for (const auto& h : out) {
    CHECK(h.tokens == TokenSeq{1, 1, 1, 1, 1});
    CHECK_FALSE(h.finished);
    CHECK(h.log_prob == doctest::Approx(5 * std::log(0.4)));
  }
  CHECK(model.calls == 5);

  TableModel zero(flat, 2);
  const auto none = greedy_search(zero, 2, 0, kStart, kEos);
  CHECK(none[0].tokens.empty());
  CHECK_FALSE(none[0].finished);
  CHECK(zero.calls == 0);

  TableModel m(flat, 1);
  CHECK_THROWS_AS(beam_search(m, 0, 4, kStart, kEos), Error);
}

TEST_CASE("finished rows leave the batch") {
  // Row state is the prefix; rows diverge only through their own choices, so
  // feed a table where the first token decides the length.
  const Table table = [](const TokenSeq& prefix) {
    if (prefix.size() >= 2) return std::vector<double>{0.9, 0.05, 0.05};
    return std::vector<double>{0.1, 0.5, 0.4};
  };
  TableModel model(table, 4);
  const auto out = greedy_search(model, 4, 10, kStart, kEos);
  for (const auto& h : out) {
    CHECK(h.tokens == TokenSeq{1, 1, kEos});
    CHECK(h.finished);
  }
  CHECK(model.calls == 3);
}
