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

#include "spellkd/noise.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <numeric>

#include "spellkd/error.hpp"
#include "spellkd/text.hpp"

namespace spellkd {
namespace {

std::int64_t parse_int(std::string_view s) {
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error("malformed number '" + std::string(s) + "'");
  }
  return value;
}

// Positions eligible for each operation in the current text.
struct EditSites {
  std::vector<std::size_t> insert, remove, replace;
};

EditSites edit_sites(const std::u32string& cps) {
  EditSites sites;
  const auto n = cps.size();
  auto word_char = [&](std::size_t i) { return i < n && !text::is_whitespace(cps[i]); };
  for (std::size_t i = 0; i <= n; ++i) {
    if (word_char(i) || (i > 0 && word_char(i - 1))) sites.insert.push_back(i);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!word_char(i)) continue;
    sites.replace.push_back(i);
    if ((i > 0 && word_char(i - 1)) || word_char(i + 1)) sites.remove.push_back(i);
  }
  return sites;
}

}  // namespace

Rational::Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
  if (d == 0) throw Error("zero denominator");
  if (den < 0) num = -num, den = -den;
  const auto g = std::gcd(num, den);
  if (g > 1) num /= g, den /= g;
}

Rational Rational::parse(std::string_view text) {
  if (const auto slash = text.find('/'); slash != std::string_view::npos) {
    return {parse_int(text.substr(0, slash)), parse_int(text.substr(slash + 1))};
  }
  if (const auto dot = text.find('.'); dot != std::string_view::npos) {
    const auto frac = text.substr(dot + 1);
    if (frac.size() > 15) throw Error("too many decimals in '" + std::string(text) + "'");
    std::int64_t den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
    const auto whole = text.substr(0, dot);
    const std::int64_t w = whole.empty() ? 0 : parse_int(whole);
    const std::int64_t f = frac.empty() ? 0 : parse_int(frac);
    return {w * den + (text.starts_with('-') ? -f : f), den};
  }
  return {parse_int(text), 1};
}

std::string Rational::str() const {
  return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

Rational operator+(const Rational& a, const Rational& b) {
  const auto g = std::gcd(a.den, b.den);
  return {a.num * (b.den / g) + b.num * (a.den / g), a.den / g * b.den};
}

void NoiseSpec::validate() const {
  for (const auto& p : {p_insert, p_delete, p_replace}) {
    if (p.num < 0) throw Error("noise probabilities must be non-negative");
  }
  if (!(p_insert + p_delete + p_replace == Rational(1))) {
    throw Error("noise probabilities must sum to exactly 1");
  }
  if (min_edits < 0 || max_edits < min_edits) throw Error("require 0 <= min_edits <= max_edits");
  if (train_copies < 1 || eval_copies < 1) throw Error("copies must be at least 1");
}

nlohmann::json to_json(const NoiseSpec& spec) {
  nlohmann::ordered_json j;
  j["p_insert"] = spec.p_insert.str();
  j["p_delete"] = spec.p_delete.str();
  j["p_replace"] = spec.p_replace.str();
  j["edits_per_sentence"] = {{"min", spec.min_edits}, {"max", spec.max_edits}};
  j["train_copies"] = spec.train_copies;
  j["eval_copies"] = spec.eval_copies;
  j["seed"] = spec.seed;
  return j;
}

NoiseSpec noise_spec_from_json(const nlohmann::json& j) {
  NoiseSpec spec;
  auto rational = [&](const char* key, Rational fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (v.is_string()) return Rational::parse(v.get<std::string>());
    if (v.is_number_integer()) return Rational(v.get<std::int64_t>());
    throw Error(std::string("noise field '") + key + "' must be a fraction string");
  };
  spec.p_insert = rational("p_insert", spec.p_insert);
  spec.p_delete = rational("p_delete", spec.p_delete);
  spec.p_replace = rational("p_replace", spec.p_replace);
  if (j.contains("edits_per_sentence")) {
    spec.min_edits = j["edits_per_sentence"].value("min", spec.min_edits);
    spec.max_edits = j["edits_per_sentence"].value("max", spec.max_edits);
  }
  spec.train_copies = j.value("train_copies", spec.train_copies);
  spec.eval_copies = j.value("eval_copies", spec.eval_copies);
  spec.seed = j.value("seed", spec.seed);
  spec.validate();
  return spec;
}

Alphabet::Alphabet(std::vector<char32_t> symbols, std::vector<double> frequencies)
    : symbols_(std::move(symbols)), frequencies_(std::move(frequencies)) {
  if (symbols_.empty() || symbols_.size() != frequencies_.size()) {
    throw Error("alphabet must be non-empty with one frequency per symbol");
  }
  double total = 0.0;
  for (double f : frequencies_) {
    total += f;
    cumulative_.push_back(total);
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("alphabet frequencies must sum to 1");
}

double Alphabet::frequency(char32_t symbol) const {
  const auto it = std::find(symbols_.begin(), symbols_.end(), symbol);
  return it == symbols_.end() ? 0.0 : frequencies_[static_cast<std::size_t>(it - symbols_.begin())];
}

char32_t Alphabet::sample(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  const auto index = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                           symbols_.size() - 1);
  return symbols_[index];
}

Alphabet build_alphabet(const std::vector<std::string>& corpus) {
  std::map<char32_t, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& line : corpus) {
    for (char32_t cp : text::decode_utf8(line)) {
      if (text::is_whitespace(cp)) continue;
      ++counts[cp];
      ++total;
    }
  }
  if (total == 0) throw Error("corpus has no non-whitespace characters");
  std::vector<char32_t> symbols;
  std::vector<double> frequencies;
  for (const auto& [cp, count] : counts) {
    symbols.push_back(cp);
    frequencies.push_back(static_cast<double>(count) / static_cast<double>(total));
  }
  return Alphabet(std::move(symbols), std::move(frequencies));
}

std::string apply_edit(std::string_view sentence, const Edit& edit) {
  auto cps = text::decode_utf8(sentence);
  switch (edit.op) {
    case EditOp::insert:
      if (edit.position > cps.size()) throw Error("insert position out of range");
      cps.insert(cps.begin() + static_cast<std::ptrdiff_t>(edit.position), edit.symbol);
      break;
    case EditOp::remove:
      if (edit.position >= cps.size()) throw Error("delete position out of range");
      cps.erase(cps.begin() + static_cast<std::ptrdiff_t>(edit.position));
      break;
    case EditOp::replace:
      if (edit.position >= cps.size()) throw Error("replace position out of range");
      cps[edit.position] = edit.symbol;
      break;
  }
  return text::encode_utf8(cps);
}

Corruption corrupt_traced(std::string_view sentence, const NoiseSpec& spec,
                          const Alphabet& alphabet, Rng& rng) {
  auto cps = text::decode_utf8(sentence);
  if (std::all_of(cps.begin(), cps.end(), [](char32_t c) { return text::is_whitespace(c); })) {
    throw Error("cannot corrupt a blank sentence");
  }
  const double t_insert = spec.p_insert.value();
  const double t_delete = t_insert + spec.p_delete.value();
  const auto span = static_cast<std::uint64_t>(spec.max_edits - spec.min_edits + 1);
  const auto k = static_cast<int>(spec.min_edits + static_cast<int>(rng.below(span)));

  Corruption result;
  for (int e = 0; e < k; ++e) {
    const auto sites = edit_sites(cps);
    EditOp op;
    // Deleting is impossible once every word is a single character; redraw.
    do {
      const double u = rng.uniform();
      op = u < t_insert ? EditOp::insert : u < t_delete ? EditOp::remove : EditOp::replace;
    } while (op == EditOp::remove && sites.remove.empty());

    const auto& candidates = op == EditOp::insert   ? sites.insert
                             : op == EditOp::remove ? sites.remove
                                                    : sites.replace;
    Edit edit{op, candidates[rng.below(candidates.size())], 0};
    switch (op) {
      case EditOp::insert:
        edit.symbol = alphabet.sample(rng);
        cps.insert(cps.begin() + static_cast<std::ptrdiff_t>(edit.position), edit.symbol);
        break;
      case EditOp::remove:
        cps.erase(cps.begin() + static_cast<std::ptrdiff_t>(edit.position));
        break;
      case EditOp::replace: {
        const char32_t original = cps[edit.position];
        const bool can_change = alphabet.symbols().size() > 1 || alphabet.symbols()[0] != original;
        do {
          edit.symbol = alphabet.sample(rng);
        } while (can_change && edit.symbol == original);
        cps[edit.position] = edit.symbol;
        break;
      }
    }
    result.edits.push_back(edit);
  }
  result.text = text::encode_utf8(cps);
  return result;
}

std::string corrupt(std::string_view sentence, const NoiseSpec& spec, const Alphabet& alphabet,
                    Rng& rng) {
  return corrupt_traced(sentence, spec, alphabet, rng).text;
}

Dataset generate_training(const std::vector<std::string>& corpus, const NoiseSpec& spec,
                          const Alphabet& alphabet, const Locale& locale) {
  spec.validate();
  Dataset dataset("noise:train", spec.seed);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Rng rng(derive_seed(spec.seed, i));
    for (int c = 0; c < spec.train_copies; ++c) {
      dataset.add({corrupt(corpus[i], spec, alphabet, rng), corpus[i], locale});
    }
  }
  return dataset;
}

Dataset generate_eval(const std::vector<std::string>& corpus, const NoiseSpec& spec,
                      const Alphabet& alphabet, std::size_t target_count, std::size_t min_words,
                      const Locale& locale) {
  spec.validate();
  if (target_count < 1) throw Error("target_count must be at least 1");
  const auto eval_seed = derive_seed(spec.seed, "eval");
  std::vector<ExamplePair> pool;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (text::word_count(corpus[i]) < min_words) continue;
    Rng rng(derive_seed(eval_seed, i));
    for (int c = 0; c < spec.eval_copies; ++c) {
      auto noised = corrupt(corpus[i], spec, alphabet, rng);
      if (noised != corpus[i]) pool.push_back({std::move(noised), corpus[i], locale});
    }
  }
  if (pool.size() < target_count) {
    throw Error("eval pool too small: pool size " + std::to_string(pool.size()) + " < " +
                std::to_string(target_count));
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(eval_seed, "sample"));
  shuffle(order.begin(), order.end(), rng);
  order.resize(target_count);
  std::sort(order.begin(), order.end());

  Dataset dataset("noise:eval", spec.seed);
  for (auto i : order) dataset.add(std::move(pool[i]));
  return dataset;
}

}  // namespace spellkd
