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

#include "spellkd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "spellkd/error.hpp"
#include "spellkd/rng.hpp"
#include "spellkd/text.hpp"

namespace spellkd {
namespace {

bool all_of_range(std::string_view s, char lo, char hi) {
  return std::all_of(s.begin(), s.end(), [&](char c) { return c >= lo && c <= hi; });
}

std::string line_error(std::string_view what, std::size_t line) {
  return std::string(what) + " at line " + std::to_string(line);
}

}  // namespace

bool Locale::is_valid(std::string_view text) {
  const auto dash = text.find('-');
  const auto language = text.substr(0, dash);
  if (language.size() < 2 || language.size() > 3 || !all_of_range(language, 'a', 'z')) {
    return false;
  }
  if (dash == std::string_view::npos) return true;
  const auto region = text.substr(dash + 1);
  return region.size() == 2 && all_of_range(region, 'A', 'Z');
}

Locale Locale::parse(std::string_view text) {
  if (!is_valid(text)) throw Error("invalid locale '" + std::string(text) + "'");
  Locale locale;
  const auto dash = text.find('-');
  locale.language = std::string(text.substr(0, dash));
  if (dash != std::string_view::npos) locale.region = std::string(text.substr(dash + 1));
  return locale;
}

std::string Locale::str() const { return region ? language + "-" + *region : language; }

void validate(const ExamplePair& pair) {
  for (const auto* field : {&pair.input, &pair.label}) {
    if (!text::is_valid_utf8(*field)) throw Error("field is not valid UTF-8");
    if (std::any_of(field->begin(), field->end(),
                    [](char c) { return static_cast<unsigned char>(c) < 0x20; })) {
      throw Error("control character in field");
    }
    if (text::strip(*field).empty()) throw Error("empty field");
  }
}

Dataset::Dataset(std::string source, std::uint64_t seed) {
  manifest_.source = std::move(source);
  manifest_.seed = seed;
}

void Dataset::add(ExamplePair pair) {
  ++manifest_.counts[pair.locale.str()];
  pairs_.push_back(std::move(pair));
}

void Dataset::append(const Dataset& other) {
  for (const auto& pair : other.pairs()) add(pair);
}

std::vector<Locale> Dataset::locales() const {
  std::vector<Locale> out;
  for (const auto& [name, count] : manifest_.counts) out.push_back(Locale::parse(name));
  return out;
}

Dataset Dataset::filter(const Locale& locale) const {
  Dataset out(manifest_.source, manifest_.seed);
  for (const auto& pair : pairs_) {
    if (pair.locale == locale) out.add(pair);
  }
  return out;
}

PairFormat parse_pair_format(std::string_view name) {
  if (name == "jsonl") return PairFormat::jsonl;
  if (name == "tsv") return PairFormat::tsv;
  throw Error("unknown pair format '" + std::string(name) + "'");
}

Dataset load_pairs(const std::filesystem::path& path, PairFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Dataset dataset(path.string(), 0);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string input, label, locale;
    if (format == PairFormat::jsonl) {
      nlohmann::json record;
      try {
        record = nlohmann::json::parse(line);
        input = record.at("input").get<std::string>();
        label = record.at("label").get<std::string>();
        locale = record.at("locale").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        throw Error(line_error("malformed record", line_no));
      }
    } else {
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
        throw Error(line_error("malformed record", line_no));
      }
      input = line.substr(0, t1);
      label = line.substr(t1 + 1, t2 - t1 - 1);
      locale = line.substr(t2 + 1);
    }
    if (!Locale::is_valid(locale)) throw Error(line_error("invalid locale", line_no));
    ExamplePair pair{std::move(input), std::move(label), Locale::parse(locale)};
    try {
      validate(pair);
    } catch (const Error& e) {
      throw Error(line_error(std::string("invalid record (") + e.what() + ")", line_no));
    }
    dataset.add(std::move(pair));
  }
  return dataset;
}

std::filesystem::path manifest_path(const std::filesystem::path& dataset_path) {
  auto out = dataset_path;
  out.replace_extension();
  out += ".manifest.json";
  return out;
}

std::string manifest_to_json(const Manifest& manifest) {
  nlohmann::ordered_json j;
  j["source"] = manifest.source;
  j["seed"] = manifest.seed;
  j["counts"] = nlohmann::ordered_json::object();
  for (const auto& [locale, count] : manifest.counts) j["counts"][locale] = count;
  return j.dump(2) + "\n";
}

void save_pairs(const Dataset& dataset, const std::filesystem::path& path, PairFormat format) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& pair : dataset.pairs()) {
    if (format == PairFormat::jsonl) {
      nlohmann::ordered_json j;
      j["input"] = pair.input;
      j["label"] = pair.label;
      j["locale"] = pair.locale.str();
      out << j.dump() << '\n';
    } else {
      if (pair.input.find('\t') != std::string::npos || pair.label.find('\t') != std::string::npos) {
        throw Error("tab inside a field cannot be written as TSV");
      }
      out << pair.input << '\t' << pair.label << '\t' << pair.locale.str() << '\n';
    }
  }
  std::ofstream(manifest_path(path), std::ios::binary) << manifest_to_json(dataset.manifest());
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double eval_fraction, std::uint64_t seed) {
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
    throw Error("eval_fraction must lie in (0, 1)");
  }
  if (dataset.empty()) throw Error("cannot split an empty dataset");
  const auto n = dataset.size();
  const auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_eval(n, false);
  for (std::size_t i = 0; i < n_eval; ++i) is_eval[order[i]] = true;

  const auto& source = dataset.manifest().source;
  Dataset train(source, seed), eval(source, seed);
  for (std::size_t i = 0; i < n; ++i) (is_eval[i] ? eval : train).add(dataset[i]);
  return {std::move(train), std::move(eval)};
}

std::size_t overlap_count(const Dataset& train, const Dataset& eval) {
  std::unordered_set<std::string_view> labels;
  labels.reserve(train.size());
  for (const auto& pair : train.pairs()) labels.insert(pair.label);
  return static_cast<std::size_t>(std::count_if(
      eval.pairs().begin(), eval.pairs().end(),
      [&](const ExamplePair& pair) { return labels.contains(pair.label); }));
}

std::vector<std::string> load_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!text::strip(line).empty()) lines.push_back(line);
  }
  return lines;
}

void save_lines(const std::vector<std::string>& lines, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& line : lines) out << line << '\n';
}

}  // namespace spellkd
