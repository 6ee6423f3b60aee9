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

#include "spellkd/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "spellkd/error.hpp"
#include "spellkd/text.hpp"

namespace spellkd {

std::string_view to_string(Action action) { return action == Action::none ? "NONE" : "AUTO"; }

std::string normalize(std::string_view query, NormalizeOptions options) {
  std::string out;
  bool pending_space = false;
  const auto lossy = text::sanitize_utf8(query);
  for (char32_t cp : text::decode_utf8(lossy.text)) {
    if (text::is_punctuation(cp)) continue;
    if (text::is_whitespace(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    text::append_utf8(out, cp);
  }
  return options.fold_case ? text::to_lower(out) : out;
}

Judgment judge(std::string_view input, std::string_view model_output, NormalizeOptions options) {
  if (normalize(model_output, options) != normalize(input, options)) {
    return {Action::autocorrect, std::string(model_output)};
  }
  return {Action::none, std::string(input)};
}

EvalReport report_from_counts(std::size_t n_sys_auto, std::size_t n_gold_auto, std::size_t n_match) {
  EvalReport r;
  r.n_sys_auto = n_sys_auto;
  r.n_gold_auto = n_gold_auto;
  r.n_match = n_match;
  r.no_sys_auto = n_sys_auto == 0;
  r.no_gold_auto = n_gold_auto == 0;
  r.precision = r.no_sys_auto ? 0.0 : static_cast<double>(n_match) / static_cast<double>(n_sys_auto);
  r.recall = r.no_gold_auto ? 0.0 : static_cast<double>(n_match) / static_cast<double>(n_gold_auto);
  const double sum = r.precision + r.recall;
  r.f1 = sum > 0.0 ? 2.0 * r.precision * r.recall / sum : 0.0;
  return r;
}

EvalReport score(std::span<const Judgment> system, std::span<const Judgment> gold,
                 NormalizeOptions options) {
  if (system.size() != gold.size()) {
    throw Error("system and gold differ in length (" + std::to_string(system.size()) + " vs " +
                std::to_string(gold.size()) + ")");
  }
  std::size_t n_sys = 0, n_gold = 0, n_match = 0;
  for (std::size_t i = 0; i < system.size(); ++i) {
    const bool sys_auto = system[i].action == Action::autocorrect;
    const bool gold_auto = gold[i].action == Action::autocorrect;
    n_sys += sys_auto;
    n_gold += gold_auto;
    if (sys_auto && gold_auto &&
        normalize(system[i].query, options) == normalize(gold[i].query, options)) {
      ++n_match;
    }
  }
  return report_from_counts(n_sys, n_gold, n_match);
}

double relative_delta(const EvalReport& report, const EvalReport& baseline) {
  if (!(baseline.f1 > 0.0)) throw Error("relative delta needs a baseline with positive F1");
  const double delta = 100.0 * (report.f1 - baseline.f1) / baseline.f1;
  return std::round(delta * 10.0) / 10.0;
}

std::string format_delta(double percent) {
  char buffer[32];
  const double rounded = std::round(percent * 10.0) / 10.0;
  if (rounded == 0.0) return "0.0%";
  std::snprintf(buffer, sizeof buffer, "%+.1f%%", rounded);
  return buffer;
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["n_sys_auto"] = r.n_sys_auto;
  j["n_gold_auto"] = r.n_gold_auto;
  j["n_match"] = r.n_match;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["degenerate_flags"] = {{"no_sys_auto", r.no_sys_auto}, {"no_gold_auto", r.no_gold_auto}};
  return j;
}

std::vector<EvalRow> load_eval_rows(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<EvalRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EvalRow row;
      row.input = j.at("input").get<std::string>();
      row.output = j.contains("output") ? j["output"].get<std::string>() : j.at("label").get<std::string>();
      row.locale = j.value("locale", std::string());
      rows.push_back(std::move(row));
    } catch (const nlohmann::json::exception&) {
      throw Error("malformed record at line " + std::to_string(line_no) + " of " + path);
    }
  }
  return rows;
}

LocalizedReport evaluate_rows(std::span<const EvalRow> system, std::span<const EvalRow> gold,
                              NormalizeOptions options) {
  if (system.size() != gold.size()) {
    throw Error("system and gold differ in length (" + std::to_string(system.size()) + " vs " +
                std::to_string(gold.size()) + ")");
  }
  std::vector<Judgment> sys, ref;
  std::map<std::string, std::pair<std::vector<Judgment>, std::vector<Judgment>>> by_locale;
  for (std::size_t i = 0; i < system.size(); ++i) {
    if (system[i].input != gold[i].input) {
      throw Error("system and gold inputs differ at row " + std::to_string(i + 1));
    }
    sys.push_back(judge(system[i].input, system[i].output, options));
    ref.push_back(judge(gold[i].input, gold[i].output, options));
    const auto& locale = gold[i].locale.empty() ? system[i].locale : gold[i].locale;
    if (!locale.empty()) {
      by_locale[locale].first.push_back(sys.back());
      by_locale[locale].second.push_back(ref.back());
    }
  }
  LocalizedReport report;
  report.overall = score(sys, ref, options);
  for (const auto& [locale, pair] : by_locale) {
    report.per_locale[locale] = score(pair.first, pair.second, options);
  }
  return report;
}

nlohmann::ordered_json to_json(const LocalizedReport& report) {
  auto j = to_json(report.overall);
  if (!report.per_locale.empty()) {
    j["per_locale"] = nlohmann::ordered_json::object();
    for (const auto& [locale, r] : report.per_locale) j["per_locale"][locale] = to_json(r);
  }
  return j;
}

}  // namespace spellkd
