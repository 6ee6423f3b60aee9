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

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace spellkd {

enum class Action { none, autocorrect };

std::string_view to_string(Action action);

// action == none implies query is the original input.
struct Judgment {
  Action action = Action::none;
  std::string query;

  bool operator==(const Judgment&) const = default;
};

struct NormalizeOptions {
  bool fold_case = false;
};

// Exact-match key: Unicode punctuation removed, whitespace runs collapsed to
// one space, trimmed.
std::string normalize(std::string_view query, NormalizeOptions options = {});

// AUTO iff the output differs from the input under normalize().
Judgment judge(std::string_view input, std::string_view model_output, NormalizeOptions options = {});

struct EvalReport {
  std::size_t n_sys_auto = 0;
  std::size_t n_gold_auto = 0;
  std::size_t n_match = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool no_sys_auto = false;
  bool no_gold_auto = false;

  bool operator==(const EvalReport&) const = default;
};

// Positional comparison of system and gold judgments. Empty denominators give
// a zero metric and set the matching flag.
EvalReport score(std::span<const Judgment> system, std::span<const Judgment> gold,
                 NormalizeOptions options = {});

EvalReport report_from_counts(std::size_t n_sys_auto, std::size_t n_gold_auto, std::size_t n_match);

// 100 * (f1 - baseline.f1) / baseline.f1, rounded to one decimal.
double relative_delta(const EvalReport& report, const EvalReport& baseline);

// "+8.0%", "-5.0%", "0.0%".
std::string format_delta(double percent);

nlohmann::ordered_json to_json(const EvalReport& report);

struct EvalRow {
  std::string input;
  std::string output;
  std::string locale;  // empty when untagged
};

struct LocalizedReport {
  EvalReport overall;
  std::map<std::string, EvalReport> per_locale;
};

// Reads rows with keys `input` and `output` (or `label`) and optional `locale`.
std::vector<EvalRow> load_eval_rows(const std::string& path);

LocalizedReport evaluate_rows(std::span<const EvalRow> system, std::span<const EvalRow> gold,
                              NormalizeOptions options = {});

nlohmann::ordered_json to_json(const LocalizedReport& report);

}  // namespace spellkd
