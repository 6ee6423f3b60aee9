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
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "spellkd/corpus.hpp"

namespace spellkd {

struct Checkpoint;

// Teachers are text-to-text functions; nothing else about them is visible.
using CorrectBatchFn = std::function<std::vector<std::string>(std::span<const std::string>)>;

struct Teacher {
  std::string id;  // provenance name, usually the checkpoint path
  CorrectBatchFn correct;
};

// Greedy decoding of a checkpoint, batched, split across `workers` threads.
std::shared_ptr<const Teacher> checkpoint_teacher(std::shared_ptr<const Checkpoint> checkpoint, std::string id,
                                                  unsigned workers = 1);

enum class TeacherKind { monolingual, multilingual };
std::string_view to_string(TeacherKind kind);
TeacherKind parse_teacher_kind(std::string_view name);

struct TeacherEntry {
  Locale locale;
  std::shared_ptr<const Teacher> teacher;
  TeacherKind kind = TeacherKind::monolingual;
  std::optional<double> dev_f1;
};

class TeacherRegistry {
 public:
  void add(TeacherEntry entry);  // throws on a duplicate locale
  const TeacherEntry& at(const Locale& locale) const;
  bool contains(const Locale& locale) const { return entries_.contains(locale); }
  const std::map<Locale, TeacherEntry>& entries() const { return entries_; }

 private:
  std::map<Locale, TeacherEntry> entries_;
};

enum class DistillVariant { single_multilingual, matched_monolingual, best_teacher };
std::string_view to_string(DistillVariant variant);
DistillVariant parse_distill_variant(std::string_view name);

struct DistillPlan {
  DistillVariant variant = DistillVariant::best_teacher;
  TeacherRegistry registry;
  std::map<Locale, Dataset> input_corpora;  // inputs only; labels are ignored
  std::optional<std::size_t> cap_per_locale;

  void validate() const;
};

nlohmann::ordered_json to_json(const DistillPlan& plan);

// label = teacher(input); locale and order follow the inputs.
Dataset generate_labels(const Teacher& teacher, std::span<const std::string> inputs, const Locale& locale);
Dataset generate_labels(const Teacher& teacher, const Dataset& inputs);

// Corpus-level F1 of a teacher on a dev set of (noisy input, clean label).
double dev_f1(const Teacher& teacher, const Dataset& dev);

// Per locale, the candidate with the highest dev F1. Ties prefer a
// monolingual teacher, then the earlier candidate.
TeacherRegistry select_best_teacher(const std::map<Locale, std::vector<TeacherEntry>>& candidates,
                                    const std::map<Locale, Dataset>& dev);

struct Shard {
  Locale locale;
  std::string teacher;
  TeacherKind kind = TeacherKind::monolingual;
  std::optional<double> dev_f1;
  std::size_t offset = 0;
  std::size_t count = 0;
};

struct StudentData {
  Dataset data;
  std::vector<Shard> provenance;
};

// Locale-sorted concatenation of each locale's teacher labels.
StudentData assemble_student_data(const DistillPlan& plan);

// Appends labels from a teacher for a locale not yet present.
StudentData add_language(const StudentData& existing, const TeacherEntry& new_teacher, const Dataset& new_corpus);

nlohmann::ordered_json provenance_to_json(const StudentData& data, const std::string& variant);
// <dataset stem>.provenance.json next to the dataset.
std::filesystem::path provenance_path(const std::filesystem::path& dataset_path);

// Student inputs carry a reserved locale token: "<pt-BR> input".
std::string locale_tag(const Locale& locale);
std::string tag_input(const Locale& locale, std::string_view input);
Dataset with_locale_tags(const Dataset& data);

}  // namespace spellkd
