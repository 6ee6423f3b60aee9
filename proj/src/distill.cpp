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

#include "spellkd/distill.hpp"

#include <algorithm>
#include <thread>

#include "spellkd/error.hpp"
#include "spellkd/eval.hpp"
#include "spellkd/model/model.hpp"
#include "spellkd/text.hpp"

namespace spellkd {
namespace {

constexpr std::size_t kDecodeChunk = 128;

// Teacher output as a storable label: control characters become spaces and a
// blank output means "leave the input alone".
std::string clean_output(std::string out, const std::string& input) {
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 0x20) c = ' ';
  }
  if (text::strip(out).empty()) return input;
  return out;
}

}  // namespace

std::shared_ptr<const Teacher> checkpoint_teacher(std::shared_ptr<const Checkpoint> checkpoint, std::string id,
                                                  unsigned workers) {
  if (!checkpoint) throw Error("checkpoint_teacher needs a checkpoint");
  workers = std::max(1u, workers);
  auto fn = [checkpoint, workers](std::span<const std::string> inputs) {
    std::vector<std::string> out(inputs.size());
    const std::size_t chunks = (inputs.size() + kDecodeChunk - 1) / kDecodeChunk;
    const auto run = [&](std::size_t worker) {
      for (std::size_t c = worker; c < chunks; c += workers) {
        const auto begin = c * kDecodeChunk;
        const auto end = std::min(inputs.size(), begin + kDecodeChunk);
        int max_len = 0;
        for (auto i = begin; i < end; ++i) max_len = std::max(max_len, default_max_len(*checkpoint, inputs[i]));
        const auto results = decode_greedy_batch(*checkpoint, inputs.subspan(begin, end - begin), max_len);
        for (auto i = begin; i < end; ++i) out[i] = results[i - begin].text;
      }
    };
    if (workers == 1 || chunks < 2) {
      run(0);
    } else {
      std::vector<std::jthread> threads;
      for (unsigned w = 0; w < workers; ++w) threads.emplace_back(run, w);
    }
    return out;
  };
  return std::make_shared<Teacher>(Teacher{std::move(id), std::move(fn)});
}

std::string_view to_string(TeacherKind kind) {
  return kind == TeacherKind::monolingual ? "monolingual" : "multilingual";
}

TeacherKind parse_teacher_kind(std::string_view name) {
  if (name == "monolingual") return TeacherKind::monolingual;
  if (name == "multilingual") return TeacherKind::multilingual;
  throw Error("unknown teacher kind '" + std::string(name) + "'");
}

void TeacherRegistry::add(TeacherEntry entry) {
  if (!entry.teacher) throw Error("teacher entry for " + entry.locale.str() + " has no teacher");
  if (entry.dev_f1 && (*entry.dev_f1 < 0.0 || *entry.dev_f1 > 1.0)) throw Error("dev_f1 outside [0,1]");
  const auto locale = entry.locale;
  if (!entries_.emplace(locale, std::move(entry)).second) {
    throw Error("duplicate teacher entry for locale " + locale.str());
  }
}

const TeacherEntry& TeacherRegistry::at(const Locale& locale) const {
  const auto it = entries_.find(locale);
  if (it == entries_.end()) throw Error("no teacher registered for locale " + locale.str());
  return it->second;
}

std::string_view to_string(DistillVariant variant) {
  switch (variant) {
    case DistillVariant::single_multilingual: return "single_multilingual";
    case DistillVariant::matched_monolingual: return "matched_monolingual";
    case DistillVariant::best_teacher: return "best_teacher";
  }
  return "";
}

DistillVariant parse_distill_variant(std::string_view name) {
  for (auto v : {DistillVariant::single_multilingual, DistillVariant::matched_monolingual,
                 DistillVariant::best_teacher}) {
    if (name == to_string(v)) return v;
  }
  throw Error("unknown distill variant '" + std::string(name) + "'");
}

void DistillPlan::validate() const {
  if (input_corpora.empty()) throw Error("distill plan has no input corpora");
  for (const auto& [locale, corpus] : input_corpora) {
    if (corpus.empty()) throw Error("empty input corpus for locale " + locale.str());
    registry.at(locale);
  }
  if (variant == DistillVariant::single_multilingual) {
    const Teacher* shared = nullptr;
    for (const auto& [locale, entry] : registry.entries()) {
      if (shared && entry.teacher.get() != shared) {
        throw Error("single_multilingual plan must use one teacher for every locale");
      }
      shared = entry.teacher.get();
    }
  }
  if (variant == DistillVariant::matched_monolingual) {
    for (const auto& [locale, entry] : registry.entries()) {
      if (entry.kind != TeacherKind::monolingual) {
        throw Error("matched_monolingual plan has a non-monolingual teacher for " + locale.str());
      }
    }
  }
}

nlohmann::ordered_json to_json(const DistillPlan& plan) {
  nlohmann::ordered_json j;
  j["variant"] = to_string(plan.variant);
  auto& entries = j["entries"] = nlohmann::ordered_json::array();
  for (const auto& [locale, entry] : plan.registry.entries()) {
    nlohmann::ordered_json e{{"locale", locale.str()}, {"teacher", entry.teacher->id}, {"kind", to_string(entry.kind)}};
    if (entry.dev_f1) e["dev_f1"] = *entry.dev_f1;
    entries.push_back(std::move(e));
  }
  auto& inputs = j["inputs"] = nlohmann::ordered_json::object();
  for (const auto& [locale, corpus] : plan.input_corpora) inputs[locale.str()] = corpus.size();
  if (plan.cap_per_locale) j["cap_per_locale"] = *plan.cap_per_locale;
  return j;
}

Dataset generate_labels(const Teacher& teacher, std::span<const std::string> inputs, const Locale& locale) {
  Dataset out;
  if (inputs.empty()) return out;
  const auto labels = teacher.correct(inputs);
  if (labels.size() != inputs.size()) throw Error("teacher " + teacher.id + " returned the wrong number of outputs");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out.add(ExamplePair{inputs[i], clean_output(labels[i], inputs[i]), locale});
  }
  return out;
}

Dataset generate_labels(const Teacher& teacher, const Dataset& inputs) {
  std::vector<std::string> texts;
  texts.reserve(inputs.size());
  for (const auto& p : inputs.pairs()) texts.push_back(p.input);
  Dataset out;
  if (texts.empty()) return out;
  const auto labels = teacher.correct(texts);
  if (labels.size() != texts.size()) throw Error("teacher " + teacher.id + " returned the wrong number of outputs");
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.add(ExamplePair{texts[i], clean_output(labels[i], texts[i]), inputs[i].locale});
  }
  return out;
}

double dev_f1(const Teacher& teacher, const Dataset& dev) {
  if (dev.empty()) throw Error("empty dev set");
  std::vector<std::string> inputs;
  for (const auto& p : dev.pairs()) inputs.push_back(p.input);
  const auto outputs = teacher.correct(inputs);
  if (outputs.size() != inputs.size()) throw Error("teacher " + teacher.id + " returned the wrong number of outputs");
  std::vector<Judgment> sys, gold;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    sys.push_back(judge(inputs[i], outputs[i]));
    gold.push_back(judge(inputs[i], dev[i].label));
  }
  return score(sys, gold).f1;
}

TeacherRegistry select_best_teacher(const std::map<Locale, std::vector<TeacherEntry>>& candidates,
                                    const std::map<Locale, Dataset>& dev) {
  TeacherRegistry registry;
  for (const auto& [locale, entries] : candidates) {
    if (entries.empty()) throw Error("no candidate teachers for locale " + locale.str());
    const auto d = dev.find(locale);
    if (d == dev.end() || d->second.empty()) throw Error("missing dev set for locale " + locale.str());
    std::optional<TeacherEntry> best;
    for (const auto& candidate : entries) {
      TeacherEntry scored = candidate;
      scored.locale = locale;
      scored.dev_f1 = dev_f1(*candidate.teacher, d->second);
      const bool better = !best || *scored.dev_f1 > *best->dev_f1 ||
                          (*scored.dev_f1 == *best->dev_f1 && scored.kind == TeacherKind::monolingual &&
                           best->kind != TeacherKind::monolingual);
      if (better) best = std::move(scored);
    }
    registry.add(std::move(*best));
  }
  return registry;
}

StudentData assemble_student_data(const DistillPlan& plan) {
  plan.validate();
  StudentData out;
  for (const auto& [locale, corpus] : plan.input_corpora) {
    const auto& entry = plan.registry.at(locale);
    std::vector<std::string> inputs;
    for (const auto& p : corpus.pairs()) {
      if (plan.cap_per_locale && inputs.size() >= *plan.cap_per_locale) break;
      inputs.push_back(p.input);
    }
    const auto labelled = generate_labels(*entry.teacher, inputs, locale);
    out.provenance.push_back(
        Shard{locale, entry.teacher->id, entry.kind, entry.dev_f1, out.data.size(), labelled.size()});
    out.data.append(labelled);
  }
  return out;
}

StudentData add_language(const StudentData& existing, const TeacherEntry& new_teacher, const Dataset& new_corpus) {
  if (!new_teacher.teacher) throw Error("new teacher entry has no teacher");
  if (new_corpus.empty()) throw Error("empty corpus for new locale " + new_teacher.locale.str());
  for (const auto& locale : existing.data.locales()) {
    if (locale == new_teacher.locale) throw Error("locale " + locale.str() + " is already in the student data");
  }
  StudentData out = existing;
  std::vector<std::string> inputs;
  for (const auto& p : new_corpus.pairs()) inputs.push_back(p.input);
  const auto labelled = generate_labels(*new_teacher.teacher, inputs, new_teacher.locale);
  out.provenance.push_back(Shard{new_teacher.locale, new_teacher.teacher->id, new_teacher.kind, new_teacher.dev_f1,
                                 out.data.size(), labelled.size()});
  out.data.append(labelled);
  return out;
}

nlohmann::ordered_json provenance_to_json(const StudentData& data, const std::string& variant) {
  nlohmann::ordered_json j;
  j["variant"] = variant;
  j["pairs"] = data.data.size();
  auto& shards = j["shards"] = nlohmann::ordered_json::array();
  for (const auto& s : data.provenance) {
    nlohmann::ordered_json e{{"locale", s.locale.str()}, {"teacher", s.teacher}, {"kind", to_string(s.kind)}};
    if (s.dev_f1) e["dev_f1"] = *s.dev_f1;
    e["offset"] = s.offset;
    e["count"] = s.count;
    shards.push_back(std::move(e));
  }
  return j;
}

std::filesystem::path provenance_path(const std::filesystem::path& dataset_path) {
  auto out = dataset_path;
  out.replace_extension();
  out += ".provenance.json";
  return out;
}

std::string locale_tag(const Locale& locale) { return "<" + locale.str() + ">"; }

std::string tag_input(const Locale& locale, std::string_view input) {
  return locale_tag(locale) + " " + std::string(input);
}

Dataset with_locale_tags(const Dataset& data) {
  Dataset out(data.manifest().source, data.manifest().seed);
  for (const auto& p : data.pairs()) out.add(ExamplePair{tag_input(p.locale, p.input), p.label, p.locale});
  return out;
}

}  // namespace spellkd
