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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spellkd/corpus.hpp"
#include "spellkd/distill.hpp"
#include "spellkd/error.hpp"
#include "spellkd/model/config.hpp"
#include "spellkd/noise.hpp"
#include "spellkd/tokenizer.hpp"

namespace spellkd {

inline constexpr char kToolVersion[] = "spellkd 0.1.0";

struct LocaleSource {
  Locale locale;
  std::filesystem::path corpus;  // clean sentences, one per line
};

struct TokenizerSettings {
  Scheme scheme = Scheme::bbpe;
  std::size_t vocab_size = kDeskBbpe.vocab_size;
};

struct ModelRecipe {
  TokenizerSettings tokenizer;
  ModelConfig model;  // vocab_size is replaced by the trained tokenizer's size
  TrainConfig train;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  std::vector<LocaleSource> locales;
  std::vector<LocaleSource> added_locales;  // optional add_language stage
  std::size_t test_sentences = 300;
  std::size_t test_pairs = 250;
  std::size_t dev_sentences = 300;
  std::size_t dev_pairs = 250;
  std::size_t min_words = 6;
  NoiseSpec noise;
  ModelRecipe multilingual_teacher;
  ModelRecipe monolingual_teacher;
  ModelRecipe student;
  std::vector<DistillVariant> variants{DistillVariant::single_multilingual, DistillVariant::matched_monolingual,
                                       DistillVariant::best_teacher};
  int distill_copies = 1;
  std::optional<std::size_t> cap_per_locale;
  unsigned workers = 1;
  // Latency comparison of the best-teacher student against the multilingual teacher.
  bool bench = true;
  std::size_t bench_requests = 200;
  std::size_t bench_concurrency = 1;
  int bench_timeout_ms = 2000;
  std::size_t bench_warmup = 20;

  nlohmann::json raw;  // the document as given

  // Paths are resolved against `base_dir`; checks that they exist.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);
  void validate() const;
};

ModelConfig model_config_with_preset(const nlohmann::json& j);

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineOptions {
  std::function<void(const std::string&)> log;
  // Overrides config.seed when set.
  std::optional<std::uint64_t> seed;
};

struct PipelineResult {
  nlohmann::ordered_json report;  // also written to report.json
  std::optional<nlohmann::ordered_json> bench;
};

// Runs every stage into run_dir and returns the report. Artifacts of
// completed stages stay on disk when a later stage fails.
PipelineResult run_pipeline(const ExperimentConfig& config, const std::filesystem::path& run_dir,
                            const PipelineOptions& options = {});

}  // namespace spellkd
