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
#include <string_view>

#include <json.hpp>

namespace spellkd {

struct ModelConfig {
  int encoder_layers = 1;
  int decoder_layers = 1;
  int model_dim = 8;
  int heads = 2;
  int ffn_dim = 16;
  int vocab_size = 16;
  int max_positions = 128;
  double dropout_rate = 0.0;

  int head_dim() const { return model_dim / heads; }
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Desk-scale presets (vocab_size is filled in from the tokenizer).
ModelConfig teacher_desk_preset(int vocab_size);
ModelConfig student_desk_preset(int vocab_size);
// Production-scale presets: a 12+12 layer BART-large shape, the 6-layer
// teacher and the 2-layer student. Kept as named configurations only.
ModelConfig bart_large_preset(int vocab_size);
ModelConfig bart_6layer_preset(int vocab_size);
ModelConfig student_2layer_preset(int vocab_size);

// Closed-form parameter count, independent of any allocated Parameters.
std::int64_t parameter_count(const ModelConfig& config);

struct TrainConfig {
  double learning_rate = 1e-3;
  int warmup_steps = 200;
  int batch_size = 32;
  int epochs = 1;
  double label_smoothing = 0.0;
  std::uint64_t seed = 0;
  double gradient_clip_norm = 1.0;
  // Optional cap on optimizer steps (0: train for all epochs).
  std::int64_t max_steps = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::ordered_json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Resolves "teacher_desk", "student_desk", "bart_large", "bart_6layer" or
// "student_2layer".
ModelConfig model_preset(std::string_view name, int vocab_size);

}  // namespace spellkd
