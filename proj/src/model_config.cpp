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

#include "spellkd/model/config.hpp"

#include <string>

#include "spellkd/error.hpp"
#include "spellkd/tokenizer.hpp"

namespace spellkd {

void ModelConfig::validate() const {
  if (encoder_layers < 1 || decoder_layers < 1) throw Error("model needs at least one layer per stack");
  if (heads < 1 || model_dim < 1 || model_dim % heads != 0) {
    throw Error("model_dim must be a positive multiple of heads");
  }
  if (ffn_dim < 1) throw Error("ffn_dim must be positive");
  if (vocab_size < kNumSpecials + 1) throw Error("vocab_size must be at least 5");
  if (max_positions < 2) throw Error("max_positions must be at least 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error("dropout_rate must lie in [0, 1)");
}

ModelConfig teacher_desk_preset(int vocab_size) {
  return {4, 4, 128, 4, 256, vocab_size, 256, 0.0};
}

ModelConfig student_desk_preset(int vocab_size) {
  return {2, 2, 96, 4, 192, vocab_size, 256, 0.0};
}

ModelConfig bart_large_preset(int vocab_size) {
  return {12, 12, 1024, 16, 4096, vocab_size, 1024, 0.1};
}

ModelConfig bart_6layer_preset(int vocab_size) {
  return {6, 6, 1024, 16, 4096, vocab_size, 1024, 0.1};
}

ModelConfig student_2layer_preset(int vocab_size) {
  return {2, 2, 768, 12, 3072, vocab_size, 1024, 0.1};
}

ModelConfig model_preset(std::string_view name, int vocab_size) {
  if (name == "teacher_desk") return teacher_desk_preset(vocab_size);
  if (name == "student_desk") return student_desk_preset(vocab_size);
  if (name == "bart_large") return bart_large_preset(vocab_size);
  if (name == "bart_6layer") return bart_6layer_preset(vocab_size);
  if (name == "student_2layer") return student_2layer_preset(vocab_size);
  throw Error("unknown model preset '" + std::string(name) + "'");
}

std::int64_t parameter_count(const ModelConfig& c) {
  const std::int64_t d = c.model_dim, f = c.ffn_dim, v = c.vocab_size;
  const std::int64_t norm = 2 * d;
  const std::int64_t attention = 4 * (d * d + d);
  const std::int64_t ffn = d * f + f + f * d + d;
  const std::int64_t encoder_layer = 2 * norm + attention + ffn;
  const std::int64_t decoder_layer = 3 * norm + 2 * attention + ffn;
  return v * d + c.encoder_layers * encoder_layer + norm + c.decoder_layers * decoder_layer + norm;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (warmup_steps < 0) throw Error("warmup_steps must be non-negative");
  if (batch_size < 1) throw Error("batch_size must be positive");
  if (epochs < 0) throw Error("epochs must be non-negative");
  if (!(label_smoothing >= 0.0 && label_smoothing < 0.5)) throw Error("label_smoothing must lie in [0, 0.5)");
  if (!(gradient_clip_norm > 0.0)) throw Error("gradient_clip_norm must be positive");
  if (max_steps < 0) throw Error("max_steps must be non-negative");
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["encoder_layers"] = c.encoder_layers;
  j["decoder_layers"] = c.decoder_layers;
  j["model_dim"] = c.model_dim;
  j["heads"] = c.heads;
  j["ffn_dim"] = c.ffn_dim;
  j["vocab_size"] = c.vocab_size;
  j["max_positions"] = c.max_positions;
  j["dropout_rate"] = c.dropout_rate;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
  c.model_dim = j.value("model_dim", c.model_dim);
  c.heads = j.value("heads", c.heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_positions = j.value("max_positions", c.max_positions);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.validate();
  return c;
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["warmup_steps"] = c.warmup_steps;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["label_smoothing"] = c.label_smoothing;
  j["seed"] = c.seed;
  j["gradient_clip_norm"] = c.gradient_clip_norm;
  j["max_steps"] = c.max_steps;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.seed = j.value("seed", c.seed);
  c.gradient_clip_norm = j.value("gradient_clip_norm", c.gradient_clip_norm);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.validate();
  return c;
}

}  // namespace spellkd
