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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spellkd/corpus.hpp"
#include "spellkd/error.hpp"
#include "spellkd/model/config.hpp"
#include "spellkd/model/parameters.hpp"
#include "spellkd/tokenizer.hpp"

namespace spellkd {

inline constexpr char kCheckpointMagic[] = "SQ2Q1";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  Parameters<float> params;
  std::shared_ptr<const TokenizerModel> tokenizer;
  // Where the tokenizer file lives. Relative paths resolve against the
  // checkpoint's directory.
  std::filesystem::path tokenizer_path;
  std::int64_t step = 0;
  std::string rng_state;
  std::vector<double> loss_history;  // mean training loss per epoch

  std::uint64_t tokenizer_hash() const { return tokenizer ? tokenizer->content_hash() : 0; }
};

// Writes the checkpoint. When tokenizer_path is empty the tokenizer is saved
// next to it as <stem>.tok and referenced by that name.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
// Loads and checks the referenced tokenizer against the stored hash.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Thrown when the training loss becomes non-finite. Holds the parameters from
// before the offending update.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::string message, Checkpoint last_good)
      : Error(std::move(message)), last_good_(std::make_shared<Checkpoint>(std::move(last_good))) {}
  const Checkpoint& last_good() const { return *last_good_; }

 private:
  std::shared_ptr<Checkpoint> last_good_;
};

struct EpochLog {
  int epoch = 0;
  std::int64_t step = 0;
  double mean_loss = 0.0;
};

struct TrainOptions {
  std::function<void(const EpochLog&)> on_epoch;
};

// Tokenizes (input, label) pairs and trains from a fresh init(mcfg, tcfg.seed).
// mcfg.vocab_size must equal the tokenizer's vocabulary size.
Checkpoint train(const Dataset& train_data, std::shared_ptr<const TokenizerModel> tokenizer,
                 const ModelConfig& mcfg, const TrainConfig& tcfg, const TrainOptions& options = {});

// Framed source ids for text, clipped to fit max_positions.
TokenSeq encode_source_text(const TokenizerModel& tokenizer, std::string_view text, int max_positions);

struct DecodeResult {
  std::string text;
  bool truncated = false;  // no eos within max_len
  bool lossy = false;      // detokenization replaced bytes or unk
  double log_prob = 0.0;
  TokenSeq tokens;         // generated ids, eos included when present
};

DecodeResult decode_greedy(const Checkpoint& checkpoint, std::string_view src_text, int max_len);
// Decodes many inputs at once; each result equals decode_greedy on its own.
std::vector<DecodeResult> decode_greedy_batch(const Checkpoint& checkpoint,
                                              std::span<const std::string> src_texts, int max_len);
DecodeResult decode_beam(const Checkpoint& checkpoint, std::string_view src_text, int beam, int max_len);

// Default generation limit for a source: proportional to its length.
int default_max_len(const Checkpoint& checkpoint, std::string_view src_text);

}  // namespace spellkd
