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

#include <span>
#include <vector>

#include "spellkd/model/parameters.hpp"
#include "spellkd/model/search.hpp"
#include "spellkd/tokenizer.hpp"

namespace spellkd {

// Key/value cached decoder over float parameters. Each source is encoded on
// its own and every per-row quantity is computed one row at a time, so a
// row's log-probabilities do not depend on which other rows share the batch.
class IncrementalDecoder : public StepModel {
 public:
  // One starting row per source; sources are framed (ending in eos).
  IncrementalDecoder(const Parameters<float>& params, const ModelConfig& config,
                     std::span<const TokenSeq> sources);

  int vocab_size() const override { return config_.vocab_size; }
  LogProbMatrix step(std::span<const int> parents, std::span<const int> tokens) override;

  // Raw logits of the most recent step (rows x vocab).
  const Matrix<float>& last_logits() const { return logits_; }

 private:
  struct SourceState {
    std::vector<Matrix<float>> cross_k, cross_v;  // per decoder layer
  };
  struct RowState {
    int source = 0;
    int length = 0;
    std::vector<Matrix<float>> self_k, self_v;  // per layer, length x dim
  };

  const Parameters<float>& params_;
  ModelConfig config_;
  Matrix<float> embedding_t_;
  std::vector<SourceState> sources_;
  std::vector<RowState> rows_;
  Matrix<float> logits_;
};

// Encoder output for one framed source (length x dim).
Matrix<float> encode_source(const Parameters<float>& params, const ModelConfig& config,
                            const TokenSeq& source);

}  // namespace spellkd
