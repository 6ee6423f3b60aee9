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

#include <Eigen/Dense>

#include "spellkd/tokenizer.hpp"

namespace spellkd {

using LogProbMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Autoregressive scorer over a set of live rows. step() rebuilds the live
// set: new row r continues old row parents[r] extended by tokens[r], and the
// result holds next-token log-probabilities for each new row. Before the
// first call there are as many rows as independent starting states.
class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual int vocab_size() const = 0;
  virtual LogProbMatrix step(std::span<const int> parents, std::span<const int> tokens) = 0;
};

struct Hypothesis {
  TokenSeq tokens;  // generated tokens, including the final eos when finished
  double log_prob = 0.0;
  bool finished = false;

  // log_prob divided by the number of generated tokens.
  double normalized() const {
    return tokens.empty() ? log_prob : log_prob / static_cast<double>(tokens.size());
  }
};

// Argmax decoding of every starting row at once; ties go to the lowest id.
// Runs at most max_len steps; rows without eos come back unfinished.
std::vector<Hypothesis> greedy_search(StepModel& model, int rows, int max_len,
                                      int bos = kBosId, int eos = kEosId);

// Length-normalized beam search from a single starting row. Candidates are
// ranked by cumulative log-probability; finished hypotheses compete on
// normalized score. beam == 1 follows greedy_search exactly.
Hypothesis beam_search(StepModel& model, int beam, int max_len, int bos = kBosId, int eos = kEosId);

}  // namespace spellkd
