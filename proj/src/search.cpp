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

#include "spellkd/model/search.hpp"

#include <algorithm>
#include <numeric>

#include "spellkd/error.hpp"

namespace spellkd {

std::vector<Hypothesis> greedy_search(StepModel& model, int rows, int max_len, int bos, int eos) {
  std::vector<Hypothesis> out(static_cast<std::size_t>(rows));
  std::vector<int> live(static_cast<std::size_t>(rows));  // hypothesis index per live row
  std::iota(live.begin(), live.end(), 0);
  std::vector<int> parents = live;
  std::vector<int> tokens(live.size(), bos);
  for (int step = 0; step < max_len && !live.empty(); ++step) {
    const LogProbMatrix logp = model.step(parents, tokens);
    std::vector<int> next_live, next_parents, next_tokens;
    for (std::size_t r = 0; r < live.size(); ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index v = 1; v < logp.cols(); ++v) {
        if (logp(static_cast<Eigen::Index>(r), v) > logp(static_cast<Eigen::Index>(r), best)) best = v;
      }
      auto& hyp = out[static_cast<std::size_t>(live[r])];
      hyp.tokens.push_back(static_cast<int>(best));
      hyp.log_prob += logp(static_cast<Eigen::Index>(r), best);
      if (best == eos) {
        hyp.finished = true;
      } else {
        next_live.push_back(live[r]);
        next_parents.push_back(static_cast<int>(r));
        next_tokens.push_back(static_cast<int>(best));
      }
    }
    live = std::move(next_live);
    parents = std::move(next_parents);
    tokens = std::move(next_tokens);
  }
  return out;
}

Hypothesis beam_search(StepModel& model, int beam, int max_len, int bos, int eos) {
  if (beam < 1) throw Error("beam width must be at least 1");
  struct Candidate {
    double score;
    double step_logp;
    int row;
    int token;
  };
  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> finished;
  std::vector<int> parents{0};
  std::vector<int> tokens{bos};
  for (int step = 0; step < max_len && !live.empty(); ++step) {
    const LogProbMatrix logp = model.step(parents, tokens);
    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * static_cast<std::size_t>(logp.cols()));
    for (std::size_t r = 0; r < live.size(); ++r) {
      for (Eigen::Index v = 0; v < logp.cols(); ++v) {
        const double lp = logp(static_cast<Eigen::Index>(r), v);
        candidates.push_back({live[r].log_prob + lp, lp, static_cast<int>(r), static_cast<int>(v)});
      }
    }
    const auto keep = std::min(candidates.size(), static_cast<std::size_t>(2 * beam));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.step_logp != b.step_logp) return a.step_logp > b.step_logp;
                        if (a.row != b.row) return a.row < b.row;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    std::vector<int> next_parents, next_tokens;
    for (std::size_t c = 0; c < keep && next.size() < static_cast<std::size_t>(beam); ++c) {
      const auto& cand = candidates[c];
      Hypothesis hyp = live[static_cast<std::size_t>(cand.row)];
      hyp.tokens.push_back(cand.token);
      hyp.log_prob = cand.score;
      if (cand.token == eos) {
        hyp.finished = true;
        finished.push_back(std::move(hyp));
      } else {
        next.push_back(std::move(hyp));
        next_parents.push_back(cand.row);
        next_tokens.push_back(cand.token);
      }
    }
    live = std::move(next);
    parents = std::move(next_parents);
    tokens = std::move(next_tokens);
    if (finished.size() >= static_cast<std::size_t>(beam)) break;
  }
  const auto& pool = finished.empty() ? live : finished;
  if (pool.empty()) return Hypothesis{};
  const auto best = std::max_element(pool.begin(), pool.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return a.normalized() < b.normalized();
  });
  return *best;
}

}  // namespace spellkd
