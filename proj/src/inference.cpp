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

#include "spellkd/model/inference.hpp"

#include <cmath>
#include <limits>

#include "spellkd/error.hpp"
#include "spellkd/model/transformer.hpp"

namespace spellkd {
namespace {

using Row = RowVector<float>;

Row linear_row(const Linear<float>& p, const Row& x) {
  Row y = x * p.weight;
  y += p.bias;
  return y;
}

Row norm_row(const LayerNorm<float>& p, const Row& x) {
  const float mean = x.mean();
  const Row centered = x.array() - mean;
  const float var = centered.squaredNorm() / static_cast<float>(x.size());
  const float inv_std = 1.0f / std::sqrt(var + static_cast<float>(nn::kNormEpsilon));
  return (centered * inv_std).cwiseProduct(p.gain) + p.bias;
}

// Multi-head attention of one query row over cached keys/values.
Row attend_row(const Row& q, const Matrix<float>& keys, const Matrix<float>& values, Eigen::Index rows,
               int heads) {
  const Eigen::Index dim = q.size();
  const Eigen::Index dh = dim / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  Row ctx(dim);
  for (int h = 0; h < heads; ++h) {
    const auto k = keys.block(0, h * dh, rows, dh);
    const auto v = values.block(0, h * dh, rows, dh);
    Row scores = (q.segment(h * dh, dh) * k.transpose()) * scale;
    scores = (scores.array() - scores.maxCoeff()).exp();
    scores /= scores.sum();
    ctx.segment(h * dh, dh) = scores * v;
  }
  return ctx;
}

Row ffn_row(const FeedForward<float>& p, const Row& x) {
  const Row hidden = linear_row(p.inner, x).cwiseMax(0.0f);
  return linear_row(p.outer, hidden);
}

}  // namespace

Matrix<float> encode_source(const Parameters<float>& params, const ModelConfig& config,
                            const TokenSeq& source) {
  const SeqPair pair{source, TokenSeq{kBosId, kEosId}};
  const Batch batch = Batch::make(std::span<const SeqPair>(&pair, 1));
  return encode<float>(params, config, batch, nullptr);
}

IncrementalDecoder::IncrementalDecoder(const Parameters<float>& params, const ModelConfig& config,
                                       std::span<const TokenSeq> sources)
    : params_(params), config_(config), embedding_t_(params.embedding.transpose()) {
  const auto layers = params.decoder.size();
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (sources[s].size() > static_cast<std::size_t>(config.max_positions)) {
      throw Error("source length exceeds max_positions");
    }
    const Matrix<float> memory = encode_source(params, config, sources[s]);
    SourceState state;
    for (std::size_t l = 0; l < layers; ++l) {
      const auto& cross = params.decoder[l].cross_attn;
      state.cross_k.push_back(nn::linear(cross.key, memory));
      state.cross_v.push_back(nn::linear(cross.value, memory));
    }
    sources_.push_back(std::move(state));
    RowState row;
    row.source = static_cast<int>(s);
    rows_.push_back(std::move(row));
  }
}

LogProbMatrix IncrementalDecoder::step(std::span<const int> parents, std::span<const int> tokens) {
  if (parents.size() != tokens.size()) throw Error("parents and tokens differ in length");
  const int dim = config_.model_dim;
  const auto layers = params_.decoder.size();
  const float scale = std::sqrt(static_cast<float>(dim));

  std::vector<RowState> next;
  next.reserve(parents.size());
  logits_.resize(static_cast<Eigen::Index>(parents.size()), config_.vocab_size);
  LogProbMatrix logp(static_cast<Eigen::Index>(parents.size()), config_.vocab_size);

  for (std::size_t r = 0; r < parents.size(); ++r) {
    RowState row = rows_.at(static_cast<std::size_t>(parents[r]));
    const int pos = row.length;
    if (pos >= config_.max_positions) throw Error("decoding exceeded max_positions");
    const int token = tokens[r];
    if (token < 0 || token >= config_.vocab_size) throw Error("token id out of range");
    if (row.self_k.empty()) {
      row.self_k.assign(layers, Matrix<float>(0, dim));
      row.self_v.assign(layers, Matrix<float>(0, dim));
    }
    Row x = params_.embedding.row(token) * scale + nn::position_row<float>(pos, dim);
    const auto& source = sources_[static_cast<std::size_t>(row.source)];
    for (std::size_t l = 0; l < layers; ++l) {
      const auto& layer = params_.decoder[l];
      const Row a = norm_row(layer.self_norm, x);
      auto& keys = row.self_k[l];
      auto& values = row.self_v[l];
      keys.conservativeResize(pos + 1, Eigen::NoChange);
      values.conservativeResize(pos + 1, Eigen::NoChange);
      keys.row(pos) = linear_row(layer.self_attn.key, a);
      values.row(pos) = linear_row(layer.self_attn.value, a);
      const Row q = linear_row(layer.self_attn.query, a);
      x += linear_row(layer.self_attn.output, attend_row(q, keys, values, pos + 1, config_.heads));

      const Row c = norm_row(layer.cross_norm, x);
      const Row cq = linear_row(layer.cross_attn.query, c);
      const auto& ck = source.cross_k[l];
      x += linear_row(layer.cross_attn.output,
                      attend_row(cq, ck, source.cross_v[l], ck.rows(), config_.heads));

      const Row e = norm_row(layer.ffn_norm, x);
      x += ffn_row(layer.ffn, e);
    }
    const Row h = norm_row(params_.decoder_norm, x);
    const Row logits = h * embedding_t_;
    logits_.row(static_cast<Eigen::Index>(r)) = logits;
    const auto ld = logits.cast<double>();
    const double m = ld.maxCoeff();
    const double lse = m + std::log((ld.array() - m).exp().sum());
    logp.row(static_cast<Eigen::Index>(r)) = ld.array() - lse;
    row.length = pos + 1;
    next.push_back(std::move(row));
  }
  rows_ = std::move(next);
  return logp;
}

}  // namespace spellkd
