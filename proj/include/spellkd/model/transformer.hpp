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

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "spellkd/error.hpp"
#include "spellkd/model/parameters.hpp"
#include "spellkd/rng.hpp"
#include "spellkd/tokenizer.hpp"

namespace spellkd {

// Source ids (caller appends eos) and a framed target `bos ... eos`.
using SeqPair = std::pair<TokenSeq, TokenSeq>;

inline TokenSeq frame_source(TokenSeq ids) {
  ids.push_back(kEosId);
  return ids;
}

inline TokenSeq frame_target(const TokenSeq& ids) {
  TokenSeq out;
  out.reserve(ids.size() + 2);
  out.push_back(kBosId);
  out.insert(out.end(), ids.begin(), ids.end());
  out.push_back(kEosId);
  return out;
}

using IdMatrix = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Padded batch. The decoder reads tgt_in = target[0..n-2] and predicts
// tgt_out = target[1..n-1]; pad outputs carry no loss.
struct Batch {
  IdMatrix src;
  IdMatrix tgt_in;
  IdMatrix tgt_out;
  std::vector<int> src_len;
  std::vector<int> tgt_len;

  int size() const { return static_cast<int>(src.rows()); }
  int src_width() const { return static_cast<int>(src.cols()); }
  int tgt_width() const { return static_cast<int>(tgt_in.cols()); }

  static Batch make(std::span<const SeqPair> pairs);
};

inline Batch Batch::make(std::span<const SeqPair> pairs) {
  Batch b;
  const auto n = static_cast<Eigen::Index>(pairs.size());
  std::size_t s_max = 1, t_max = 1;
  for (const auto& [src, tgt] : pairs) {
    if (src.empty()) throw Error("empty source sequence");
    if (tgt.size() < 2) throw Error("target must be framed as bos ... eos");
    s_max = std::max(s_max, src.size());
    t_max = std::max(t_max, tgt.size() - 1);
  }
  b.src = IdMatrix::Constant(n, static_cast<Eigen::Index>(s_max), kPadId);
  b.tgt_in = IdMatrix::Constant(n, static_cast<Eigen::Index>(t_max), kPadId);
  b.tgt_out = IdMatrix::Constant(n, static_cast<Eigen::Index>(t_max), kPadId);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& [src, tgt] = pairs[static_cast<std::size_t>(i)];
    for (std::size_t s = 0; s < src.size(); ++s) b.src(i, static_cast<Eigen::Index>(s)) = src[s];
    for (std::size_t t = 0; t + 1 < tgt.size(); ++t) {
      b.tgt_in(i, static_cast<Eigen::Index>(t)) = tgt[t];
      b.tgt_out(i, static_cast<Eigen::Index>(t)) = tgt[t + 1];
    }
    b.src_len.push_back(static_cast<int>(src.size()));
    b.tgt_len.push_back(static_cast<int>(tgt.size() - 1));
  }
  return b;
}

namespace nn {

inline constexpr double kNormEpsilon = 1e-5;

template <typename S>
using ColVector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Sinusoidal position row for `pos`.
template <typename S>
RowVector<S> position_row(int pos, int dim) {
  RowVector<S> row(dim);
  for (int i = 0; i < dim; i += 2) {
    const double angle = pos / std::pow(10000.0, static_cast<double>(i) / dim);
    row(i) = static_cast<S>(std::sin(angle));
    if (i + 1 < dim) row(i + 1) = static_cast<S>(std::cos(angle));
  }
  return row;
}

template <typename S>
struct NormCache {
  Matrix<S> xhat;
  ColVector<S> inv_std;
};

template <typename S>
Matrix<S> layer_norm(const LayerNorm<S>& p, const Matrix<S>& x, NormCache<S>* cache) {
  const auto d = static_cast<S>(x.cols());
  const ColVector<S> mean = x.rowwise().sum() / d;
  Matrix<S> centered = x.colwise() - mean;
  const ColVector<S> var = centered.array().square().rowwise().sum() / d;
  const ColVector<S> inv_std = (var.array() + static_cast<S>(kNormEpsilon)).rsqrt();
  Matrix<S> xhat = centered.array().colwise() * inv_std.array();
  Matrix<S> y = (xhat.array().rowwise() * p.gain.array()).rowwise() + p.bias.array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

template <typename S>
Matrix<S> layer_norm_backward(const LayerNorm<S>& p, const NormCache<S>& c, const Matrix<S>& dy,
                              LayerNorm<S>& g) {
  g.gain += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  g.bias += dy.colwise().sum();
  const auto d = static_cast<S>(dy.cols());
  const Matrix<S> dxhat = dy.array().rowwise() * p.gain.array();
  const ColVector<S> mean_dxhat = dxhat.rowwise().sum() / d;
  const ColVector<S> mean_dxhat_xhat = (dxhat.array() * c.xhat.array()).rowwise().sum() / d;
  Matrix<S> dx = dxhat;
  dx.colwise() -= mean_dxhat;
  dx.array() -= c.xhat.array().colwise() * mean_dxhat_xhat.array();
  dx.array().colwise() *= c.inv_std.array();
  return dx;
}

template <typename S>
Matrix<S> linear(const Linear<S>& p, const Matrix<S>& x) {
  Matrix<S> y = x * p.weight;
  y.rowwise() += p.bias;
  return y;
}

template <typename S>
Matrix<S> linear_backward(const Linear<S>& p, const Matrix<S>& x, const Matrix<S>& dy, Linear<S>& g) {
  g.weight.noalias() += x.transpose() * dy;
  g.bias += dy.colwise().sum();
  return dy * p.weight.transpose();
}

// Which keys each query may see: keys at or beyond key_len[b] are padding;
// a causal mask additionally hides keys after the query position.
struct AttentionMask {
  int batch = 1;
  int q_len = 1;
  int k_len = 1;
  bool causal = false;
  const std::vector<int>* key_len = nullptr;
};

template <typename S>
struct AttentionCache {
  Matrix<S> q_in, kv_in;
  Matrix<S> q, k, v, ctx;
  std::vector<Matrix<S>> probs;  // one (q_len x k_len) block per (batch, head)
};

template <typename S>
void softmax_rows(Matrix<S>& scores) {
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    const S m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  }
}

template <typename S>
Matrix<S> attention(const Attention<S>& p, const Matrix<S>& q_in, const Matrix<S>& kv_in,
                    const AttentionMask& mask, int heads, AttentionCache<S>* cache) {
  const Eigen::Index dim = q_in.cols();
  const Eigen::Index dh = dim / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  Matrix<S> q = linear(p.query, q_in);
  Matrix<S> k = linear(p.key, kv_in);
  Matrix<S> v = linear(p.value, kv_in);
  Matrix<S> ctx(q_in.rows(), dim);
  std::vector<Matrix<S>> probs;
  if (cache) probs.reserve(static_cast<std::size_t>(mask.batch * heads));
  const S neg_inf = -std::numeric_limits<S>::infinity();
  for (int b = 0; b < mask.batch; ++b) {
    const int valid = mask.key_len ? (*mask.key_len)[static_cast<std::size_t>(b)] : mask.k_len;
    for (int h = 0; h < heads; ++h) {
      const auto qb = q.block(b * mask.q_len, h * dh, mask.q_len, dh);
      const auto kb = k.block(b * mask.k_len, h * dh, mask.k_len, dh);
      const auto vb = v.block(b * mask.k_len, h * dh, mask.k_len, dh);
      Matrix<S> scores = (qb * kb.transpose()) * scale;
      for (int i = 0; i < mask.q_len; ++i) {
        const int limit = mask.causal ? std::min(valid, i + 1) : valid;
        for (int j = std::max(limit, 0); j < mask.k_len; ++j) scores(i, j) = neg_inf;
      }
      softmax_rows(scores);
      ctx.block(b * mask.q_len, h * dh, mask.q_len, dh).noalias() = scores * vb;
      if (cache) probs.push_back(std::move(scores));
    }
  }
  Matrix<S> out = linear(p.output, ctx);
  if (cache) {
    cache->q_in = q_in;
    cache->kv_in = kv_in;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->ctx = std::move(ctx);
    cache->probs = std::move(probs);
  }
  return out;
}

// Returns (d q_in, d kv_in).
template <typename S>
std::pair<Matrix<S>, Matrix<S>> attention_backward(const Attention<S>& p, const AttentionCache<S>& c,
                                                   const AttentionMask& mask, int heads,
                                                   const Matrix<S>& dout, Attention<S>& g) {
  const Eigen::Index dim = c.q_in.cols();
  const Eigen::Index dh = dim / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const Matrix<S> dctx = linear_backward(p.output, c.ctx, dout, g.output);
  Matrix<S> dq(c.q.rows(), dim), dk(c.k.rows(), dim), dv(c.v.rows(), dim);
  for (int b = 0; b < mask.batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      const auto& prob = c.probs[static_cast<std::size_t>(b * heads + h)];
      const auto dctx_b = dctx.block(b * mask.q_len, h * dh, mask.q_len, dh);
      const auto qb = c.q.block(b * mask.q_len, h * dh, mask.q_len, dh);
      const auto kb = c.k.block(b * mask.k_len, h * dh, mask.k_len, dh);
      const auto vb = c.v.block(b * mask.k_len, h * dh, mask.k_len, dh);
      const Matrix<S> dprob = dctx_b * vb.transpose();
      dv.block(b * mask.k_len, h * dh, mask.k_len, dh).noalias() = prob.transpose() * dctx_b;
      const ColVector<S> row_dot = (dprob.array() * prob.array()).rowwise().sum();
      Matrix<S> dscores = prob.array() * (dprob.array().colwise() - row_dot.array());
      dscores *= scale;
      dq.block(b * mask.q_len, h * dh, mask.q_len, dh).noalias() = dscores * kb;
      dk.block(b * mask.k_len, h * dh, mask.k_len, dh).noalias() = dscores.transpose() * qb;
    }
  }
  Matrix<S> dq_in = linear_backward(p.query, c.q_in, dq, g.query);
  Matrix<S> dkv_in = linear_backward(p.key, c.kv_in, dk, g.key);
  dkv_in += linear_backward(p.value, c.kv_in, dv, g.value);
  return {std::move(dq_in), std::move(dkv_in)};
}

template <typename S>
struct FeedForwardCache {
  Matrix<S> x, hidden;
};

template <typename S>
Matrix<S> feed_forward(const FeedForward<S>& p, const Matrix<S>& x, FeedForwardCache<S>* cache) {
  Matrix<S> hidden = linear(p.inner, x).cwiseMax(S(0));
  Matrix<S> out = linear(p.outer, hidden);
  if (cache) {
    cache->x = x;
    cache->hidden = std::move(hidden);
  }
  return out;
}

template <typename S>
Matrix<S> feed_forward_backward(const FeedForward<S>& p, const FeedForwardCache<S>& c,
                                const Matrix<S>& dout, FeedForward<S>& g) {
  Matrix<S> dhidden = linear_backward(p.outer, c.hidden, dout, g.outer);
  dhidden = (c.hidden.array() > S(0)).select(dhidden, S(0));
  return linear_backward(p.inner, c.x, dhidden, g.inner);
}

// Inverted dropout; `mask` holds 0 or 1/(1-rate) and stays empty when off.
template <typename S>
void dropout(Matrix<S>& x, double rate, Rng* rng, Matrix<S>& mask) {
  if (rate <= 0.0 || rng == nullptr) {
    mask.resize(0, 0);
    return;
  }
  mask.resize(x.rows(), x.cols());
  const S keep = static_cast<S>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < rate ? S(0) : keep;
  x.array() *= mask.array();
}

template <typename S>
void dropout_backward(Matrix<S>& dx, const Matrix<S>& mask) {
  if (mask.size() > 0) dx.array() *= mask.array();
}

template <typename S>
struct EncoderLayerCache {
  NormCache<S> attn_norm, ffn_norm;
  AttentionCache<S> attn;
  FeedForwardCache<S> ffn;
  Matrix<S> attn_drop, ffn_drop;
};

template <typename S>
struct DecoderLayerCache {
  NormCache<S> self_norm, cross_norm, ffn_norm;
  AttentionCache<S> self_attn, cross_attn;
  FeedForwardCache<S> ffn;
  Matrix<S> self_drop, cross_drop, ffn_drop;
};

}  // namespace nn

// Everything the backward pass needs from one batched forward pass.
template <typename S>
struct ForwardCache {
  nn::AttentionMask enc_mask, dec_self_mask, cross_mask;
  Matrix<S> enc_embed_drop, dec_embed_drop;
  std::vector<nn::EncoderLayerCache<S>> encoder;
  nn::NormCache<S> encoder_norm;
  Matrix<S> memory;  // final encoder output
  std::vector<nn::DecoderLayerCache<S>> decoder;
  nn::NormCache<S> decoder_norm;
  Matrix<S> hidden;  // final decoder output
};

template <typename S>
Matrix<S> embed(const Parameters<S>& p, const IdMatrix& ids, int max_positions) {
  const auto rows = ids.rows(), cols = ids.cols();
  if (cols > max_positions) {
    throw Error("sequence length " + std::to_string(cols) + " exceeds max_positions " +
                std::to_string(max_positions));
  }
  const auto dim = static_cast<int>(p.embedding.cols());
  const S scale = static_cast<S>(std::sqrt(static_cast<double>(dim)));
  Matrix<S> x(rows * cols, dim);
  for (Eigen::Index t = 0; t < cols; ++t) {
    const RowVector<S> pos = nn::position_row<S>(static_cast<int>(t), dim);
    for (Eigen::Index b = 0; b < rows; ++b) {
      const int id = ids(b, t);
      if (id < 0 || id >= p.embedding.rows()) throw Error("token id " + std::to_string(id) + " out of range");
      x.row(b * cols + t) = p.embedding.row(id) * scale + pos;
    }
  }
  return x;
}

template <typename S>
void embed_backward(const IdMatrix& ids, const Matrix<S>& dx, Matrix<S>& dembedding) {
  const S scale = static_cast<S>(std::sqrt(static_cast<double>(dembedding.cols())));
  const auto cols = ids.cols();
  for (Eigen::Index b = 0; b < ids.rows(); ++b) {
    for (Eigen::Index t = 0; t < cols; ++t) dembedding.row(ids(b, t)) += dx.row(b * cols + t) * scale;
  }
}

// Encoder stack; returns the normalized memory (batch*src_width x dim).
template <typename S>
Matrix<S> encode(const Parameters<S>& p, const ModelConfig& cfg, const Batch& batch,
                 ForwardCache<S>* cache, Rng* dropout_rng = nullptr) {
  nn::AttentionMask mask{batch.size(), batch.src_width(), batch.src_width(), false, &batch.src_len};
  Matrix<S> x = embed(p, batch.src, cfg.max_positions);
  Matrix<S> scratch;
  nn::dropout(x, cfg.dropout_rate, dropout_rng, cache ? cache->enc_embed_drop : scratch);
  if (cache) {
    cache->enc_mask = mask;
    cache->encoder.resize(p.encoder.size());
  }
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const auto& layer = p.encoder[l];
    auto* lc = cache ? &cache->encoder[l] : nullptr;
    const Matrix<S> a = nn::layer_norm(layer.attn_norm, x, lc ? &lc->attn_norm : nullptr);
    Matrix<S> att = nn::attention(layer.self_attn, a, a, mask, cfg.heads, lc ? &lc->attn : nullptr);
    nn::dropout(att, cfg.dropout_rate, dropout_rng, lc ? lc->attn_drop : scratch);
    x += att;
    const Matrix<S> b = nn::layer_norm(layer.ffn_norm, x, lc ? &lc->ffn_norm : nullptr);
    Matrix<S> f = nn::feed_forward(layer.ffn, b, lc ? &lc->ffn : nullptr);
    nn::dropout(f, cfg.dropout_rate, dropout_rng, lc ? lc->ffn_drop : scratch);
    x += f;
  }
  Matrix<S> memory = nn::layer_norm(p.encoder_norm, x, cache ? &cache->encoder_norm : nullptr);
  if (cache) cache->memory = memory;
  return memory;
}

// Decoder stack over tgt_in; returns hidden states (batch*tgt_width x dim).
template <typename S>
Matrix<S> decode_hidden(const Parameters<S>& p, const ModelConfig& cfg, const Batch& batch,
                        const Matrix<S>& memory, ForwardCache<S>* cache, Rng* dropout_rng = nullptr) {
  nn::AttentionMask self_mask{batch.size(), batch.tgt_width(), batch.tgt_width(), true, &batch.tgt_len};
  nn::AttentionMask cross_mask{batch.size(), batch.tgt_width(), batch.src_width(), false, &batch.src_len};
  Matrix<S> y = embed(p, batch.tgt_in, cfg.max_positions);
  Matrix<S> scratch;
  nn::dropout(y, cfg.dropout_rate, dropout_rng, cache ? cache->dec_embed_drop : scratch);
  if (cache) {
    cache->dec_self_mask = self_mask;
    cache->cross_mask = cross_mask;
    cache->decoder.resize(p.decoder.size());
  }
  for (std::size_t l = 0; l < p.decoder.size(); ++l) {
    const auto& layer = p.decoder[l];
    auto* lc = cache ? &cache->decoder[l] : nullptr;
    const Matrix<S> a = nn::layer_norm(layer.self_norm, y, lc ? &lc->self_norm : nullptr);
    Matrix<S> att = nn::attention(layer.self_attn, a, a, self_mask, cfg.heads, lc ? &lc->self_attn : nullptr);
    nn::dropout(att, cfg.dropout_rate, dropout_rng, lc ? lc->self_drop : scratch);
    y += att;
    const Matrix<S> c = nn::layer_norm(layer.cross_norm, y, lc ? &lc->cross_norm : nullptr);
    Matrix<S> cross =
        nn::attention(layer.cross_attn, c, memory, cross_mask, cfg.heads, lc ? &lc->cross_attn : nullptr);
    nn::dropout(cross, cfg.dropout_rate, dropout_rng, lc ? lc->cross_drop : scratch);
    y += cross;
    const Matrix<S> e = nn::layer_norm(layer.ffn_norm, y, lc ? &lc->ffn_norm : nullptr);
    Matrix<S> f = nn::feed_forward(layer.ffn, e, lc ? &lc->ffn : nullptr);
    nn::dropout(f, cfg.dropout_rate, dropout_rng, lc ? lc->ffn_drop : scratch);
    y += f;
  }
  Matrix<S> hidden = nn::layer_norm(p.decoder_norm, y, cache ? &cache->decoder_norm : nullptr);
  if (cache) cache->hidden = hidden;
  return hidden;
}

// Logits over the tied embedding: (batch*tgt_width x vocab).
template <typename S>
Matrix<S> output_logits(const Parameters<S>& p, const Matrix<S>& hidden) {
  return hidden * p.embedding.transpose();
}

// Single-sequence forward: src as given (normally ending in eos) and a target
// prefix (normally starting with bos). Row r of the result scores the token
// following tgt_prefix[0..r].
template <typename S>
Matrix<S> forward(const Parameters<S>& p, const ModelConfig& cfg, const TokenSeq& src,
                  const TokenSeq& tgt_prefix) {
  if (src.empty() || tgt_prefix.empty()) throw Error("forward needs non-empty source and prefix");
  const auto too_long = [&](std::size_t n) { return n > static_cast<std::size_t>(cfg.max_positions); };
  if (too_long(src.size()) || too_long(tgt_prefix.size())) {
    throw Error("sequence length exceeds max_positions " + std::to_string(cfg.max_positions));
  }
  TokenSeq framed = tgt_prefix;
  framed.push_back(kPadId);
  const SeqPair pair{src, framed};
  const Batch batch = Batch::make(std::span<const SeqPair>(&pair, 1));
  const Matrix<S> memory = encode<S>(p, cfg, batch, nullptr);
  return output_logits(p, decode_hidden<S>(p, cfg, batch, memory, nullptr));
}

template <typename S>
struct LossAndGrads {
  double loss = 0.0;  // mean token cross-entropy
  std::int64_t tokens = 0;
  Parameters<S> grads;
};

// Per-row smoothed cross-entropy; fills dlogits with d(sum loss)/d logits.
template <typename S>
double cross_entropy_rows(const Matrix<S>& logits, const IdMatrix& targets, double smoothing,
                          Matrix<S>* dlogits, std::int64_t& tokens) {
  const auto vocab = logits.cols();
  const auto width = targets.cols();
  double total = 0.0;
  tokens = 0;
  if (dlogits) dlogits->setZero(logits.rows(), vocab);
  for (Eigen::Index b = 0; b < targets.rows(); ++b) {
    for (Eigen::Index t = 0; t < width; ++t) {
      const int target = targets(b, t);
      if (target == kPadId) continue;
      ++tokens;
      const auto r = b * width + t;
      const auto row = logits.row(r).template cast<double>();
      const double m = row.maxCoeff();
      const double lse = m + std::log((row.array() - m).exp().sum());
      double loss = -(1.0 - smoothing) * (row(target) - lse);
      if (smoothing > 0.0) loss -= smoothing / static_cast<double>(vocab) * (row.array() - lse).sum();
      total += loss;
      if (dlogits) {
        auto drow = dlogits->row(r);
        drow = (row.array() - lse).exp().matrix().template cast<S>();
        if (smoothing > 0.0) drow.array() -= static_cast<S>(smoothing / static_cast<double>(vocab));
        drow(target) -= static_cast<S>(1.0 - smoothing);
      }
    }
  }
  return total;
}

// Backward through the decoder stack. Accumulates parameter gradients and
// d(memory); returns the gradient at the (dropped-out) decoder input.
template <typename S>
Matrix<S> decoder_backward(const Parameters<S>& p, const ModelConfig& cfg, const ForwardCache<S>& c,
                           Matrix<S> dy, Parameters<S>& g, Matrix<S>& dmemory) {
  for (std::size_t li = p.decoder.size(); li-- > 0;) {
    const auto& layer = p.decoder[li];
    const auto& lc = c.decoder[li];
    auto& gl = g.decoder[li];
    Matrix<S> df = dy;
    nn::dropout_backward(df, lc.ffn_drop);
    const Matrix<S> de = nn::feed_forward_backward(layer.ffn, lc.ffn, df, gl.ffn);
    dy += nn::layer_norm_backward(layer.ffn_norm, lc.ffn_norm, de, gl.ffn_norm);

    Matrix<S> dcross = dy;
    nn::dropout_backward(dcross, lc.cross_drop);
    auto [dc, dmem] = nn::attention_backward(layer.cross_attn, lc.cross_attn, c.cross_mask, cfg.heads,
                                             dcross, gl.cross_attn);
    dmemory += dmem;
    dy += nn::layer_norm_backward(layer.cross_norm, lc.cross_norm, dc, gl.cross_norm);

    Matrix<S> dself = dy;
    nn::dropout_backward(dself, lc.self_drop);
    auto [dq, dkv] =
        nn::attention_backward(layer.self_attn, lc.self_attn, c.dec_self_mask, cfg.heads, dself, gl.self_attn);
    dq += dkv;
    dy += nn::layer_norm_backward(layer.self_norm, lc.self_norm, dq, gl.self_norm);
  }
  nn::dropout_backward(dy, c.dec_embed_drop);
  return dy;
}

// Backward through the encoder stack from d(memory); returns the gradient at
// the encoder input.
template <typename S>
Matrix<S> encoder_backward(const Parameters<S>& p, const ModelConfig& cfg, const ForwardCache<S>& c,
                           const Matrix<S>& dmemory, Parameters<S>& g) {
  Matrix<S> dx = nn::layer_norm_backward(p.encoder_norm, c.encoder_norm, dmemory, g.encoder_norm);
  for (std::size_t li = p.encoder.size(); li-- > 0;) {
    const auto& layer = p.encoder[li];
    const auto& lc = c.encoder[li];
    auto& gl = g.encoder[li];
    Matrix<S> df = dx;
    nn::dropout_backward(df, lc.ffn_drop);
    const Matrix<S> db = nn::feed_forward_backward(layer.ffn, lc.ffn, df, gl.ffn);
    dx += nn::layer_norm_backward(layer.ffn_norm, lc.ffn_norm, db, gl.ffn_norm);

    Matrix<S> datt = dx;
    nn::dropout_backward(datt, lc.attn_drop);
    auto [dq, dkv] = nn::attention_backward(layer.self_attn, lc.attn, c.enc_mask, cfg.heads, datt, gl.self_attn);
    dq += dkv;
    dx += nn::layer_norm_backward(layer.attn_norm, lc.attn_norm, dq, gl.attn_norm);
  }
  nn::dropout_backward(dx, c.enc_embed_drop);
  return dx;
}

// Teacher-forced, label-smoothed cross-entropy averaged over non-pad target
// tokens, with exact gradients of that mean.
template <typename S>
LossAndGrads<S> loss_and_grads(const Parameters<S>& p, const ModelConfig& cfg,
                               std::span<const SeqPair> examples, double label_smoothing = 0.0,
                               Rng* dropout_rng = nullptr) {
  if (examples.empty()) throw Error("loss_and_grads needs a non-empty batch");
  const Batch batch = Batch::make(examples);
  if ((batch.tgt_out != kPadId).count() == 0) throw Error("batch has no non-pad target tokens");

  ForwardCache<S> cache;
  const Matrix<S> memory = encode(p, cfg, batch, &cache, dropout_rng);
  const Matrix<S> hidden = decode_hidden(p, cfg, batch, memory, &cache, dropout_rng);
  const Matrix<S> logits = output_logits(p, hidden);

  LossAndGrads<S> result;
  Matrix<S> dlogits;
  const double total = cross_entropy_rows(logits, batch.tgt_out, label_smoothing, &dlogits, result.tokens);
  result.loss = total / static_cast<double>(result.tokens);
  dlogits /= static_cast<S>(result.tokens);

  auto& g = result.grads;
  g = zeros_like(p);
  g.embedding.noalias() += dlogits.transpose() * hidden;
  Matrix<S> dhidden = dlogits * p.embedding;
  Matrix<S> dy = nn::layer_norm_backward(p.decoder_norm, cache.decoder_norm, dhidden, g.decoder_norm);
  Matrix<S> dmemory = Matrix<S>::Zero(memory.rows(), memory.cols());
  const Matrix<S> dtgt = decoder_backward(p, cfg, cache, std::move(dy), g, dmemory);
  embed_backward(batch.tgt_in, dtgt, g.embedding);
  const Matrix<S> dsrc = encoder_backward(p, cfg, cache, dmemory, g);
  embed_backward(batch.src, dsrc, g.embedding);
  return result;
}

// Loss only (no gradients), used by finite-difference checks and evaluation.
template <typename S>
double loss(const Parameters<S>& p, const ModelConfig& cfg, std::span<const SeqPair> examples,
            double label_smoothing = 0.0) {
  if (examples.empty()) throw Error("loss needs a non-empty batch");
  const Batch batch = Batch::make(examples);
  const Matrix<S> memory = encode<S>(p, cfg, batch, nullptr);
  const Matrix<S> logits = output_logits(p, decode_hidden<S>(p, cfg, batch, memory, nullptr));
  std::int64_t tokens = 0;
  const double total = cross_entropy_rows<S>(logits, batch.tgt_out, label_smoothing, nullptr, tokens);
  if (tokens == 0) throw Error("batch has no non-pad target tokens");
  return total / static_cast<double>(tokens);
}

}  // namespace spellkd
