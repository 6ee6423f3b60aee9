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

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spellkd/model/config.hpp"
#include "spellkd/rng.hpp"

namespace spellkd {

// Activations are row-major: one row per token, one column per feature.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// y = x * weight + bias, weight is (in x out).
template <typename Scalar>
struct Linear {
  Matrix<Scalar> weight;
  RowVector<Scalar> bias;
};

template <typename Scalar>
struct LayerNorm {
  RowVector<Scalar> gain;
  RowVector<Scalar> bias;
};

template <typename Scalar>
struct Attention {
  Linear<Scalar> query, key, value, output;
};

template <typename Scalar>
struct FeedForward {
  Linear<Scalar> inner, outer;
};

template <typename Scalar>
struct EncoderLayer {
  LayerNorm<Scalar> attn_norm;
  Attention<Scalar> self_attn;
  LayerNorm<Scalar> ffn_norm;
  FeedForward<Scalar> ffn;
};

template <typename Scalar>
struct DecoderLayer {
  LayerNorm<Scalar> self_norm;
  Attention<Scalar> self_attn;
  LayerNorm<Scalar> cross_norm;
  Attention<Scalar> cross_attn;
  LayerNorm<Scalar> ffn_norm;
  FeedForward<Scalar> ffn;
};

// Pre-norm encoder-decoder transformer with a tied embedding / output matrix.
template <typename Scalar>
struct Parameters {
  Matrix<Scalar> embedding;  // vocab x dim
  std::vector<EncoderLayer<Scalar>> encoder;
  LayerNorm<Scalar> encoder_norm;
  std::vector<DecoderLayer<Scalar>> decoder;
  LayerNorm<Scalar> decoder_norm;
};

namespace detail {

template <typename F, typename... L>
void visit_linear(const std::string& name, F& f, L&... l) {
  f(name + ".weight", l.weight...);
  f(name + ".bias", l.bias...);
}

template <typename F, typename... N>
void visit_norm(const std::string& name, F& f, N&... n) {
  f(name + ".gain", n.gain...);
  f(name + ".bias", n.bias...);
}

template <typename F, typename... A>
void visit_attention(const std::string& name, F& f, A&... a) {
  visit_linear(name + ".query", f, a.query...);
  visit_linear(name + ".key", f, a.key...);
  visit_linear(name + ".value", f, a.value...);
  visit_linear(name + ".output", f, a.output...);
}

template <typename F, typename... M>
void visit_ffn(const std::string& name, F& f, M&... m) {
  visit_linear(name + ".inner", f, m.inner...);
  visit_linear(name + ".outer", f, m.outer...);
}

template <typename First, typename... Rest>
First& first_of(First& first, Rest&...) {
  return first;
}

}  // namespace detail

// Calls f(name, tensor_from_each...) for every tensor in declaration order.
// Passing several Parameters of the same shape visits them in lockstep.
template <typename F, typename... P>
void visit_tensors(F&& f, P&... p) {
  f(std::string("embedding"), p.embedding...);
  const auto& lead = detail::first_of(p...);
  for (std::size_t l = 0; l < lead.encoder.size(); ++l) {
    const auto name = "encoder." + std::to_string(l);
    detail::visit_norm(name + ".attn_norm", f, p.encoder[l].attn_norm...);
    detail::visit_attention(name + ".self_attn", f, p.encoder[l].self_attn...);
    detail::visit_norm(name + ".ffn_norm", f, p.encoder[l].ffn_norm...);
    detail::visit_ffn(name + ".ffn", f, p.encoder[l].ffn...);
  }
  detail::visit_norm("encoder_norm", f, p.encoder_norm...);
  for (std::size_t l = 0; l < lead.decoder.size(); ++l) {
    const auto name = "decoder." + std::to_string(l);
    detail::visit_norm(name + ".self_norm", f, p.decoder[l].self_norm...);
    detail::visit_attention(name + ".self_attn", f, p.decoder[l].self_attn...);
    detail::visit_norm(name + ".cross_norm", f, p.decoder[l].cross_norm...);
    detail::visit_attention(name + ".cross_attn", f, p.decoder[l].cross_attn...);
    detail::visit_norm(name + ".ffn_norm", f, p.decoder[l].ffn_norm...);
    detail::visit_ffn(name + ".ffn", f, p.decoder[l].ffn...);
  }
  detail::visit_norm("decoder_norm", f, p.decoder_norm...);
}

// Zero-filled parameters with the shapes implied by `config`.
template <typename Scalar>
Parameters<Scalar> zeros(const ModelConfig& config) {
  const int d = config.model_dim, f = config.ffn_dim;
  auto linear = [](int in, int out) {
    return Linear<Scalar>{Matrix<Scalar>::Zero(in, out), RowVector<Scalar>::Zero(out)};
  };
  auto norm = [d] { return LayerNorm<Scalar>{RowVector<Scalar>::Zero(d), RowVector<Scalar>::Zero(d)}; };
  auto attention = [&] { return Attention<Scalar>{linear(d, d), linear(d, d), linear(d, d), linear(d, d)}; };
  auto ffn = [&] { return FeedForward<Scalar>{linear(d, f), linear(f, d)}; };

  Parameters<Scalar> p;
  p.embedding = Matrix<Scalar>::Zero(config.vocab_size, d);
  for (int l = 0; l < config.encoder_layers; ++l) {
    p.encoder.push_back({norm(), attention(), norm(), ffn()});
  }
  p.encoder_norm = norm();
  for (int l = 0; l < config.decoder_layers; ++l) {
    p.decoder.push_back({norm(), attention(), norm(), attention(), norm(), ffn()});
  }
  p.decoder_norm = norm();
  return p;
}

template <typename Scalar>
Parameters<Scalar> zeros_like(const Parameters<Scalar>& like) {
  Parameters<Scalar> out = like;
  visit_tensors([](const std::string&, auto& t) { t.setZero(); }, out);
  return out;
}

// Glorot-uniform weights (the embedding uses vocab and dim as fan-in and
// fan-out), zero biases, unit layer-norm gains. Deterministic per seed.
template <typename Scalar>
Parameters<Scalar> init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  auto p = zeros<Scalar>(config);
  Rng rng(seed);
  visit_tensors(
      [&](const std::string& name, auto& t) {
        if (name.ends_with(".gain")) {
          t.setOnes();
        } else if (name == "embedding" || name.ends_with(".weight")) {
          const double bound = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
          for (Eigen::Index i = 0; i < t.size(); ++i) {
            t.data()[i] = static_cast<Scalar>((2.0 * rng.uniform() - 1.0) * bound);
          }
        }
      },
      p);
  return p;
}

template <typename To, typename From>
Parameters<To> cast(const Parameters<From>& from) {
  Parameters<To> to;
  to.embedding = from.embedding.template cast<To>();
  to.encoder.resize(from.encoder.size());
  to.decoder.resize(from.decoder.size());
  visit_tensors([](const std::string&, auto& dst, const auto& src) { dst = src.template cast<To>(); },
                to, from);
  return to;
}

template <typename Scalar>
std::int64_t count(const Parameters<Scalar>& p) {
  std::int64_t total = 0;
  visit_tensors([&](const std::string&, const auto& t) { total += t.size(); }, p);
  return total;
}

template <typename Scalar>
bool all_finite(const Parameters<Scalar>& p) {
  bool finite = true;
  visit_tensors([&](const std::string&, const auto& t) { finite = finite && t.allFinite(); }, p);
  return finite;
}

template <typename Scalar>
bool operator==(const Parameters<Scalar>& a, const Parameters<Scalar>& b) {
  if (a.encoder.size() != b.encoder.size() || a.decoder.size() != b.decoder.size()) return false;
  bool same = true;
  visit_tensors(
      [&](const std::string&, const auto& x, const auto& y) {
        same = same && x.rows() == y.rows() && x.cols() == y.cols() && x == y;
      },
      a, b);
  return same;
}

}  // namespace spellkd
