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

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <memory>

#include "spellkd/error.hpp"
#include "spellkd/model/model.hpp"
#include "spellkd/model/transformer.hpp"
#include "support.hpp"

using namespace spellkd;

namespace {

ModelConfig tiny_config(int vocab = 11) {
  ModelConfig c;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.model_dim = 8;
  c.heads = 2;
  c.ffn_dim = 16;
  c.vocab_size = vocab;
  c.max_positions = 32;
  return c;
}

// Moves every tensor away from its init pattern so biases and gains matter.
template <typename S>
void jitter(Parameters<S>& p, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  visit_tensors(
      [&](const std::string& name, auto& t) {
        for (Eigen::Index i = 0; i < t.size(); ++i) {
          const double noise = (2.0 * rng.uniform() - 1.0) * scale;
          t.data()[i] = static_cast<S>(name.ends_with(".gain") ? 1.0 + noise : t.data()[i] + noise);
        }
      },
      p);
}

// Straight-line reference implementation with plain nested vectors.
namespace ref {

using Mat = std::vector<std::vector<double>>;

Mat zeros(std::size_t r, std::size_t c) { return Mat(r, std::vector<double>(c, 0.0)); }

template <typename T>
double at(const T& m, Eigen::Index r, Eigen::Index c) { return static_cast<double>(m(r, c)); }

Mat affine(const Mat& x, const Linear<double>& l) {
  const auto in = static_cast<std::size_t>(l.weight.rows()), out = static_cast<std::size_t>(l.weight.cols());
  Mat y = zeros(x.size(), out);
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = l.bias(static_cast<Eigen::Index>(o));
      for (std::size_t i = 0; i < in; ++i) s += x[r][i] * at(l.weight, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o));
      y[r][o] = s;
    }
  }
  return y;
}

Mat norm(const Mat& x, const LayerNorm<double>& n) {
  Mat y = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    double mean = 0, var = 0;
    for (double v : x[r]) mean += v;
    mean /= static_cast<double>(x[r].size());
    for (double v : x[r]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x[r].size());
    for (std::size_t c = 0; c < x[r].size(); ++c) {
      y[r][c] = (x[r][c] - mean) / std::sqrt(var + 1e-5) * n.gain(static_cast<Eigen::Index>(c)) +
                n.bias(static_cast<Eigen::Index>(c));
    }
  }
  return y;
}

Mat attend(const Mat& xq, const Mat& xkv, const Attention<double>& a, int heads, bool causal) {
  const Mat q = affine(xq, a.query), k = affine(xkv, a.key), v = affine(xkv, a.value);
  const std::size_t dim = q[0].size(), dh = dim / static_cast<std::size_t>(heads);
  Mat ctx = zeros(q.size(), dim);
  for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      const std::size_t visible = causal ? i + 1 : k.size();
      std::vector<double> w(visible);
      double mx = -1e300;
      for (std::size_t j = 0; j < visible; ++j) {
        double s = 0;
        for (std::size_t e = 0; e < dh; ++e) s += q[i][h * dh + e] * k[j][h * dh + e];
        w[j] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, w[j]);
      }
      double z = 0;
      for (auto& x : w) z += (x = std::exp(x - mx));
      for (std::size_t j = 0; j < visible; ++j) {
        for (std::size_t e = 0; e < dh; ++e) ctx[i][h * dh + e] += w[j] / z * v[j][h * dh + e];
      }
    }
  }
  return affine(ctx, a.output);
}

Mat ffn(const Mat& x, const FeedForward<double>& f) {
  Mat h = affine(x, f.inner);
  for (auto& row : h) for (auto& v : row) v = std::max(v, 0.0);
  return affine(h, f.outer);
}

void add(Mat& x, const Mat& y) {
  for (std::size_t r = 0; r < x.size(); ++r) for (std::size_t c = 0; c < x[r].size(); ++c) x[r][c] += y[r][c];
}

Mat embed(const Parameters<double>& p, const TokenSeq& ids) {
  const auto dim = static_cast<std::size_t>(p.embedding.cols());
  Mat x = zeros(ids.size(), dim);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    for (std::size_t c = 0; c < dim; ++c) {
      const double angle = static_cast<double>(t) / std::pow(10000.0, static_cast<double>(c - c % 2) / static_cast<double>(dim));
      const double pos = c % 2 == 0 ? std::sin(angle) : std::cos(angle);
      x[t][c] = at(p.embedding, ids[t], static_cast<Eigen::Index>(c)) * std::sqrt(static_cast<double>(dim)) + pos;
    }
  }
  return x;
}

Mat forward(const Parameters<double>& p, int heads, const TokenSeq& src, const TokenSeq& tgt) {
  Mat x = embed(p, src);
  for (const auto& l : p.encoder) {
    const Mat a = norm(x, l.attn_norm);
    add(x, attend(a, a, l.self_attn, heads, false));
    add(x, ffn(norm(x, l.ffn_norm), l.ffn));
  }
  const Mat memory = norm(x, p.encoder_norm);
  Mat y = embed(p, tgt);
  for (const auto& l : p.decoder) {
    const Mat a = norm(y, l.self_norm);
    add(y, attend(a, a, l.self_attn, heads, true));
    add(y, attend(norm(y, l.cross_norm), memory, l.cross_attn, heads, false));
    add(y, ffn(norm(y, l.ffn_norm), l.ffn));
  }
  const Mat h = norm(y, p.decoder_norm);
  Mat logits = zeros(h.size(), static_cast<std::size_t>(p.embedding.rows()));
  for (std::size_t r = 0; r < h.size(); ++r) {
    for (std::size_t v = 0; v < logits[r].size(); ++v) {
      for (std::size_t c = 0; c < h[r].size(); ++c) logits[r][v] += h[r][c] * at(p.embedding, static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(c));
    }
  }
  return logits;
}

}  // namespace ref

std::shared_ptr<const TokenizerModel> copy_tokenizer(const std::vector<std::string>& corpus, std::size_t vocab) {
  return std::make_shared<const TokenizerModel>(train_subword(corpus, Scheme::bbpe, vocab));
}

std::vector<std::string> short_strings(std::size_t n, std::uint64_t seed, std::string_view letters = "abcdefgh") {
  Rng rng(seed);
  std::vector<std::string> out;
  while (out.size() < n) {
    std::string s;
    const auto words = 1 + rng.below(2);
    for (std::size_t w = 0; w < words; ++w) {
      if (w) s += ' ';
      const auto len = 2 + rng.below(3);
      for (std::size_t i = 0; i < len; ++i) s += letters[rng.below(letters.size())];
    }
    out.push_back(s);
  }
  return out;
}

Dataset copy_dataset(const std::vector<std::string>& strings) {
  Dataset d;
  for (const auto& s : strings) d.add({s, s, "xa"});
  return d;
}

std::vector<SeqPair> copy_pairs(const TokenizerModel& tok, const std::vector<std::string>& strings) {
  std::vector<SeqPair> out;
  for (const auto& s : strings) out.emplace_back(frame_source(tok.encode(s)), frame_target(tok.encode(s)));
  return out;
}

// Small model trained briefly, shared by the decoding tests.
const Checkpoint& small_checkpoint() {
  static const Checkpoint ckpt = [] {
    const auto strings = short_strings(400, 5);
    auto tok = copy_tokenizer(strings, 300);
    ModelConfig mcfg = tiny_config(static_cast<int>(tok->vocab_size()));
    mcfg.model_dim = 16;
    mcfg.ffn_dim = 32;
    TrainConfig tcfg;
    tcfg.learning_rate = 3e-3;
    tcfg.warmup_steps = 20;
    tcfg.epochs = 2;
    tcfg.seed = 9;
    return train(copy_dataset(strings), tok, mcfg, tcfg);
  }();
  return ckpt;
}

}  // namespace

TEST_CASE("init is deterministic with unit gains and zero biases") {
  const auto cfg = tiny_config();
  const auto a = init<float>(cfg, 0);
  CHECK(a == init<float>(cfg, 0));
  std::int64_t differ = 0, total = 0;
  const auto b = init<float>(cfg, 1);
  visit_tensors(
      [&](const std::string& name, const auto& x, const auto& y) {
        if (name.ends_with(".gain")) {
          CHECK((x.array() == 1.0f).all());
        } else if (name.ends_with(".bias")) {
          CHECK((x.array() == 0.0f).all());
        } else {
          const double bound = std::sqrt(6.0 / static_cast<double>(x.rows() + x.cols()));
          CHECK(x.cwiseAbs().maxCoeff() <= bound);
          differ += (x.array() != y.array()).count();
          total += x.size();
        }
      },
      a, b);
  CHECK(static_cast<double>(differ) >= 0.99 * static_cast<double>(total));
}

TEST_CASE("parameter count closed form") {
  for (const auto& cfg : {teacher_desk_preset(4096), student_desk_preset(4096), tiny_config()}) {
    CHECK(parameter_count(cfg) == count(zeros<float>(cfg)));
  }
  // Student: embedding 4096*96, encoder layers 74784, decoder layers 112224,
  // two final norms of 192.
  CHECK(parameter_count(student_desk_preset(4096)) == 393216 + 2 * 74784 + 192 + 2 * 112224 + 192);
  CHECK(parameter_count(teacher_desk_preset(4096)) > 2 * parameter_count(student_desk_preset(4096)));
}

TEST_CASE("forward matches a straight-line reference") {
  const auto cfg = tiny_config();
  auto p = init<double>(cfg, 0);
  jitter(p, 17);
  const TokenSeq src = {7, 3, 9, 5, 10, kEosId};
  const TokenSeq tgt = {kBosId, 6, 8, 4};
  const auto logits = forward<double>(p, cfg, src, tgt);
  const auto expected = ref::forward(p, cfg.heads, src, tgt);
  REQUIRE(logits.rows() == 4);
  REQUIRE(logits.cols() == 11);
  double worst = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index v = 0; v < logits.cols(); ++v) {
      worst = std::max(worst, std::abs(logits(r, v) - expected[static_cast<std::size_t>(r)][static_cast<std::size_t>(v)]));
    }
  }
  CHECK(worst < 1e-6);

  // Float instantiation agrees loosely.
  const auto pf = cast<float>(p);
  CHECK((forward<float>(pf, cfg, src, tgt).cast<double>() - logits).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("forward is causal and normalizable") {
  const auto cfg = tiny_config();
  auto p = init<double>(cfg, 3);
  jitter(p, 4);
  Rng rng(5);
  for (int round = 0; round < 50; ++round) {
    TokenSeq src, tgt{kBosId};
    const auto slen = 1 + rng.below(8), tlen = 2 + rng.below(8);
    for (std::size_t i = 0; i < slen; ++i) src.push_back(static_cast<int>(kNumSpecials + rng.below(7)));
    src.push_back(kEosId);
    for (std::size_t i = 1; i < tlen; ++i) tgt.push_back(static_cast<int>(kNumSpecials + rng.below(7)));
    const auto base = forward<double>(p, cfg, src, tgt);
    CHECK(base.allFinite());

    const auto j = 1 + rng.below(tlen - 1);
    auto perturbed = tgt;
    perturbed[j] = kNumSpecials + (perturbed[j] - kNumSpecials + 1 + static_cast<int>(rng.below(6))) % 7;
    const auto other = forward<double>(p, cfg, src, perturbed);
    for (std::size_t r = 0; r < j; ++r) {
      CHECK((base.row(static_cast<Eigen::Index>(r)) - other.row(static_cast<Eigen::Index>(r))).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK((base.row(static_cast<Eigen::Index>(j)) - other.row(static_cast<Eigen::Index>(j))).cwiseAbs().maxCoeff() > 0.0);

    for (Eigen::Index r = 0; r < base.rows(); ++r) {
      const double m = base.row(r).maxCoeff();
      CHECK(std::abs((base.row(r).array() - m).exp().sum() / std::exp(std::log((base.row(r).array() - m).exp().sum())) - 1.0) < 1e-12);
      Eigen::RowVectorXd prob = (base.row(r).array() - m).exp();
      prob /= prob.sum();
      CHECK(std::abs(prob.sum() - 1.0) < 1e-6);
    }
  }
  TokenSeq long_src(static_cast<std::size_t>(cfg.max_positions) + 1, 5);
  CHECK_THROWS_AS(forward<double>(p, cfg, long_src, {kBosId}), Error);
  CHECK_THROWS_AS(forward<double>(p, cfg, {5, kEosId}, {kBosId, 99}), Error);
}

TEST_CASE("loss with a zeroed output layer is ln V") {
  const auto cfg = tiny_config(13);
  auto p = init<double>(cfg, 2);
  // Zero decoder output gain and bias: every logit becomes 0.
  p.decoder_norm.gain.setZero();
  p.decoder_norm.bias.setZero();
  const std::vector<SeqPair> batch = {{{5, 6, kEosId}, {kBosId, 7, 8, kEosId}}, {{9, kEosId}, {kBosId, kEosId}}};
  CHECK(loss<double>(p, cfg, batch) == doctest::Approx(std::log(13.0)).epsilon(1e-12));
  CHECK(std::abs(loss_and_grads<double>(p, cfg, batch).loss - std::log(13.0)) < 1e-6);

  const std::vector<SeqPair> empty;
  CHECK_THROWS_AS(loss_and_grads<double>(p, cfg, empty), Error);
  const std::vector<SeqPair> all_pad = {{{5, kEosId}, {kPadId, kPadId}}};
  CHECK_THROWS_AS(loss_and_grads<double>(p, cfg, all_pad), Error);
  CHECK_THROWS_AS(loss<double>(p, cfg, all_pad), Error);
}

TEST_CASE("one-hot logits never raise the loss") {
  const auto cfg = tiny_config();
  auto p = init<double>(cfg, 8);
  jitter(p, 9);
  Rng rng(10);
  for (int round = 0; round < 20; ++round) {
    const std::vector<SeqPair> batch = {{{static_cast<int>(5 + rng.below(6)), kEosId},
                                         {kBosId, static_cast<int>(5 + rng.below(6)), kEosId}}};
    const Batch b = Batch::make(batch);
    const Matrix<double> memory = encode<double>(p, cfg, b, nullptr);
    const Matrix<double> logits = output_logits(p, decode_hidden<double>(p, cfg, b, memory, nullptr));
    Matrix<double> one_hot = Matrix<double>::Zero(logits.rows(), logits.cols());
    for (Eigen::Index t = 0; t < b.tgt_out.cols(); ++t) one_hot(t, b.tgt_out(0, t)) = 1.0;
    std::int64_t tokens = 0;
    const double real = cross_entropy_rows<double>(logits, b.tgt_out, 0.0, nullptr, tokens);
    const double ideal = cross_entropy_rows<double>(one_hot, b.tgt_out, 0.0, nullptr, tokens);
    CHECK(ideal <= real);
  }
}

TEST_CASE("gradients match central finite differences") {
  const auto cfg = tiny_config(12);
  auto p = init<double>(cfg, 11);
  jitter(p, 12);
  const std::vector<SeqPair> batch = {{{5, 6, 7, kEosId}, {kBosId, 8, 9, kEosId}},
                                      {{10, 11, kEosId}, {kBosId, 5, 5, 6, kEosId}},
                                      {{9, kEosId}, {kBosId, kEosId}}};
  constexpr double kSmoothing = 0.1;
  const auto analytic = loss_and_grads<double>(p, cfg, batch, kSmoothing);

  std::vector<std::pair<double*, double>> entries;  // (parameter, analytic gradient)
  visit_tensors(
      [&](const std::string&, auto& t, const auto& g) {
        for (Eigen::Index i = 0; i < t.size(); ++i) entries.emplace_back(t.data() + i, g.data()[i]);
      },
      p, analytic.grads);
  Rng rng(13);
  double worst = 0;
  constexpr double eps = 1e-4;
  for (int k = 0; k < 25; ++k) {
    auto& [param, grad] = entries[rng.below(entries.size())];
    const double saved = *param;
    *param = saved + eps;
    const double up = loss<double>(p, cfg, batch, kSmoothing);
    *param = saved - eps;
    const double down = loss<double>(p, cfg, batch, kSmoothing);
    *param = saved;
    const double numeric = (up - down) / (2 * eps);
    const double denom = std::max({std::abs(numeric), std::abs(grad), 1e-8});
    worst = std::max(worst, std::abs(numeric - grad) / denom);
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("training learns a copy task and is deterministic") {
  const auto strings = short_strings(500, 21);
  auto tok = copy_tokenizer(strings, 300);
  ModelConfig mcfg = tiny_config(static_cast<int>(tok->vocab_size()));
  mcfg.model_dim = 32;
  mcfg.ffn_dim = 64;
  TrainConfig tcfg;
  tcfg.learning_rate = 3e-3;
  tcfg.warmup_steps = 50;
  tcfg.epochs = 30;
  tcfg.seed = 4;
  const auto pairs = copy_pairs(*tok, strings);
  const double initial = loss<float>(init<float>(mcfg, tcfg.seed), mcfg, pairs);

  std::vector<EpochLog> logs;
  TrainOptions options;
  options.on_epoch = [&](const EpochLog& log) { logs.push_back(log); };
  const auto ckpt = train(copy_dataset(strings), tok, mcfg, tcfg, options);
  const double final_loss = loss<float>(ckpt.params, mcfg, pairs);
  MESSAGE("copy loss " << initial << " -> " << final_loss);
  CHECK(final_loss < 0.1 * initial);
  CHECK(logs.size() == 30);
  CHECK(ckpt.loss_history.size() == 30);
  CHECK(ckpt.loss_history.back() < ckpt.loss_history.front());
  CHECK(ckpt.step == logs.back().step);

  const auto again = train(copy_dataset(strings), tok, mcfg, tcfg);
  CHECK(again.params == ckpt.params);
  CHECK(again.loss_history == ckpt.loss_history);

  auto zero = tcfg;
  zero.epochs = 0;
  const auto untrained = train(copy_dataset(strings), tok, mcfg, zero);
  CHECK(untrained.params == init<float>(mcfg, tcfg.seed));
  CHECK(untrained.step == 0);

  auto capped = tcfg;
  capped.max_steps = 7;
  CHECK(train(copy_dataset(strings), tok, mcfg, capped).step == 7);

  auto wrong = mcfg;
  wrong.vocab_size += 1;
  CHECK_THROWS_AS(train(copy_dataset(strings), tok, wrong, tcfg), Error);
  CHECK_THROWS_AS(train(Dataset{}, tok, mcfg, tcfg), Error);
}

TEST_CASE("divergence reports the last good parameters") {
  const auto strings = short_strings(64, 2);
  auto tok = copy_tokenizer(strings, 270);
  ModelConfig mcfg = tiny_config(static_cast<int>(tok->vocab_size()));
  TrainConfig tcfg;
  tcfg.learning_rate = 1e30;
  tcfg.warmup_steps = 1;
  tcfg.gradient_clip_norm = 1e30;
  tcfg.epochs = 50;
  try {
    train(copy_dataset(strings), tok, mcfg, tcfg);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(all_finite(e.last_good().params));
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip and tokenizer hash check") {
  testing::TempDir dir("ckpt");
  const auto& ckpt = small_checkpoint();
  save_checkpoint(ckpt, dir / "m.ckpt");
  CHECK(std::filesystem::exists(dir / "m.tok"));
  const auto loaded = load_checkpoint(dir / "m.ckpt");
  CHECK(loaded.params == ckpt.params);
  CHECK(loaded.config == ckpt.config);
  CHECK(loaded.step == ckpt.step);
  CHECK(loaded.rng_state == ckpt.rng_state);
  CHECK(loaded.loss_history == ckpt.loss_history);
  CHECK(*loaded.tokenizer == *ckpt.tokenizer);

  std::ifstream in(dir / "m.ckpt", std::ios::binary);
  std::string magic(5, '\0');
  in.read(magic.data(), 5);
  CHECK(magic == "SQ2Q1");

  // Replace the tokenizer file with a different one of the same size.
  auto other = train_subword(short_strings(400, 77, "ijklmnop"), Scheme::bbpe, ckpt.tokenizer->vocab_size());
  other.save(dir / "m.tok");
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "m.ckpt"), doctest::Contains("tokenizer hash mismatch"), Error);
  std::filesystem::remove(dir / "m.tok");
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt"), Error);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);
}

TEST_CASE("greedy decoding") {
  const auto& ckpt = small_checkpoint();
  const auto empty = decode_greedy(ckpt, "abc", 0);
  CHECK(empty.text.empty());
  CHECK(empty.truncated);
  CHECK(decode_greedy(ckpt, "abc def", 40).text == decode_greedy(ckpt, "abc def", 40).text);
  CHECK_THROWS_AS(decode_greedy(ckpt, "abc", -1), Error);
  const auto r = decode_greedy(ckpt, "abc", 40);
  CHECK(r.truncated == (r.tokens.empty() || r.tokens.back() != kEosId));
  CHECK(decode_greedy(ckpt, "", 10).tokens.size() <= 10);
}

TEST_CASE("batched greedy equals one-at-a-time greedy") {
  const auto& ckpt = small_checkpoint();
  std::vector<std::string> inputs = short_strings(40, 31);
  inputs.push_back("");
  inputs.push_back("abcdefgh abcdefgh abcdefgh");
  const auto batched = decode_greedy_batch(ckpt, inputs, 30);
  REQUIRE(batched.size() == inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto single = decode_greedy(ckpt, inputs[i], 30);
    CHECK(batched[i].tokens == single.tokens);
    CHECK(batched[i].log_prob == single.log_prob);
  }
}

TEST_CASE("beam search against greedy") {
  const auto& ckpt = small_checkpoint();
  Rng rng(41);
  const auto inputs = short_strings(100, 43, "abcdefghij");
  for (const auto& input : inputs) {
    const auto greedy = decode_greedy(ckpt, input, 24);
    const auto beam1 = decode_beam(ckpt, input, 1, 24);
    CHECK(beam1.tokens == greedy.tokens);
    CHECK(beam1.text == greedy.text);
    const auto beam4 = decode_beam(ckpt, input, 4, 24);
    const auto norm = [](const DecodeResult& r) {
      return r.tokens.empty() ? r.log_prob : r.log_prob / static_cast<double>(r.tokens.size());
    };
    CHECK(norm(beam4) >= norm(greedy) - 1e-12);
  }
  CHECK_THROWS_AS(decode_beam(ckpt, "abc", 0, 10), Error);
}
