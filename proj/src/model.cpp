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

#include "spellkd/model/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "spellkd/model/inference.hpp"
#include "spellkd/model/search.hpp"
#include "spellkd/model/transformer.hpp"
#include "spellkd/rng.hpp"

namespace spellkd {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void write_floats(std::ostream& out, const float* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < n; ++i) write_u32(out, std::bit_cast<std::uint32_t>(data[i]));
  }
}

void read_floats(std::istream& in, float* data, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)))) {
      throw Error("checkpoint truncated");
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(read_u32(in));
  }
}

std::vector<SeqPair> tokenize_pairs(const Dataset& data, const TokenizerModel& tok, int max_positions) {
  std::vector<SeqPair> out;
  out.reserve(data.size());
  for (const auto& pair : data.pairs()) {
    TokenSeq src = encode_source_text(tok, pair.input, max_positions);
    TokenSeq tgt = frame_target(tok.encode(pair.label));
    // tgt_in drops the final token, so framed targets may be one longer.
    if (tgt.size() > static_cast<std::size_t>(max_positions) + 1) continue;
    out.emplace_back(std::move(src), std::move(tgt));
  }
  return out;
}

// Shuffled batches of similar total length.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<SeqPair>& data, int batch_size, Rng& rng) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order.begin(), order.end(), rng);
  const std::size_t bucket = static_cast<std::size_t>(batch_size) * 16;
  const auto length = [&](std::size_t i) { return data[i].first.size() + data[i].second.size(); };
  for (std::size_t begin = 0; begin < order.size(); begin += bucket) {
    const auto end = std::min(order.size(), begin + bucket);
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(begin),
                     order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return length(a) < length(b); });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

double learning_rate(const TrainConfig& cfg, std::int64_t step) {
  if (cfg.warmup_steps <= 0) return cfg.learning_rate;
  const double t = static_cast<double>(step);
  const double w = static_cast<double>(cfg.warmup_steps);
  return cfg.learning_rate * std::min(t / w, std::sqrt(w / t));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  if (!ckpt.tokenizer) throw Error("checkpoint has no tokenizer");
  fs::path tok_ref = ckpt.tokenizer_path;
  if (tok_ref.empty()) {
    tok_ref = path.stem().string() + ".tok";
    ckpt.tokenizer->save(path.parent_path() / tok_ref);
  }
  ordered_json header;
  header["version"] = kCheckpointVersion;
  header["config"] = to_json(ckpt.config);
  header["step"] = ckpt.step;
  header["tokenizer"] = {{"path", tok_ref.generic_string()}, {"hash", hex64(ckpt.tokenizer_hash())}};
  header["rng_state"] = ckpt.rng_state;
  header["loss_history"] = ckpt.loss_history;
  ordered_json tensors = ordered_json::array();
  visit_tensors(
      [&](const std::string& name, const auto& t) {
        tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
      },
      ckpt.params);
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 5);
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  visit_tensors(
      [&](const std::string&, const auto& t) { write_floats(out, t.data(), static_cast<std::size_t>(t.size())); },
      ckpt.params);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[5];
  if (!in.read(magic, 5) || std::memcmp(magic, kCheckpointMagic, 5) != 0) {
    throw Error("not a checkpoint (bad magic): " + path.string());
  }
  const auto len = read_u32(in);
  std::string text(len, '\0');
  if (!in.read(text.data(), len)) throw Error("checkpoint truncated");
  const auto header = nlohmann::json::parse(text);
  if (header.at("version").get<int>() != kCheckpointVersion) throw Error("unsupported checkpoint version");

  Checkpoint ckpt;
  ckpt.config = model_config_from_json(header.at("config"));
  ckpt.step = header.at("step").get<std::int64_t>();
  ckpt.rng_state = header.value("rng_state", "");
  ckpt.loss_history = header.value("loss_history", std::vector<double>{});
  ckpt.tokenizer_path = header.at("tokenizer").at("path").get<std::string>();
  const auto expected = header.at("tokenizer").at("hash").get<std::string>();

  ckpt.params = zeros<float>(ckpt.config);
  const auto& specs = header.at("tensors");
  std::size_t index = 0;
  visit_tensors(
      [&](const std::string& name, auto& t) {
        if (index >= specs.size() || specs[index].at("name").get<std::string>() != name ||
            specs[index].at("rows").get<Eigen::Index>() != t.rows() ||
            specs[index].at("cols").get<Eigen::Index>() != t.cols()) {
          throw Error("checkpoint tensor layout mismatch at " + name);
        }
        read_floats(in, t.data(), static_cast<std::size_t>(t.size()));
        ++index;
      },
      ckpt.params);

  const fs::path tok_file =
      ckpt.tokenizer_path.is_absolute() ? ckpt.tokenizer_path : path.parent_path() / ckpt.tokenizer_path;
  auto tok = std::make_shared<TokenizerModel>(TokenizerModel::load(tok_file));
  if (hex64(tok->content_hash()) != expected) {
    throw Error("tokenizer hash mismatch for " + tok_file.string() + ": checkpoint expects " + expected +
                ", file has " + hex64(tok->content_hash()));
  }
  if (static_cast<int>(tok->vocab_size()) != ckpt.config.vocab_size) {
    throw Error("tokenizer vocabulary size does not match model config");
  }
  ckpt.tokenizer = std::move(tok);
  return ckpt;
}

TokenSeq encode_source_text(const TokenizerModel& tokenizer, std::string_view text, int max_positions) {
  TokenSeq ids = tokenizer.encode(text);
  const auto limit = static_cast<std::size_t>(std::max(0, max_positions - 1));
  if (ids.size() > limit) ids.resize(limit);
  return frame_source(std::move(ids));
}

Checkpoint train(const Dataset& train_data, std::shared_ptr<const TokenizerModel> tokenizer,
                 const ModelConfig& mcfg, const TrainConfig& tcfg, const TrainOptions& options) {
  mcfg.validate();
  tcfg.validate();
  if (!tokenizer) throw Error("train needs a tokenizer");
  if (train_data.empty()) throw Error("training data is empty");
  if (static_cast<int>(tokenizer->vocab_size()) != mcfg.vocab_size) {
    throw Error("model vocab_size " + std::to_string(mcfg.vocab_size) + " does not match tokenizer size " +
                std::to_string(tokenizer->vocab_size()));
  }
  const auto data = tokenize_pairs(train_data, *tokenizer, mcfg.max_positions);
  if (data.empty()) throw Error("no training example fits max_positions");

  Checkpoint ckpt;
  ckpt.config = mcfg;
  ckpt.tokenizer = std::move(tokenizer);
  ckpt.params = init<float>(mcfg, tcfg.seed);
  Rng rng(derive_seed(tcfg.seed, "train"));
  Rng dropout_rng(derive_seed(tcfg.seed, "dropout"));
  Rng* dropout = mcfg.dropout_rate > 0.0 ? &dropout_rng : nullptr;

  Parameters<float> m = zeros_like(ckpt.params);
  Parameters<float> v = zeros_like(ckpt.params);
  constexpr float kBeta1 = 0.9f, kBeta2 = 0.98f, kEps = 1e-9f;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    if (tcfg.max_steps > 0 && ckpt.step >= tcfg.max_steps) break;
    const auto batches = make_batches(data, tcfg.batch_size, rng);
    double loss_sum = 0.0;
    std::int64_t token_sum = 0;
    for (const auto& indices : batches) {
      if (tcfg.max_steps > 0 && ckpt.step >= tcfg.max_steps) break;
      std::vector<SeqPair> batch;
      batch.reserve(indices.size());
      for (auto i : indices) batch.push_back(data[i]);
      auto lg = loss_and_grads<float>(ckpt.params, mcfg, batch, tcfg.label_smoothing, dropout);

      double norm_sq = 0.0;
      visit_tensors([&](const std::string&, const auto& g) { norm_sq += g.template cast<double>().squaredNorm(); },
                    lg.grads);
      const double norm = std::sqrt(norm_sq);
      if (!std::isfinite(lg.loss) || !std::isfinite(norm)) {
        ckpt.rng_state = rng.state();
        throw TrainingDiverged("training diverged at step " + std::to_string(ckpt.step + 1) + " (loss " +
                                   std::to_string(lg.loss) + ")",
                               ckpt);
      }
      const float clip = norm > tcfg.gradient_clip_norm ? static_cast<float>(tcfg.gradient_clip_norm / norm) : 1.0f;

      ++ckpt.step;
      const double lr = learning_rate(tcfg, ckpt.step);
      const double bc1 = 1.0 - std::pow(static_cast<double>(kBeta1), static_cast<double>(ckpt.step));
      const double bc2 = 1.0 - std::pow(static_cast<double>(kBeta2), static_cast<double>(ckpt.step));
      const auto step_size = static_cast<float>(lr * std::sqrt(bc2) / bc1);
      visit_tensors(
          [&](const std::string&, auto& p, const auto& g, auto& m1, auto& m2) {
            const auto gc = (g.array() * clip).eval();
            m1.array() = kBeta1 * m1.array() + (1.0f - kBeta1) * gc;
            m2.array() = kBeta2 * m2.array() + (1.0f - kBeta2) * gc.square();
            p.array() -= step_size * m1.array() / (m2.array().sqrt() + kEps);
          },
          ckpt.params, lg.grads, m, v);

      loss_sum += lg.loss * static_cast<double>(lg.tokens);
      token_sum += lg.tokens;
    }
    if (token_sum > 0) {
      const double mean = loss_sum / static_cast<double>(token_sum);
      ckpt.loss_history.push_back(mean);
      if (options.on_epoch) options.on_epoch(EpochLog{epoch + 1, ckpt.step, mean});
    }
  }
  ckpt.rng_state = rng.state();
  return ckpt;
}

namespace {

DecodeResult finish(const TokenizerModel& tok, const Hypothesis& hyp) {
  DecodeResult r;
  r.tokens = hyp.tokens;
  r.truncated = !hyp.finished;
  r.log_prob = hyp.log_prob;
  const auto detok = tok.decode(hyp.tokens);
  r.text = detok.text;
  r.lossy = detok.lossy;
  return r;
}

int clamp_len(const Checkpoint& ckpt, int max_len) {
  if (max_len < 0) throw Error("max_len must be non-negative");
  return std::min(max_len, ckpt.config.max_positions);
}

}  // namespace

int default_max_len(const Checkpoint& ckpt, std::string_view src_text) {
  const auto n = static_cast<int>(ckpt.tokenizer->encode(src_text).size());
  return std::min(ckpt.config.max_positions, 2 * n + 10);
}

std::vector<DecodeResult> decode_greedy_batch(const Checkpoint& ckpt, std::span<const std::string> src_texts,
                                              int max_len) {
  std::vector<TokenSeq> sources;
  sources.reserve(src_texts.size());
  for (const auto& s : src_texts) sources.push_back(encode_source_text(*ckpt.tokenizer, s, ckpt.config.max_positions));
  IncrementalDecoder model(ckpt.params, ckpt.config, sources);
  const auto hyps = greedy_search(model, static_cast<int>(sources.size()), clamp_len(ckpt, max_len));
  std::vector<DecodeResult> out;
  out.reserve(hyps.size());
  for (const auto& h : hyps) out.push_back(finish(*ckpt.tokenizer, h));
  return out;
}

DecodeResult decode_greedy(const Checkpoint& ckpt, std::string_view src_text, int max_len) {
  const std::string text(src_text);
  return decode_greedy_batch(ckpt, std::span<const std::string>(&text, 1), max_len).front();
}

DecodeResult decode_beam(const Checkpoint& ckpt, std::string_view src_text, int beam, int max_len) {
  if (beam < 1) throw Error("beam width must be at least 1");
  const TokenSeq source = encode_source_text(*ckpt.tokenizer, src_text, ckpt.config.max_positions);
  const int limit = clamp_len(ckpt, max_len);
  IncrementalDecoder model(ckpt.params, ckpt.config, std::span<const TokenSeq>(&source, 1));
  Hypothesis best = beam_search(model, beam, limit);
  // The greedy path can fall off a narrow beam; keep it as a fallback so the
  // result never scores below greedy.
  IncrementalDecoder greedy_model(ckpt.params, ckpt.config, std::span<const TokenSeq>(&source, 1));
  Hypothesis greedy = greedy_search(greedy_model, 1, limit).front();
  if (greedy.normalized() > best.normalized()) best = std::move(greedy);
  return finish(*ckpt.tokenizer, best);
}

}  // namespace spellkd
