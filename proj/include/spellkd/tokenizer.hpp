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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace spellkd {

enum class Scheme { bpe, bbpe };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view name);

using TokenSeq = std::vector<int>;

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumSpecials = 4;

struct Merge {
  int left;
  int right;
  int result;

  bool operator==(const Merge&) const = default;
};

struct Detokenized {
  std::string text;
  bool lossy = false;  // invalid UTF-8 or unknown tokens were replaced by U+FFFD
};

// Subword vocabulary plus ordered merge rules. Ids 0-3 are pad, bos, eos and
// unk; BBPE reserves ids 4-259 for the raw bytes 0x00-0xFF.
//
// Text is pre-split into chunks that never share a merge: each whitespace
// delimited word together with one leading space (the word boundary marker),
// and any other whitespace as single-character chunks. A space is prepended
// to the whole text so the first word carries the marker too.
class TokenizerModel {
 public:
  // Validates id density, specials, merge topology and (for BBPE) the byte
  // base vocabulary.
  TokenizerModel(Scheme scheme, std::vector<std::string> vocab, std::vector<Merge> merges);

  Scheme scheme() const { return scheme_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  const std::string& token(int id) const { return vocab_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<Merge>& merges() const { return merges_; }
  std::optional<int> find(std::string_view token) const;

  TokenSeq encode(std::string_view text) const;
  Detokenized decode(std::span<const int> ids) const;

  // Same vocabulary, keeping only the first `count` merges; the products of
  // dropped merges stay in the vocabulary but are never produced by encode.
  TokenizerModel truncated(std::size_t count) const;

  std::string serialize() const;
  static TokenizerModel parse(std::string_view contents);
  void save(const std::filesystem::path& path) const;
  static TokenizerModel load(const std::filesystem::path& path);

  // FNV-1a of serialize().
  std::uint64_t content_hash() const;

  bool operator==(const TokenizerModel& other) const {
    return scheme_ == other.scheme_ && vocab_ == other.vocab_ && merges_ == other.merges_;
  }

 private:
  void encode_chunk(std::string_view chunk, TokenSeq& out) const;

  Scheme scheme_;
  std::vector<std::string> vocab_;
  std::vector<Merge> merges_;
  std::unordered_map<std::string, int> ids_;
  std::unordered_map<std::uint64_t, std::size_t> merge_rank_;
};

// Splits text (already prefixed with the boundary space) into merge chunks.
std::vector<std::string_view> pretokenize(std::string_view text);

// Greedy most-frequent-pair merging. Ties go to the lexicographically
// smallest (left, right) byte strings; stops at vocab_size or when no pair
// occurs at least twice.
TokenizerModel train_subword(const std::vector<std::string>& corpus, Scheme scheme,
                             std::size_t vocab_size);

// Named vocabulary-size presets.
struct TokenizerPreset {
  Scheme scheme;
  std::size_t vocab_size;
};
inline constexpr TokenizerPreset kDeskBbpe{Scheme::bbpe, 4096};
inline constexpr TokenizerPreset kDeskBpe{Scheme::bpe, 8192};
inline constexpr TokenizerPreset kProductionBbpe{Scheme::bbpe, 32000};
inline constexpr TokenizerPreset kProductionBpe{Scheme::bpe, 128000};

}  // namespace spellkd
