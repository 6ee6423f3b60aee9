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

#include "spellkd/tokenizer.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>

#include "spellkd/error.hpp"
#include "spellkd/rng.hpp"
#include "spellkd/text.hpp"

namespace spellkd {
namespace {

const std::vector<std::string> kSpecials = {"<pad>", "<s>", "</s>", "<unk>"};

constexpr std::uint64_t pair_key(int left, int right) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(left)) << 32) |
         static_cast<std::uint32_t>(right);
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead & 0xE0) == 0xC0) return 2;
  if ((lead & 0xF0) == 0xE0) return 3;
  if ((lead & 0xF8) == 0xF0) return 4;
  return 1;
}

// Initial symbols of a chunk: bytes for BBPE, code points for BPE.
std::vector<std::string_view> base_units(std::string_view chunk, Scheme scheme) {
  std::vector<std::string_view> units;
  for (std::size_t i = 0; i < chunk.size();) {
    const auto len = scheme == Scheme::bbpe
                         ? 1
                         : std::min(utf8_length(static_cast<unsigned char>(chunk[i])),
                                    chunk.size() - i);
    units.push_back(chunk.substr(i, len));
    i += len;
  }
  return units;
}

std::string hex_encode(std::string_view bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(kDigits[c >> 4]);
    out.push_back(kDigits[c & 0xF]);
  }
  return out;
}

std::string hex_decode(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error("odd-length hex token");
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    unsigned value = 0;
    const auto [ptr, ec] = std::from_chars(hex.data() + i, hex.data() + i + 2, value, 16);
    if (ec != std::errc() || ptr != hex.data() + i + 2) throw Error("malformed hex token");
    out.push_back(static_cast<char>(value));
  }
  return out;
}

std::string prepare(std::string_view text, Scheme scheme) {
  std::string prefixed = " ";
  if (scheme == Scheme::bpe) {
    prefixed += text::nfc(text);
  } else {
    prefixed += text;
  }
  return prefixed;
}

bool is_space_byte(char c) { return c == ' '; }

}  // namespace

std::string_view to_string(Scheme scheme) { return scheme == Scheme::bpe ? "bpe" : "bbpe"; }

Scheme parse_scheme(std::string_view name) {
  if (name == "bpe" || name == "BPE") return Scheme::bpe;
  if (name == "bbpe" || name == "BBPE") return Scheme::bbpe;
  throw Error("unknown tokenizer scheme '" + std::string(name) + "'");
}

std::vector<std::string_view> pretokenize(std::string_view text) {
  // Whitespace is classified on whole code points; ASCII whitespace and the
  // multi-byte Unicode spaces both end a word.
  std::vector<std::string_view> chunks;
  auto code_point_at = [&](std::size_t i, std::size_t& len) -> char32_t {
    len = std::min(utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
    char32_t cp;
    const auto piece = text.substr(i, len);
    if (text::is_valid_utf8(piece)) {
      cp = text::decode_utf8(piece)[0];
    } else {
      len = 1;
      cp = 0xFFFD;
    }
    return cp;
  };
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len;
    const char32_t cp = code_point_at(i, len);
    const bool ws = text::is_whitespace(cp);
    std::size_t j = i + len;
    if (ws) {
      bool starts_word = false;
      if (is_space_byte(text[i]) && j < text.size()) {
        std::size_t next_len;
        starts_word = !text::is_whitespace(code_point_at(j, next_len));
      }
      if (!starts_word) {
        chunks.push_back(text.substr(i, len));
        i = j;
        continue;
      }
    }
    while (j < text.size()) {
      std::size_t next_len;
      if (text::is_whitespace(code_point_at(j, next_len))) break;
      j += next_len;
    }
    chunks.push_back(text.substr(i, j - i));
    i = j;
  }
  return chunks;
}

TokenizerModel::TokenizerModel(Scheme scheme, std::vector<std::string> vocab,
                               std::vector<Merge> merges)
    : scheme_(scheme), vocab_(std::move(vocab)), merges_(std::move(merges)) {
  if (vocab_.size() < static_cast<std::size_t>(kNumSpecials) + 1) {
    throw Error("vocabulary must hold the specials and at least one token");
  }
  for (int i = 0; i < kNumSpecials; ++i) {
    if (vocab_[static_cast<std::size_t>(i)] != kSpecials[static_cast<std::size_t>(i)]) {
      throw Error("special tokens must occupy ids 0-3");
    }
  }
  if (scheme_ == Scheme::bbpe) {
    if (vocab_.size() < 260) throw Error("BBPE vocabulary must contain all 256 bytes");
    for (int b = 0; b < 256; ++b) {
      if (vocab_[static_cast<std::size_t>(kNumSpecials + b)] != std::string(1, static_cast<char>(b))) {
        throw Error("BBPE ids 4-259 must be the raw bytes");
      }
    }
  }
  for (std::size_t id = kNumSpecials; id < vocab_.size(); ++id) {
    if (vocab_[id].empty()) throw Error("empty token in vocabulary");
    if (!ids_.emplace(vocab_[id], static_cast<int>(id)).second) {
      throw Error("duplicate token in vocabulary");
    }
  }
  // Every merge output must exist, and operands must be available (base
  // symbols or products of earlier merges) before the merge that uses them.
  std::vector<bool> available(vocab_.size(), true);
  for (const auto& m : merges_) {
    if (m.result >= 0 && static_cast<std::size_t>(m.result) < available.size()) available[static_cast<std::size_t>(m.result)] = false;
  }
  const auto n = static_cast<int>(vocab_.size());
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto& m = merges_[r];
    if (m.left < kNumSpecials || m.right < kNumSpecials || m.result < kNumSpecials ||
        m.left >= n || m.right >= n || m.result >= n) {
      throw Error("merge references an invalid id");
    }
    if (!available[static_cast<std::size_t>(m.left)] || !available[static_cast<std::size_t>(m.right)]) {
      throw Error("merge operands are not topologically ordered");
    }
    if (vocab_[static_cast<std::size_t>(m.result)] !=
        vocab_[static_cast<std::size_t>(m.left)] + vocab_[static_cast<std::size_t>(m.right)]) {
      throw Error("merge result is not the concatenation of its operands");
    }
    available[static_cast<std::size_t>(m.result)] = true;
    merge_rank_.emplace(pair_key(m.left, m.right), r);
  }
}

std::optional<int> TokenizerModel::find(std::string_view token) const {
  for (int i = 0; i < kNumSpecials; ++i) {
    if (kSpecials[static_cast<std::size_t>(i)] == token) return i;
  }
  const auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

void TokenizerModel::encode_chunk(std::string_view chunk, TokenSeq& out) const {
  TokenSeq symbols;
  for (auto unit : base_units(chunk, scheme_)) {
    if (scheme_ == Scheme::bbpe) {
      symbols.push_back(kNumSpecials + static_cast<unsigned char>(unit[0]));
    } else {
      const auto it = ids_.find(std::string(unit));
      symbols.push_back(it == ids_.end() ? kUnkId : it->second);
    }
  }
  while (symbols.size() > 1) {
    std::size_t best_rank = merges_.size();
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      const auto it = merge_rank_.find(pair_key(symbols[i], symbols[i + 1]));
      if (it != merge_rank_.end()) best_rank = std::min(best_rank, it->second);
    }
    if (best_rank == merges_.size()) break;
    const auto& m = merges_[best_rank];
    std::size_t w = 0;
    for (std::size_t r = 0; r < symbols.size(); ++r) {
      if (r + 1 < symbols.size() && symbols[r] == m.left && symbols[r + 1] == m.right) {
        symbols[w++] = m.result;
        ++r;
      } else {
        symbols[w++] = symbols[r];
      }
    }
    symbols.resize(w);
  }
  out.insert(out.end(), symbols.begin(), symbols.end());
}

TokenSeq TokenizerModel::encode(std::string_view text) const {
  TokenSeq out;
  if (text.empty()) return out;
  const auto prepared = prepare(text, scheme_);
  for (auto chunk : pretokenize(prepared)) encode_chunk(chunk, out);
  return out;
}

Detokenized TokenizerModel::decode(std::span<const int> ids) const {
  std::string bytes;
  bool unknown = false;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
      throw Error("token id " + std::to_string(id) + " out of range");
    }
    if (id == kPadId || id == kBosId || id == kEosId) continue;
    if (id == kUnkId) {
      text::append_utf8(bytes, text::kReplacementChar);
      unknown = true;
      continue;
    }
    bytes += vocab_[static_cast<std::size_t>(id)];
  }
  if (!bytes.empty() && bytes.front() == ' ') bytes.erase(0, 1);
  auto clean = text::sanitize_utf8(bytes);
  return {std::move(clean.text), clean.replaced || unknown};
}

TokenizerModel TokenizerModel::truncated(std::size_t count) const {
  std::vector<Merge> kept(merges_.begin(),
                          merges_.begin() + static_cast<std::ptrdiff_t>(std::min(count, merges_.size())));
  return TokenizerModel(scheme_, vocab_, std::move(kept));
}

std::string TokenizerModel::serialize() const {
  std::ostringstream out;
  out << "subword/v1 " << to_string(scheme_) << ' ' << vocab_.size() << '\n';
  for (std::size_t id = 0; id < vocab_.size(); ++id) {
    out << "V " << id << ' ' << hex_encode(vocab_[id]) << '\n';
  }
  for (const auto& m : merges_) out << "M " << m.left << ' ' << m.right << ' ' << m.result << '\n';
  return out.str();
}

TokenizerModel TokenizerModel::parse(std::string_view contents) {
  std::istringstream in{std::string(contents)};
  std::string magic, scheme_name;
  std::size_t declared = 0;
  if (!(in >> magic >> scheme_name >> declared) || magic != "subword/v1") {
    throw Error("not a subword/v1 tokenizer file");
  }
  const auto scheme = parse_scheme(scheme_name);
  std::vector<std::string> vocab;
  std::vector<Merge> merges;
  std::string tag;
  while (in >> tag) {
    if (tag == "V") {
      std::size_t id;
      std::string hex;
      if (!(in >> id >> hex) || id != vocab.size()) throw Error("vocabulary ids must be dense");
      vocab.push_back(hex_decode(hex));
    } else if (tag == "M") {
      Merge m{};
      if (!(in >> m.left >> m.right >> m.result)) throw Error("malformed merge line");
      merges.push_back(m);
    } else {
      throw Error("unexpected line tag '" + tag + "'");
    }
  }
  if (vocab.size() != declared) throw Error("vocabulary size does not match header");
  return TokenizerModel(scheme, std::move(vocab), std::move(merges));
}

void TokenizerModel::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize();
}

TokenizerModel TokenizerModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::uint64_t TokenizerModel::content_hash() const { return fnv1a(serialize()); }

TokenizerModel train_subword(const std::vector<std::string>& corpus, Scheme scheme,
                             std::size_t vocab_size) {
  // Word (chunk) frequencies.
  std::map<std::string, std::int64_t> chunk_counts;
  for (const auto& line : corpus) {
    if (line.empty()) continue;
    const auto prepared = prepare(line, scheme);
    for (auto chunk : pretokenize(prepared)) ++chunk_counts[std::string(chunk)];
  }

  std::vector<std::string> vocab(kSpecials.begin(), kSpecials.end());
  std::unordered_map<std::string, int> ids;
  if (scheme == Scheme::bbpe) {
    for (int b = 0; b < 256; ++b) vocab.emplace_back(1, static_cast<char>(b));
  } else {
    std::map<std::string, bool> units;
    for (const auto& [chunk, count] : chunk_counts) {
      for (auto unit : base_units(chunk, scheme)) units.emplace(std::string(unit), true);
    }
    for (const auto& [unit, unused] : units) vocab.push_back(unit);
  }
  if (vocab_size <= vocab.size()) {
    throw Error("vocab_size " + std::to_string(vocab_size) + " must exceed the base vocabulary (" +
                std::to_string(vocab.size()) + " including specials)");
  }
  for (std::size_t id = kNumSpecials; id < vocab.size(); ++id) ids.emplace(vocab[id], static_cast<int>(id));

  struct Word {
    std::vector<int> symbols;
    std::int64_t count;
  };
  std::vector<Word> words;
  words.reserve(chunk_counts.size());
  for (const auto& [chunk, count] : chunk_counts) {
    Word w{{}, count};
    for (auto unit : base_units(chunk, scheme)) {
      w.symbols.push_back(scheme == Scheme::bbpe ? kNumSpecials + static_cast<unsigned char>(unit[0])
                                                 : ids.at(std::string(unit)));
    }
    words.push_back(std::move(w));
  }

  std::unordered_map<std::uint64_t, std::int64_t> pair_counts;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> occurrences;
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto& s = words[w].symbols;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      const auto key = pair_key(s[i], s[i + 1]);
      pair_counts[key] += words[w].count;
      occurrences[key].push_back(w);
    }
  }

  struct Candidate {
    std::int64_t count;
    int left, right;
  };
  // Highest count first; among equal counts the smallest (left, right) strings.
  auto worse = [&](const Candidate& a, const Candidate& b) {
    if (a.count != b.count) return a.count < b.count;
    const auto& al = vocab[static_cast<std::size_t>(a.left)];
    const auto& bl = vocab[static_cast<std::size_t>(b.left)];
    if (al != bl) return al > bl;
    return vocab[static_cast<std::size_t>(a.right)] > vocab[static_cast<std::size_t>(b.right)];
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> heap(worse);
  for (const auto& [key, count] : pair_counts) {
    heap.push({count, static_cast<int>(key >> 32), static_cast<int>(key & 0xFFFFFFFFu)});
  }

  std::vector<Merge> merges;
  std::vector<std::size_t> visited(words.size(), 0);
  std::size_t stamp = 0;
  while (vocab.size() < vocab_size && !heap.empty()) {
    const auto top = heap.top();
    heap.pop();
    const auto key = pair_key(top.left, top.right);
    const auto it = pair_counts.find(key);
    if (it == pair_counts.end() || it->second != top.count) continue;  // stale entry
    if (top.count < 2) break;

    const int result = static_cast<int>(vocab.size());
    vocab.push_back(vocab[static_cast<std::size_t>(top.left)] + vocab[static_cast<std::size_t>(top.right)]);
    merges.push_back({top.left, top.right, result});

    ++stamp;
    std::map<std::uint64_t, bool> touched;
    const auto affected = std::move(occurrences[key]);
    occurrences.erase(key);
    for (const auto w : affected) {
      if (visited[w] == stamp) continue;
      visited[w] = stamp;
      auto& word = words[w];
      auto& s = word.symbols;
      bool contains = false;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        if (s[i] == top.left && s[i + 1] == top.right) {
          contains = true;
          break;
        }
      }
      if (!contains) continue;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const auto k = pair_key(s[i], s[i + 1]);
        pair_counts[k] -= word.count;
        touched[k] = true;
      }
      std::size_t out = 0;
      for (std::size_t r = 0; r < s.size(); ++r) {
        if (r + 1 < s.size() && s[r] == top.left && s[r + 1] == top.right) {
          s[out++] = result;
          ++r;
        } else {
          s[out++] = s[r];
        }
      }
      s.resize(out);
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const auto k = pair_key(s[i], s[i + 1]);
        pair_counts[k] += word.count;
        touched[k] = true;
        if (s[i] == result || s[i + 1] == result) occurrences[k].push_back(w);
      }
    }
    for (const auto& [k, unused] : touched) {
      const auto count = pair_counts[k];
      if (count <= 0) {
        pair_counts.erase(k);
        continue;
      }
      if (k == key) continue;
      heap.push({count, static_cast<int>(k >> 32), static_cast<int>(k & 0xFFFFFFFFu)});
    }
  }
  return TokenizerModel(scheme, std::move(vocab), std::move(merges));
}

}  // namespace spellkd
