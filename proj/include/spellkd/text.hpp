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

#include <string>
#include <string_view>
#include <vector>

namespace spellkd::text {

inline constexpr char32_t kReplacementChar = U'\uFFFD';

// Strict UTF-8 decoding; throws spellkd::Error on malformed input.
std::u32string decode_utf8(std::string_view bytes);

bool is_valid_utf8(std::string_view bytes);

struct LossyUtf8 {
  std::string text;
  bool replaced = false;
};

// Decodes as much as possible, substituting U+FFFD for each maximal invalid
// subsequence.
LossyUtf8 sanitize_utf8(std::string_view bytes);

void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(char32_t cp);
std::string encode_utf8(std::u32string_view cps);

// Unicode canonical composition (NFC).
std::string nfc(std::string_view utf8);

// General category P* (Pc, Pd, Ps, Pe, Pi, Pf, Po).
bool is_punctuation(char32_t cp);
// Unicode White_Space property.
bool is_whitespace(char32_t cp);

std::string to_lower(std::string_view utf8);

// Trims Unicode whitespace at both ends.
std::string strip(std::string_view utf8);

// Splits on runs of Unicode whitespace; no empty pieces.
std::vector<std::string> split_words(std::string_view utf8);

std::size_t word_count(std::string_view utf8);

}  // namespace spellkd::text
