// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pvtrace/util/json_io.hpp"

namespace pvtrace::lm {

using TokenId = std::int32_t;

struct TokenSequence {
  std::vector<TokenId> ids;

  std::size_t size() const { return ids.size(); }
  bool operator==(const TokenSequence&) const = default;
};

// Whitespace split + ASCII lowercase. Leading/trailing whitespace vanishes.
std::vector<std::string> normalize_words(std::string_view text);

std::string join_words(std::span<const std::string> words);

class Vocabulary {
 public:
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kBos = "<bos>";
  static constexpr std::string_view kEos = "<eos>";

  // Reserved entries take ids 0..2; the rest are the distinct normalized
  // words of `texts` in lexicographic order.
  static Vocabulary build(std::span<const std::string> texts);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const;
  bool contains(std::string_view word) const;
  TokenId id(std::string_view word) const;  // unk_id() when absent

  TokenId unk_id() const { return 0; }
  TokenId bos_id() const { return 1; }
  TokenId eos_id() const { return 2; }

  Json to_json() const;
  static Vocabulary from_json(const Json& j);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// [bos, words..., eos]. Throws UsageError("empty input") if no words.
TokenSequence tokenize(const Vocabulary& vocab, std::string_view text);

// Keeps the first `max_len` ids.
TokenSequence truncate(TokenSequence seq, std::size_t max_len);

}  // namespace pvtrace::lm
