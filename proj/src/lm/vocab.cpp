// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/lm/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "pvtrace/util/error.hpp"

namespace pvtrace::lm {

std::vector<std::string> normalize_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
  std::set<std::string> words;
  for (const auto& t : texts) {
    for (auto& w : normalize_words(t)) words.insert(std::move(w));
  }
  std::vector<std::string> tokens{std::string(kUnk), std::string(kBos), std::string(kEos)};
  for (const auto& w : words) {
    if (w != kUnk && w != kBos && w != kEos) tokens.push_back(w);
  }
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 3 || tokens[0] != kUnk || tokens[1] != kBos || tokens[2] != kEos) {
    throw UsageError("vocabulary must start with <unk>, <bos>, <eos>");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<TokenId>(i)).second) {
      throw UsageError("duplicate vocabulary token: " + v.tokens_[i]);
    }
  }
  return v;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw UsageError("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(std::string_view word) const {
  return index_.find(std::string(word)) != index_.end();
}

TokenId Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? unk_id() : it->second;
}

Json Vocabulary::to_json() const { return Json{{"tokens", tokens_}}; }

Vocabulary Vocabulary::from_json(const Json& j) {
  return from_tokens(j.at("tokens").get<std::vector<std::string>>());
}

TokenSequence tokenize(const Vocabulary& vocab, std::string_view text) {
  const auto words = normalize_words(text);
  if (words.empty()) throw UsageError("empty input");
  TokenSequence seq;
  seq.ids.reserve(words.size() + 2);
  seq.ids.push_back(vocab.bos_id());
  for (const auto& w : words) seq.ids.push_back(vocab.id(w));
  seq.ids.push_back(vocab.eos_id());
  return seq;
}

TokenSequence truncate(TokenSequence seq, std::size_t max_len) {
  if (seq.ids.size() > max_len) seq.ids.resize(max_len);
  return seq;
}

}  // namespace pvtrace::lm
