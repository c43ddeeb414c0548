// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/fingerprint/corpus.hpp"

#include <unordered_set>

#include "pvtrace/util/error.hpp"

namespace pvtrace::fingerprint {

std::vector<std::string> Corpus::ids() const {
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.id);
  return out;
}

std::vector<std::string> Corpus::texts() const {
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.text);
  return out;
}

void Corpus::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.id).second) throw UsageError("duplicate sample id: " + s.id);
    if (lm::normalize_words(s.text).empty()) throw UsageError("empty text for sample: " + s.id);
  }
}

Corpus read_corpus(const std::filesystem::path& path) {
  Corpus c;
  for (const auto& row : read_jsonl_file(path)) {
    if (!row.is_object() || !row.contains("id") || !row.contains("text")) {
      throw UsageError("corpus rows need \"id\" and \"text\": " + path.string());
    }
    const auto& id = row["id"];
    c.samples.push_back({id.is_string() ? id.get<std::string>() : id.dump(), row["text"].get<std::string>()});
  }
  c.validate();
  return c;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::vector<Json> rows;
  rows.reserve(corpus.size());
  for (const auto& s : corpus.samples) rows.push_back(Json{{"id", s.id}, {"text", s.text}});
  write_jsonl_file(path, rows);
}

std::vector<lm::TokenSequence> encode(const Corpus& corpus, const lm::Vocabulary& vocab,
                                      std::size_t context_len) {
  std::vector<lm::TokenSequence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus.samples) out.push_back(lm::truncate(lm::tokenize(vocab, s.text), context_len));
  return out;
}

}  // namespace pvtrace::fingerprint
