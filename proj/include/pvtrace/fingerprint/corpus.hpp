// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pvtrace/lm/vocab.hpp"
#include "pvtrace/util/json_io.hpp"

namespace pvtrace::fingerprint {

struct Sample {
  std::string id;
  std::string text;

  bool operator==(const Sample&) const = default;
};

struct Corpus {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::vector<std::string> ids() const;
  std::vector<std::string> texts() const;

  // Throws UsageError on duplicate ids or blank texts.
  void validate() const;

  bool operator==(const Corpus&) const = default;
};

// One {"id", "text"} object per line.
Corpus read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

// Tokenizes every sample and keeps at most `context_len` ids.
std::vector<lm::TokenSequence> encode(const Corpus& corpus, const lm::Vocabulary& vocab,
                                      std::size_t context_len);

}  // namespace pvtrace::fingerprint
