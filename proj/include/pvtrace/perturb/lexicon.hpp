// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Word substitution lists that stand in for a neural rephraser. A positive
// replacement keeps the meaning of the sentence (a distributional
// near-synonym); a negative replacement moves away from it while keeping the
// word frequency roughly fixed.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pvtrace/fingerprint/corpus.hpp"
#include "pvtrace/lm/vocab.hpp"

namespace pvtrace::perturb {

struct Substitutes {
  std::vector<std::string> pos;
  std::vector<std::string> neg;

  bool operator==(const Substitutes&) const = default;
};

struct SubstitutionLexicon {
  std::map<std::string, Substitutes> entries;

  // A word can be perturbed when both of its lists are non-empty.
  const Substitutes* find(const std::string& word) const;

  // Throws UsageError when a word maps to itself, the lists overlap, or a
  // replacement is missing from `vocab`.
  void validate(const lm::Vocabulary& vocab) const;

  Json to_json() const;  // {word: {"pos": [...], "neg": [...]}}
  static SubstitutionLexicon from_json(const Json& j);

  bool operator==(const SubstitutionLexicon&) const = default;
};

SubstitutionLexicon read_lexicon(const std::filesystem::path& path);
void write_lexicon(const std::filesystem::path& path, const SubstitutionLexicon& lexicon);

struct LexiconOptions {
  std::size_t min_count = 2;
  std::size_t min_length = 3;
  std::size_t n_pos = 3;
  std::size_t n_neg = 3;
};

// Distributional lexicon: every word is described by the counts of the words
// up to three positions to its left and right, weighted by positive
// pointwise mutual information; positives are the most cosine-similar words, and
// negatives the least similar words of the nearest frequency band (bands are
// floor(log2(count))). The seed only breaks exact similarity ties.
SubstitutionLexicon build_default_lexicon(const fingerprint::Corpus& corpus, const lm::Vocabulary& vocab,
                                          std::uint64_t seed, const LexiconOptions& options = {});

}  // namespace pvtrace::perturb
