// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Templated sentences over a closed vocabulary. Words are grouped into
// concepts of two or three interchangeable surface forms; concepts constrain
// each other (an agent only performs some actions, an action only applies
// to some objects), so synonyms share contexts while distinct concepts do
// not. Surface forms are drawn uniformly, which gives an injected model
// something specific to memorize.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pvtrace/fingerprint/corpus.hpp"

namespace pvtrace::cli {

struct SyntheticCorpus {
  fingerprint::Corpus corpus;
  // Every ordered pair of distinct surface forms of one concept.
  std::vector<std::pair<std::string, std::string>> synonym_pairs;
  // Pairs of representative words of opposed adjective concepts.
  std::vector<std::pair<std::string, std::string>> antonym_pairs;
};

// `n` distinct samples with ids "syn-000000", ...; each sample joins
// `sentences_per_sample` sentences with "then". Throws UsageError if the
// grammar cannot produce that many distinct samples.
SyntheticCorpus generate_synthetic_corpus(std::size_t n, std::uint64_t seed, std::size_t sentences_per_sample = 1);

}  // namespace pvtrace::cli
