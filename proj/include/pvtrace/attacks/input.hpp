// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Input-side attacks: the suspect's operator rewrites or screens queries
// before they reach the model.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pvtrace/lm/transformer.hpp"
#include "pvtrace/lm/vocab.hpp"

namespace pvtrace::attacks {

// Number of UTF-8 code points (the unit of deletion).
std::size_t char_count(std::string_view text);

// Deletes the code points at `positions` (any order, no duplicates).
std::string delete_characters(std::string_view text, std::span<const std::size_t> positions);

// Deletes floor(ratio * len) uniformly chosen code points. Throws
// UsageError when ratio is outside (0, 1) or nothing would remain.
std::string remove_perturbation(std::string_view text, double ratio, std::uint64_t seed);

inline constexpr double kRemovePresets[] = {0.05, 0.10};

// exp(mean per-token negative log-likelihood).
double perplexity(const lm::Scorer& model, const lm::Vocabulary& vocab, std::string_view text);
double perplexity(const lm::ModelParams& model, const lm::Vocabulary& vocab, std::string_view text);

// Rejects queries whose perplexity under a screening model exceeds a
// threshold, typically a high quantile of benign traffic.
struct PerplexityFilter {
  double threshold = 0;

  bool admits(double ppl) const { return ppl <= threshold; }

  // Threshold at quantile q (nearest rank) of the perplexities of `benign`.
  static PerplexityFilter calibrate(const lm::Scorer& screen, const lm::Vocabulary& vocab,
                                    std::span<const std::string> benign, double q);
};

}  // namespace pvtrace::attacks
