// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Unstructured pruning of the attention and feed-forward matrices.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pvtrace/lm/model.hpp"
#include "pvtrace/lm/vocab.hpp"

namespace pvtrace::attacks {

enum class PruneStrategy { kRandom, kL1, kL2, kTaylor };

std::string to_string(PruneStrategy s);
PruneStrategy parse_prune_strategy(const std::string& name);

struct PruneSpec {
  PruneStrategy strategy = PruneStrategy::kL1;
  double ratio = 0.1;
  std::uint64_t seed = 0;
  std::vector<lm::TokenSequence> calib;  // required by kTaylor
};

inline constexpr double kPruneRatios[] = {0.05, 0.10, 0.20};

// floor(ratio * n), tolerant of ratios that land a hair below an integer.
std::size_t prune_count(std::size_t n, double ratio);

// Zeroes the prune_count(n, ratio) entries of lowest importance; equal
// importances are taken lowest index first.
void zero_lowest(std::span<float> values, std::span<const double> importance, double ratio);

// Importance scores: random draws a seeded uniform per entry (the same
// draws for every ratio, so masks are nested), l1 is |w|, l2 is w^2 and
// taylor is |w * dL/dw| with the gradient of the mean NLL over spec.calib.
// Only parameters with is_prunable() are touched. Throws UsageError when the
// model still has adapters or taylor lacks calibration data.
lm::ModelParams prune(const lm::ModelParams& model, const PruneSpec& spec);

}  // namespace pvtrace::attacks
