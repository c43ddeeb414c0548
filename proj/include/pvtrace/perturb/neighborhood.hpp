// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pvtrace/perturb/lexicon.hpp"
#include "pvtrace/util/json_io.hpp"

namespace pvtrace::perturb {

// K paired neighbours of one text. positives[k] and negatives[k] replace the
// same word positions, replaced_positions[k] (ascending, word indices into
// the normalized text).
struct PerturbationSet {
  std::string original;
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
  std::vector<std::vector<std::size_t>> replaced_positions;
  double ratio = 0;
  std::uint64_t seed = 0;

  std::size_t k() const { return positives.size(); }

  Json to_json() const;
  static PerturbationSet from_json(const Json& j);

  bool operator==(const PerturbationSet&) const = default;
};

// ceil(ratio * n_substitutable) with a small tolerance for ratios such as
// 0.3 * 10 that land just above an integer in binary floating point; at
// least one.
std::size_t replacement_count(std::size_t n_substitutable, double ratio);

// Throws UsageError("unperturbable sample") when no word of `text` is in
// the lexicon.
PerturbationSet generate_neighborhood(const std::string& text, int k, double ratio,
                                      const SubstitutionLexicon& lexicon, std::uint64_t seed);

// JSONL cache keyed by cache_key(sample id, seed); one row per set.
using NeighborhoodCache = std::map<std::string, PerturbationSet>;

std::string cache_key(const std::string& sample_id, std::uint64_t seed);
void write_neighborhood_cache(const std::filesystem::path& path, const NeighborhoodCache& cache);
NeighborhoodCache read_neighborhood_cache(const std::filesystem::path& path);

}  // namespace pvtrace::perturb
