// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/perturb/neighborhood.hpp"

#include <algorithm>
#include <cmath>

#include "pvtrace/util/error.hpp"
#include "pvtrace/util/rng.hpp"

namespace pvtrace::perturb {

Json PerturbationSet::to_json() const {
  return Json{{"original", original}, {"positives", positives},     {"negatives", negatives},
              {"positions", replaced_positions}, {"ratio", ratio}, {"seed", seed}};
}

PerturbationSet PerturbationSet::from_json(const Json& j) {
  PerturbationSet p;
  p.original = j.at("original").get<std::string>();
  p.positives = j.at("positives").get<std::vector<std::string>>();
  p.negatives = j.at("negatives").get<std::vector<std::string>>();
  p.replaced_positions = j.at("positions").get<std::vector<std::vector<std::size_t>>>();
  p.ratio = j.at("ratio").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  if (p.positives.size() != p.negatives.size() || p.positives.size() != p.replaced_positions.size()) {
    throw UsageError("malformed perturbation set");
  }
  return p;
}

std::size_t replacement_count(std::size_t n_substitutable, double ratio) {
  const double raw = ratio * static_cast<double>(n_substitutable);
  const auto n = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(n, 1, n_substitutable);
}

PerturbationSet generate_neighborhood(const std::string& text, int k, double ratio,
                                      const SubstitutionLexicon& lexicon, std::uint64_t seed) {
  if (k < 1) throw UsageError("neighbourhood size must be at least 1");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw UsageError("perturbation ratio must be in (0, 1]");
  const auto words = lm::normalize_words(text);
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (lexicon.find(words[i]) != nullptr) slots.push_back(i);
  }
  if (slots.empty()) throw UsageError("unperturbable sample");

  PerturbationSet p;
  p.original = lm::join_words(words);
  p.ratio = ratio;
  p.seed = seed;
  const std::size_t n = replacement_count(slots.size(), ratio);
  for (int v = 0; v < k; ++v) {
    Rng rng(derive_seed(seed, "variant/" + std::to_string(v)));
    std::vector<std::size_t> positions;
    for (std::size_t s : sample_without_replacement(slots.size(), n, rng)) positions.push_back(slots[s]);
    std::sort(positions.begin(), positions.end());
    auto pos = words, neg = words;
    for (std::size_t i : positions) {
      const auto* subs = lexicon.find(words[i]);
      pos[i] = subs->pos[rng.below(subs->pos.size())];
      neg[i] = subs->neg[rng.below(subs->neg.size())];
    }
    p.positives.push_back(lm::join_words(pos));
    p.negatives.push_back(lm::join_words(neg));
    p.replaced_positions.push_back(std::move(positions));
  }
  return p;
}

std::string cache_key(const std::string& sample_id, std::uint64_t seed) {
  return sample_id + "#" + hex64(seed);
}

void write_neighborhood_cache(const std::filesystem::path& path, const NeighborhoodCache& cache) {
  std::vector<Json> rows;
  rows.reserve(cache.size());
  for (const auto& [key, set] : cache) {
    Json row = set.to_json();
    row["key"] = key;
    rows.push_back(std::move(row));
  }
  write_jsonl_file(path, rows);
}

NeighborhoodCache read_neighborhood_cache(const std::filesystem::path& path) {
  NeighborhoodCache cache;
  for (const auto& row : read_jsonl_file(path)) cache[row.at("key").get<std::string>()] = PerturbationSet::from_json(row);
  return cache;
}

}  // namespace pvtrace::perturb
