// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Data partition and symmetric fine-tuning for fingerprint injection.
//
// The victim is fine-tuned on the fingerprint slice and the reference model
// on a same-distribution calibration slice. Both go through fine_tune() with
// identical optimizer paths; only the data differs.

#pragma once

#include <cstdint>

#include "pvtrace/fingerprint/corpus.hpp"
#include "pvtrace/lm/model.hpp"
#include "pvtrace/lm/train.hpp"

namespace pvtrace::fingerprint {

struct FingerprintSplit {
  Corpus d_tr;      // fingerprint samples (members)
  Corpus d_ref;     // reference calibration samples
  Corpus d_unseen;  // held-out non-members
  Corpus rest;      // remaining samples, in shuffled order
  std::uint64_t seed = 0;

  // {"seed", "d_tr": [ids], "d_ref": [ids], "d_unseen": [ids], "rest": [ids]}
  Json manifest() const;
};

inline constexpr std::size_t kDefaultTrainSize = 100;
inline constexpr std::size_t kDefaultReferenceSize = 1000;

// One seeded shuffle, then prefix assignment. Throws UsageError("corpus too
// small: ...") or on duplicate texts.
FingerprintSplit split_fingerprint_data(const Corpus& corpus, std::size_t n_tr, std::size_t n_ref,
                                        std::size_t n_unseen, std::uint64_t seed);

// Rebuilds a split from a manifest and the corpus it was drawn from.
FingerprintSplit split_from_manifest(const Corpus& corpus, const Json& manifest);

// Presets: 20 epochs (injection) and 4 epochs (reference), adapters only.
lm::TrainConfig default_injection_config();
lm::TrainConfig default_reference_config();
// The 10-epoch injection preset.
lm::TrainConfig short_injection_config();

struct FineTuneResult {
  lm::ModelParams model;
  lm::TrainLog log;
};

// Attaches fresh adapters (seeded from cfg.seed) when `base` has none and
// trains them on `data`. cfg.train_adapters_only must be set.
FineTuneResult fine_tune(const lm::ModelParams& base, const Corpus& data, const lm::Vocabulary& vocab,
                         const lm::TrainConfig& cfg, const lm::LoraSpec& lora, const std::string& stage);

FineTuneResult inject(const lm::ModelParams& base, const Corpus& d_tr, const lm::Vocabulary& vocab,
                      const lm::TrainConfig& cfg = default_injection_config(),
                      const lm::LoraSpec& lora = {});

FineTuneResult train_reference(const lm::ModelParams& base, const Corpus& d_ref, const lm::Vocabulary& vocab,
                               const lm::TrainConfig& cfg = default_reference_config(),
                               const lm::LoraSpec& lora = {});

}  // namespace pvtrace::fingerprint
