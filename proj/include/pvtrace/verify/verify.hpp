// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Ownership verification from the curvature of the likelihood around each
// fingerprint sample.
//
// For a text x with neighbours x+_k, x-_k the variation is
//
//   pv(x) = 1/(2K) * sum_k [lp(x+_k) + lp(x-_k)] - lp(x)
//
// with lp the mean per-token log-probability. Memorized samples sit on a
// sharp peak, so their variation is strongly negative. The calibrated
// signal subtracts the same quantity measured on a reference model trained
// on same-distribution data: delta = pv_suspect - pv_reference. The ROC is
// computed on score = -delta, so larger scores mean "member".

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pvtrace/fingerprint/fingerprint.hpp"
#include "pvtrace/lm/transformer.hpp"
#include "pvtrace/perturb/neighborhood.hpp"
#include "pvtrace/verify/roc.hpp"

namespace pvtrace::verify {

// From already computed log-probabilities.
double probabilistic_variation(double original, std::span<const double> positives, std::span<const double> negatives);

// Optional rewrite of each suspect-side query. `variant` is 0 for the
// original text, 1..K for positives and K+1..2K for negatives.
using QueryTransform = std::function<std::string(const std::string& text, const std::string& sample_id, int variant)>;

double probabilistic_variation(const lm::Scorer& model, const perturb::PerturbationSet& pset,
                               const lm::Vocabulary& vocab, const QueryTransform& transform = {},
                               const std::string& sample_id = {});

// Throws UsageError on non-finite input.
double calibrated_signal(double pv_suspect, double pv_reference);
double uncalibrated_signal(double pv_suspect);

struct PVScore {
  std::string sample_id;
  double pv_suspect = 0;
  std::optional<double> pv_reference;
  double delta = 0;  // pv_suspect - pv_reference, or pv_suspect
  double score = 0;  // -delta, the ranking statistic
  bool is_member = false;

  Json to_json() const;
};

struct VerifyOptions {
  int k = 5;
  double ratio = 0.30;
  std::uint64_t seed = 0;
  double fpr_budget = 0.05;
  bool calibrated = true;
  // Suspect-side character deletion rate; 0 disables it.
  double remove_ratio = 0;

  Json to_json() const;
  static VerifyOptions from_json(const Json& j);
};

// Neighbourhoods for every member and unseen sample of a split.
struct Probe {
  std::string sample_id;
  bool is_member = false;
  perturb::PerturbationSet pset;
};

struct ProbeSet {
  std::vector<Probe> probes;
  std::vector<std::string> skipped_members;  // unperturbable samples
  std::vector<std::string> skipped_unseen;
};

// Per-sample seeds are derive_seed(options.seed, id). Sets found in `cache`
// with matching K and ratio are reused; new ones are added to it.
ProbeSet build_probes(const fingerprint::FingerprintSplit& split, const perturb::SubstitutionLexicon& lexicon,
                      const VerifyOptions& options, perturb::NeighborhoodCache* cache = nullptr);

// Character deletion at options.remove_ratio, seeded per sample and
// variant; empty when the ratio is 0.
QueryTransform suspect_transform(const VerifyOptions& options);

// pv for every probe, in probe order. Applies character deletion when
// options.remove_ratio > 0.
std::vector<double> score_probes(const lm::Scorer& model, const ProbeSet& probes, const lm::Vocabulary& vocab,
                                 const VerifyOptions& options);

struct VerificationReport {
  std::vector<PVScore> scores;
  RocCurve roc;
  std::size_t members_scored = 0;
  std::size_t unseen_scored = 0;
  std::vector<std::string> skipped;
  bool calibrated = true;
  VerifyOptions options;

  Json to_json() const;
  // "FSR=<x>%@AUC=<y>"
  std::string summary_line() const;
};

// Combines precomputed suspect (and reference) variations. The reference is
// ignored when options.calibrated is false.
VerificationReport assemble_report(const ProbeSet& probes, std::span<const double> pv_suspect,
                                   std::optional<std::span<const double>> pv_reference, const VerifyOptions& options);

// Full pipeline: probes, scoring and the ROC sweep. `reference` may be null
// only when options.calibrated is false. Throws UsageError when every
// sample is unperturbable.
VerificationReport verify(const lm::ModelParams& suspect, const lm::ModelParams* reference,
                          const fingerprint::FingerprintSplit& split, const perturb::SubstitutionLexicon& lexicon,
                          const lm::Vocabulary& vocab, const VerifyOptions& options,
                          perturb::NeighborhoodCache* cache = nullptr);

}  // namespace pvtrace::verify
