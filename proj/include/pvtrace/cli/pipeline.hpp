// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pipeline stages over a run directory:
//
//   config.json, manifest.json
//   data/      vocab.json, split.json, lexicon.json, neighborhoods.jsonl
//   logs/      pretrain.json, inject.json, reference.json, benign.json
//   checkpoints/ base.ptrc, fingerprinted.ptrc, reference.ptrc, benign.ptrc,
//              attacked/<attack name>.ptrc
//   reports/   verify/<name>.json, *.csv, harmlessness/*.json
//
// Stages are deterministic functions of the config; rerunning a stage
// rewrites identical bytes.

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pvtrace/cli/config.hpp"
#include "pvtrace/fingerprint/fingerprint.hpp"
#include "pvtrace/lm/vocab.hpp"
#include "pvtrace/perturb/lexicon.hpp"
#include "pvtrace/perturb/neighborhood.hpp"
#include "pvtrace/verify/verify.hpp"

namespace pvtrace::cli {

struct RunData {
  fingerprint::Corpus corpus;
  lm::Vocabulary vocab;
  fingerprint::FingerprintSplit split;
  fingerprint::Corpus pretrain, aux, benign, holdout;
  fingerprint::Corpus spare;  // whatever the slices leave over
};

class Run {
 public:
  // Creates the directory and writes config.json, or checks that an
  // existing config.json has the same hash.
  Run(ExperimentConfig config, std::filesystem::path dir);
  ~Run();
  Run(const Run&) = delete;
  Run& operator=(const Run&) = delete;

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path(const std::string& relative) const { return dir_ / relative; }
  std::filesystem::path checkpoint(const std::string& name) const;

  // Lazily loaded. Call once from a single thread before any fan-out.
  const RunData& data();
  const perturb::SubstitutionLexicon& lexicon();
  const verify::ProbeSet& probes();
  verify::VerifyOptions verify_options(bool calibrated, double remove_ratio = 0) const;
  // Reference-model PV per probe; each sample is scored once per run.
  std::vector<double> reference_pv(const verify::ProbeSet& probes);
  // Probes for a custom member set against the run's unseen slice.
  verify::ProbeSet probes_for(const fingerprint::Corpus& members);

  // {"config_hash", "seeds"} embedded in every report.
  Json provenance() const;
  // Merges `artifacts` into manifest.json and stamps `stage`.
  void record(const std::string& stage, const std::map<std::string, std::string>& artifacts);

 private:
  ExperimentConfig config_;
  std::filesystem::path dir_;
  std::unique_ptr<RunData> data_;
  std::optional<perturb::SubstitutionLexicon> lexicon_;
  std::optional<verify::ProbeSet> probes_;
  std::optional<perturb::NeighborhoodCache> cache_;
  std::map<std::string, double> reference_pv_;  // by sample id
  std::mutex mutex_;                            // guards reference_pv_ and the manifest
};

// Resolves `config.corpus` against `base` unless it is absolute.
std::filesystem::path resolve_corpus(const ExperimentConfig& config, const std::filesystem::path& base);

lm::ModelParams cmd_train(Run& run);

struct InjectResult {
  lm::ModelParams fingerprinted;
  lm::ModelParams reference;
};
InjectResult cmd_inject(Run& run);

// Applies every model-level attack in the config to the fingerprinted
// model. Input-level attacks ("remove") produce no checkpoint and are
// listed in `skipped`.
struct AttackOutcome {
  std::vector<std::string> written;
  std::vector<std::string> skipped;
};
AttackOutcome cmd_attack(Run& run);
lm::ModelParams benign_model(Run& run);

struct VerifyRequest {
  std::string name;                   // report stem under reports/verify/
  std::filesystem::path suspect;
  std::optional<std::filesystem::path> reference;  // defaults to the run's reference
  bool calibrated = true;
  double remove_ratio = 0;
};
// Scores the suspect and writes reports/verify/<name>.json. Reads
// checkpoints only.
Json cmd_verify(Run& run, const VerifyRequest& request);
// Returns the cached report when its provenance matches, else cmd_verify.
Json cached_verification(Run& run, const VerifyRequest& request);

// Held-out perplexity of the clean base model pruned by each strategy and
// ratio: strategy -> ratio -> ppl.
std::map<std::string, std::map<double, double>> pruned_base_perplexity(Run& run);

// Writes the CSV tables under reports/. Returns their paths.
std::vector<std::filesystem::path> cmd_report(Run& run);

// NLL delta (after - before, positive = degradation) on the holdout slice
// or on `holdout` when given.
Json cmd_harmlessness(Run& run, const std::filesystem::path& before, const std::filesystem::path& after,
                      const std::optional<std::filesystem::path>& holdout = std::nullopt);
// Fingerprint size x epochs ablation; writes reports/harmlessness_grid.csv.
std::filesystem::path harmlessness_grid(Run& run);

}  // namespace pvtrace::cli
