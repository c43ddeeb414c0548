// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration and run manifest. A run directory holds one
// config; every stage seed is derived from the master seed and the stage
// name, so the config alone determines every artifact.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pvtrace/lm/model.hpp"
#include "pvtrace/lm/train.hpp"
#include "pvtrace/util/json_io.hpp"

namespace pvtrace::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// One model-level or input-level attack. Known kinds: "prune"
// {strategy, ratio}, "merge" {strategy, alpha, trim_keep_fraction,
// dare_drop_rate}, "incremental" {epochs, learning_rate}, "remove" {ratio}.
struct AttackEntry {
  std::string attack;
  Json parameters = Json::object();
  // Defaults to the "attack/<name>" stage seed; pruning uses "prune/<strategy>".
  std::optional<std::uint64_t> seed;

  // File-name stem of the attacked model, e.g. "fingerprinted.ties.a0.5.k0.2".
  std::string name() const;
  Json to_json() const;
  static AttackEntry from_json(const Json& j);
  bool operator==(const AttackEntry&) const = default;
};

struct HarmlessnessGrid {
  std::vector<std::size_t> sizes{50, 100, 200};
  std::vector<int> epochs{10, 20};
  bool operator==(const HarmlessnessGrid&) const = default;
};

struct ExperimentConfig {
  std::string corpus = "corpus.jsonl";  // relative paths resolve against the run directory
  lm::ModelConfig model;                // vocab_size is filled from the corpus

  std::size_t n_tr = 100;
  std::size_t n_ref = 1000;
  std::size_t n_unseen = 500;
  // Consecutive slices of the remaining samples, in this order.
  std::size_t n_pretrain = 8000;
  std::size_t n_aux = 300;
  std::size_t n_benign = 300;
  std::size_t n_holdout = 1000;

  lm::TrainConfig pretrain;
  lm::TrainConfig injection;
  lm::TrainConfig reference;
  lm::TrainConfig benign;       // second model for merging
  lm::TrainConfig incremental;  // default for "incremental" attacks
  lm::LoraSpec lora;            // fingerprint and reference adapters
  lm::LoraSpec attack_lora;     // benign and incremental adapters

  int k = 5;
  double ratio = 0.30;
  std::string lexicon = "auto";
  double fpr_budget = 0.05;
  bool calibrated = true;
  std::size_t prune_calibration = 32;  // aux samples used for taylor importance

  std::vector<AttackEntry> attacks;
  HarmlessnessGrid harmlessness;
  std::uint64_t seed = 1;

  void validate() const;
  Json to_json() const;
  static ExperimentConfig from_json(const Json& j);
  bool operator==(const ExperimentConfig&) const = default;

  // FNV-1a of the canonical serialization, as 16 hex digits.
  std::string hash() const;
  std::uint64_t stage_seed(const std::string& stage) const;
  // Seeds for every fixed stage plus one per attack.
  std::map<std::string, std::uint64_t> stage_seeds() const;
  // Stage training config with its seed replaced by the stage seed.
  lm::TrainConfig stage_train_config(const std::string& stage) const;
  std::uint64_t attack_seed(const AttackEntry& a) const;
};

// Settings that pass the acceptance checks on the synthetic corpus.
ExperimentConfig default_experiment_config();
// The full attack matrix: 4 pruning strategies x 3 ratios, 4 merge
// strategies x alpha 0.1..0.9, incremental tuning, remove-perturbation presets.
std::vector<AttackEntry> default_attack_matrix();

ExperimentConfig read_config(const std::filesystem::path& path);

struct RunManifest {
  std::string config_hash;
  std::map<std::string, std::string> artifacts;   // logical name -> path relative to the run dir
  std::map<std::string, std::string> timestamps;  // stage -> UTC ISO-8601 completion time
  std::string tool_version = kToolVersion;

  Json to_json() const;
  static RunManifest from_json(const Json& j);
};

}  // namespace pvtrace::cli
