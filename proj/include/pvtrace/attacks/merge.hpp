// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Parameter-space model merging and adapter fine-tuning attacks.
//
// Deltas are held in double precision so that base + (model - base)
// reproduces the model exactly; merged weights are rounded to float once.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pvtrace/lm/model.hpp"
#include "pvtrace/lm/train.hpp"

namespace pvtrace::attacks {

struct DeltaArray {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  bool operator==(const DeltaArray&) const = default;
};

struct TaskVector {
  std::map<std::string, DeltaArray> deltas;

  bool operator==(const TaskVector&) const = default;
};

// theta_i - theta_0 over every parameter. Both models must be adapter-free
// with identical names and shapes.
TaskVector task_vector(const lm::ModelParams& theta_i, const lm::ModelParams& theta_0);

// theta_0 + sum_i gamma_i * delta_i
lm::ModelParams merge_task_arithmetic(const lm::ModelParams& theta_0, std::span<const TaskVector> deltas,
                                      std::span<const double> gammas);

// Keeps the ceil(keep * n) largest-magnitude entries of each parameter
// (lowest index first among equal magnitudes) and zeroes the rest.
TaskVector trim(const TaskVector& delta, double keep_fraction);

// Trim, elect a sign per entry from sum_i gamma_i * trimmed_i, then average
// gamma_i * trimmed_i over the inputs that agree with the elected sign.
// Entries with a zero vote or no agreeing input stay at theta_0.
lm::ModelParams ties_merge(const lm::ModelParams& theta_0, std::span<const TaskVector> deltas,
                           std::span<const double> gammas, double keep_fraction = 0.20);

// Drops each entry with probability drop_rate and rescales survivors by
// 1 / (1 - drop_rate). drop_rate = 0 returns the input unchanged.
TaskVector dare(const TaskVector& delta, double drop_rate, std::uint64_t seed);

// The rescale step for a given keep mask.
void dare_rescale(std::span<double> values, const std::vector<bool>& keep, double drop_rate);

enum class MergeStrategy { kTaskArithmetic, kTies, kDareTask, kDareTies };

std::string to_string(MergeStrategy s);
MergeStrategy parse_merge_strategy(const std::string& name);

struct MergeSpec {
  MergeStrategy strategy = MergeStrategy::kTaskArithmetic;
  std::vector<double> gammas;
  double trim_keep_fraction = 0.20;  // ties family
  double dare_drop_rate = 0.5;       // dare family
  std::uint64_t seed = 0;
};

// Merges fine-tuned descendants of theta_0 (adapters are folded first).
lm::ModelParams merge(const lm::ModelParams& theta_0, std::span<const lm::ModelParams> models, const MergeSpec& spec);

// Fresh adapters on `model` (itself merged first if adapted), trained on
// `data`, then folded back in.
lm::ModelParams incremental_finetune(const lm::ModelParams& model, std::span<const lm::TokenSequence> data,
                                     const lm::TrainConfig& cfg, const lm::LoraSpec& lora = {});

}  // namespace pvtrace::attacks
