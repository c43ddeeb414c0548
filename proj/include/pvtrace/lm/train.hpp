// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pvtrace/lm/model.hpp"
#include "pvtrace/lm/vocab.hpp"
#include "pvtrace/util/json_io.hpp"

namespace pvtrace::lm {

enum class OptimizerKind { kSgd, kAdam };
enum class LrSchedule { kConstant, kCosine };

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 1;
  int batch_size = 16;
  std::uint64_t seed = 0;
  bool train_adapters_only = false;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0;  // decoupled, applied to 2-D base parameters
  LrSchedule schedule = LrSchedule::kConstant;  // cosine decays to zero over all steps

  void validate() const;
  Json to_json() const;
  static TrainConfig from_json(const Json& j);
  bool operator==(const TrainConfig&) const = default;
};

struct TrainLog {
  std::string stage;
  std::vector<std::string> data_ids;
  Json config;
  int steps_per_epoch = 0;
  int total_steps = 0;
  std::vector<double> epoch_loss;  // mean batch loss per epoch

  Json to_json() const;
};

// cfg.epochs passes over `data` with a per-epoch seeded shuffle. Output is a
// pure function of (model, data, cfg). With train_adapters_only the base
// parameters are left bit-identical. Throws NumericalError("training
// diverged") on a non-finite loss or parameter.
ModelParams train(const ModelParams& model, std::span<const TokenSequence> data, const TrainConfig& cfg,
                  TrainLog* log = nullptr);

}  // namespace pvtrace::lm
