// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "pvtrace/lm/model.hpp"
#include "pvtrace/lm/vocab.hpp"

namespace pvtrace::lm {

// Ordered trainable tensors and their offsets in a flat gradient buffer.
struct TrainableSet {
  bool adapters_only = false;
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> shapes;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> sizes;
  std::size_t total = 0;
};

TrainableSet trainable_set(const ModelParams& model, bool adapters_only);

// Pointers into `model` matching set.names.
std::vector<float*> trainable_storage(ModelParams& model, const TrainableSet& set);

// Fills `flat` (resized to set.total) with the gradient of the mean
// per-token NLL over `batch`; returns that loss. Deterministic regardless
// of the worker count.
double compute_gradients(const ModelParams& model, std::span<const TokenSequence> batch,
                         const TrainableSet& set, std::vector<float>& flat);

}  // namespace pvtrace::lm
