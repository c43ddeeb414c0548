// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/attacks/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pvtrace/lm/transformer.hpp"
#include "pvtrace/util/error.hpp"
#include "pvtrace/util/rng.hpp"

namespace pvtrace::attacks {

std::string to_string(PruneStrategy s) {
  switch (s) {
    case PruneStrategy::kRandom: return "random";
    case PruneStrategy::kL1: return "l1";
    case PruneStrategy::kL2: return "l2";
    case PruneStrategy::kTaylor: return "taylor";
  }
  return "?";
}

PruneStrategy parse_prune_strategy(const std::string& name) {
  for (auto s : {PruneStrategy::kRandom, PruneStrategy::kL1, PruneStrategy::kL2, PruneStrategy::kTaylor}) {
    if (to_string(s) == name) return s;
  }
  throw UsageError("unknown pruning strategy: " + name);
}

std::size_t prune_count(std::size_t n, double ratio) {
  return std::min(n, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9)));
}

void zero_lowest(std::span<float> values, std::span<const double> importance, double ratio) {
  if (values.size() != importance.size()) throw UsageError("importance size mismatch");
  const std::size_t n = prune_count(values.size(), ratio);
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importance[a] < importance[b]; });
  for (std::size_t i = 0; i < n; ++i) values[order[i]] = 0.f;
}

lm::ModelParams prune(const lm::ModelParams& model, const PruneSpec& spec) {
  if (!model.adapters.empty()) throw UsageError("prune: merge adapters first");
  if (!(spec.ratio > 0.0 && spec.ratio < 1.0)) throw UsageError("prune: ratio must be in (0, 1)");
  lm::GradientMap grads;
  if (spec.strategy == PruneStrategy::kTaylor) {
    if (spec.calib.empty()) throw UsageError("prune: taylor importance needs calibration data");
    grads = lm::backward(model, spec.calib, false);
  }

  lm::ModelParams out = model;
  for (auto& [name, arr] : out.params) {
    if (!lm::is_prunable(name)) continue;
    std::vector<double> importance(arr.size());
    switch (spec.strategy) {
      case PruneStrategy::kRandom: {
        Rng rng(derive_seed(spec.seed, name));
        for (auto& x : importance) x = rng.uniform();
        break;
      }
      case PruneStrategy::kL1:
        for (std::size_t i = 0; i < arr.size(); ++i) importance[i] = std::abs(double(arr.data[i]));
        break;
      case PruneStrategy::kL2:
        for (std::size_t i = 0; i < arr.size(); ++i) importance[i] = double(arr.data[i]) * arr.data[i];
        break;
      case PruneStrategy::kTaylor: {
        const auto& g = grads.at(name).data;
        for (std::size_t i = 0; i < arr.size(); ++i) importance[i] = std::abs(double(arr.data[i]) * g[i]);
        break;
      }
    }
    zero_lowest(arr.data, importance, spec.ratio);
  }
  return out;
}

}  // namespace pvtrace::attacks
