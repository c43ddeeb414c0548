// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pvtrace/lm/model.hpp"
#include "pvtrace/lm/vocab.hpp"

namespace pvtrace::lm {

// log p(x_i | x_<i) for i = 2..n. Adapters contribute scale * (b . a).
std::vector<float> forward_logprobs(const ModelParams& model, const TokenSequence& seq);

// Sum of forward_logprobs.
double sequence_logprob(const ModelParams& model, const TokenSequence& seq);

// Mean over sequences of the per-token negative log-likelihood.
double nll_loss(const ModelParams& model, std::span<const TokenSequence> batch);

using GradientMap = std::map<std::string, DenseArray>;

// Gradient of nll_loss. With adapters_only, only "adapters/<name>.a" and
// "adapters/<name>.b" entries are present; otherwise every base parameter
// (plus adapter entries when adapters are attached).
GradientMap backward(const ModelParams& model, std::span<const TokenSequence> batch, bool adapters_only);

// Reusable scorer: resolves the effective weights once. Thread-safe.
class Scorer {
 public:
  explicit Scorer(const ModelParams& model);

  std::vector<float> logprobs(const TokenSequence& seq) const;
  double sequence_logprob(const TokenSequence& seq) const;
  // Sequence log-probability divided by the number of predicted tokens.
  double mean_logprob(const TokenSequence& seq) const;
  // Full next-token log-distributions, [n-1][V].
  std::vector<std::vector<float>> distributions(const TokenSequence& seq) const;

  const ModelConfig& config() const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

}  // namespace pvtrace::lm
