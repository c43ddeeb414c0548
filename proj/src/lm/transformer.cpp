// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/lm/transformer.hpp"

#include "engine.hpp"
#include "gradients.hpp"
#include "pvtrace/util/error.hpp"

namespace pvtrace::lm {

struct Scorer::Impl {
  engine::Weights weights;
};

Scorer::Scorer(const ModelParams& model) {
  model.validate();
  auto impl = std::make_shared<Impl>();
  impl->weights = engine::bind_weights(model);
  impl_ = std::move(impl);
}

const ModelConfig& Scorer::config() const { return impl_->weights.config; }

std::vector<float> Scorer::logprobs(const TokenSequence& seq) const {
  engine::Cache cache;
  return engine::forward(impl_->weights, seq.ids, cache);
}

double Scorer::sequence_logprob(const TokenSequence& seq) const {
  double s = 0.0;
  for (float lp : logprobs(seq)) s += lp;
  return s;
}

double Scorer::mean_logprob(const TokenSequence& seq) const {
  return sequence_logprob(seq) / static_cast<double>(seq.size() - 1);
}

std::vector<std::vector<float>> Scorer::distributions(const TokenSequence& seq) const {
  engine::Cache cache;
  engine::forward(impl_->weights, seq.ids, cache);
  const auto V = static_cast<std::size_t>(config().vocab_size);
  std::vector<std::vector<float>> out(static_cast<std::size_t>(cache.T));
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t].assign(cache.logp.begin() + static_cast<std::ptrdiff_t>(t * V),
                  cache.logp.begin() + static_cast<std::ptrdiff_t>((t + 1) * V));
  }
  return out;
}

std::vector<float> forward_logprobs(const ModelParams& model, const TokenSequence& seq) {
  return Scorer(model).logprobs(seq);
}

double sequence_logprob(const ModelParams& model, const TokenSequence& seq) {
  return Scorer(model).sequence_logprob(seq);
}

double nll_loss(const ModelParams& model, std::span<const TokenSequence> batch) {
  if (batch.empty()) throw UsageError("nll_loss: empty batch");
  Scorer scorer(model);
  double total = 0.0;
  for (const auto& seq : batch) total -= scorer.mean_logprob(seq);
  return total / static_cast<double>(batch.size());
}

GradientMap backward(const ModelParams& model, std::span<const TokenSequence> batch, bool adapters_only) {
  if (adapters_only && model.adapters.empty()) {
    throw UsageError("backward: adapters_only requested but model has no adapters");
  }
  const TrainableSet set = trainable_set(model, adapters_only);
  std::vector<float> flat;
  compute_gradients(model, batch, set, flat);
  GradientMap out;
  for (std::size_t i = 0; i < set.names.size(); ++i) {
    DenseArray g;
    g.shape = set.shapes[i];
    g.data.assign(flat.begin() + static_cast<std::ptrdiff_t>(set.offsets[i]),
                  flat.begin() + static_cast<std::ptrdiff_t>(set.offsets[i] + set.sizes[i]));
    out.emplace(set.names[i], std::move(g));
  }
  return out;
}

}  // namespace pvtrace::lm
