// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Private forward/backward machinery shared by scoring and training.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "pvtrace/lm/model.hpp"
#include "pvtrace/lm/vocab.hpp"

namespace pvtrace::lm::engine {

template <class P>
struct LayerSlots {
  P ln1_gain{}, ln1_bias{}, wq{}, wk{}, wv{}, wo{}, ln2_gain{}, ln2_bias{}, w1{}, b1{}, w2{}, b2{};
};

template <class P>
struct Slots {
  P tok_emb{}, pos_emb{}, lnf_gain{}, lnf_bias{}, head_w{}, head_b{};
  std::vector<LayerSlots<P>> layers;
};

template <class P, class Lookup>
void bind_slots(Slots<P>& s, const ModelConfig& c, Lookup&& lookup) {
  s.tok_emb = lookup("tok_emb");
  s.pos_emb = lookup("pos_emb");
  s.lnf_gain = lookup("ln_f.gain");
  s.lnf_bias = lookup("ln_f.bias");
  s.head_w = lookup("head.w");
  s.head_b = lookup("head.b");
  s.layers.resize(static_cast<std::size_t>(c.n_layers));
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    auto& L = s.layers[static_cast<std::size_t>(l)];
    L.ln1_gain = lookup(p + "ln1.gain");
    L.ln1_bias = lookup(p + "ln1.bias");
    L.wq = lookup(p + "attn.wq");
    L.wk = lookup(p + "attn.wk");
    L.wv = lookup(p + "attn.wv");
    L.wo = lookup(p + "attn.wo");
    L.ln2_gain = lookup(p + "ln2.gain");
    L.ln2_bias = lookup(p + "ln2.bias");
    L.w1 = lookup(p + "ffn.w1");
    L.b1 = lookup(p + "ffn.b1");
    L.w2 = lookup(p + "ffn.w2");
    L.b2 = lookup(p + "ffn.b2");
  }
}

// Read-only view of the effective weights. Adapted matrices are merged into
// owned storage so the forward pass never special-cases adapters.
struct Weights {
  ModelConfig config;
  Slots<const float*> w;
  std::vector<std::vector<float>> owned;
};

Weights bind_weights(const ModelParams& model);

// Gradient slots; a null slot means "not requested".
struct GradLayout {
  std::vector<std::string> names;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> sizes;
  std::size_t total = 0;

  // Offset of `name`, or npos.
  std::size_t find(const std::string& name) const;
};

GradLayout make_layout(const ModelParams& model, const std::vector<std::string>& names);
Slots<float*> bind_grads(const ModelConfig& config, const GradLayout& layout, float* buffer);

struct LayerCache {
  std::vector<float> x_in, xhat1, rstd1, a, q, k, v, att, o, x_mid, xhat2, rstd2, b, u, g;
};

struct Cache {
  int T = 0;  // input positions = sequence length - 1
  std::vector<LayerCache> layers;
  std::vector<float> x_final, xhatf, rstdf, f, logp;  // logp is [T, V]
};

// Checks length/context/id ranges. Throws UsageError("context overflow").
void check_sequence(const ModelConfig& config, std::span<const TokenId> ids);

// Runs the model over ids[0..n-2]; returns log p(ids[t+1] | ids[..t]).
// Throws NumericalError("numerical failure") on non-finite output.
std::vector<float> forward(const Weights& w, std::span<const TokenId> ids, Cache& cache);

// Accumulates d(weight * -sum_t logp_t)/d(params) into the non-null slots.
void backward(const Weights& w, std::span<const TokenId> ids, const Cache& cache, float weight,
              const Slots<float*>& grads);

}  // namespace pvtrace::lm::engine
