// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Parameter containers for the decoder-only toy language model.
//
// Layout (pre-norm transformer, learned positions, GELU FFN):
//   tok_emb [V, d]   pos_emb [C, d]
//   layers.<l>.ln1.{gain,bias} [d]
//   layers.<l>.attn.{wq,wk,wv,wo} [d, d]      (out x in, no bias)
//   layers.<l>.ln2.{gain,bias} [d]
//   layers.<l>.ffn.w1 [F, d]  ffn.b1 [F]  ffn.w2 [d, F]  ffn.b2 [d]
//   ln_f.{gain,bias} [d]
//   head.w [V, d]    head.b [V]
// with F = ff_mult * d. Matrices are row-major, out x in.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pvtrace/util/json_io.hpp"
#include "pvtrace/util/rng.hpp"

namespace pvtrace::lm {

struct DenseArray {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  static DenseArray zeros(std::vector<std::size_t> shape);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  bool all_finite() const;

  bool operator==(const DenseArray&) const = default;
};

std::size_t element_count(const std::vector<std::size_t>& shape);

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int context_len = 64;
  int ff_mult = 4;
  std::uint64_t seed = 0;

  int head_dim() const { return d_model / n_heads; }
  int ff_dim() const { return ff_mult * d_model; }

  void validate() const;
  Json to_json() const;
  static ModelConfig from_json(const Json& j);

  bool operator==(const ModelConfig&) const = default;
};

// Effective weight is base + scale * (b . a).
struct LoraAdapter {
  DenseArray a;  // r x in
  DenseArray b;  // out x r
  int rank = 0;
  float scale = 1.f;

  bool operator==(const LoraAdapter&) const = default;
};

struct ModelParams {
  ModelConfig config;
  std::map<std::string, DenseArray> params;
  std::map<std::string, LoraAdapter> adapters;  // keyed by base parameter name

  const DenseArray& at(const std::string& name) const;
  DenseArray& at(const std::string& name);

  // Throws UsageError when names or shapes disagree with the config.
  void validate() const;

  bool operator==(const ModelParams&) const = default;
};

struct LoraSpec {
  int rank = 8;
  float scale = 2.f;
  // Per-layer components ("wq", matched against the trailing name
  // component) or full parameter names ("head.w").
  std::vector<std::string> targets{"wq", "wk", "wv", "wo"};

  Json to_json() const;
  static LoraSpec from_json(const Json& j);
  bool operator==(const LoraSpec&) const = default;
};

// Expected parameter names and shapes for a config, in sorted name order.
std::map<std::string, std::vector<std::size_t>> parameter_shapes(const ModelConfig& config);

// The 2-D attention/FFN weights that pruning may touch.
bool is_prunable(const std::string& name);

// Random init from config.seed: N(0, 0.02) matrices and embeddings,
// unit LayerNorm gains, zero biases.
ModelParams init_model(const ModelConfig& config);

// Every parameter zero (uniform next-token distribution).
ModelParams zero_model(const ModelConfig& config);

// Attaches fresh adapters to every parameter whose name ends in a target:
// a ~ N(0, 1/in), b = 0, so the effective weights start unchanged.
ModelParams attach_lora(ModelParams model, const LoraSpec& spec, Rng& rng);

// out = base + scale * (b . a). Shared by the forward pass and lora_merge
// so merged and adapted models score bit-identically.
void effective_weight(const DenseArray& base, const LoraAdapter& adapter, float* out);

// Folds every adapter into its base weight and clears the adapter map.
ModelParams lora_merge(const ModelParams& model);

}  // namespace pvtrace::lm
