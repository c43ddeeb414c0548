// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/lm/model.hpp"

#include <cmath>
#include <numeric>

#include "pvtrace/util/error.hpp"

namespace pvtrace::lm {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

DenseArray DenseArray::zeros(std::vector<std::size_t> shape) {
  DenseArray a;
  a.data.assign(element_count(shape), 0.f);
  a.shape = std::move(shape);
  return a;
}

bool DenseArray::all_finite() const {
  for (float x : data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void ModelConfig::validate() const {
  if (vocab_size <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || context_len <= 0 ||
      ff_mult <= 0) {
    throw UsageError("model config: dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw UsageError("model config: d_model must be divisible by n_heads");
  if (context_len < 2) throw UsageError("model config: context_len must be >= 2");
}

Json ModelConfig::to_json() const {
  return Json{{"vocab_size", vocab_size}, {"d_model", d_model},         {"n_layers", n_layers},
              {"n_heads", n_heads},       {"context_len", context_len}, {"ff_mult", ff_mult},
              {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const Json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.d_model = j.value("d_model", c.d_model);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.context_len = j.value("context_len", c.context_len);
  c.ff_mult = j.value("ff_mult", c.ff_mult);
  c.seed = j.value("seed", c.seed);
  return c;
}

Json LoraSpec::to_json() const {
  return Json{{"rank", rank}, {"scale", scale}, {"targets", targets}};
}

LoraSpec LoraSpec::from_json(const Json& j) {
  LoraSpec s;
  s.rank = j.value("rank", s.rank);
  s.scale = j.value("scale", s.scale);
  s.targets = j.value("targets", s.targets);
  return s;
}

const DenseArray& ModelParams::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw UsageError("missing parameter: " + name);
  return it->second;
}

DenseArray& ModelParams::at(const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw UsageError("missing parameter: " + name);
  return it->second;
}

std::map<std::string, std::vector<std::size_t>> parameter_shapes(const ModelConfig& c) {
  c.validate();
  const auto V = static_cast<std::size_t>(c.vocab_size);
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto C = static_cast<std::size_t>(c.context_len);
  const auto F = static_cast<std::size_t>(c.ff_dim());
  std::map<std::string, std::vector<std::size_t>> shapes;
  shapes["tok_emb"] = {V, d};
  shapes["pos_emb"] = {C, d};
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    shapes[p + "ln1.gain"] = {d};
    shapes[p + "ln1.bias"] = {d};
    for (const char* w : {"wq", "wk", "wv", "wo"}) shapes[p + "attn." + w] = {d, d};
    shapes[p + "ln2.gain"] = {d};
    shapes[p + "ln2.bias"] = {d};
    shapes[p + "ffn.w1"] = {F, d};
    shapes[p + "ffn.b1"] = {F};
    shapes[p + "ffn.w2"] = {d, F};
    shapes[p + "ffn.b2"] = {d};
  }
  shapes["ln_f.gain"] = {d};
  shapes["ln_f.bias"] = {d};
  shapes["head.w"] = {V, d};
  shapes["head.b"] = {V};
  return shapes;
}

bool is_prunable(const std::string& name) {
  if (name.rfind("layers.", 0) != 0) return false;
  for (const char* suffix : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo", ".ffn.w1", ".ffn.w2"}) {
    const std::string s(suffix);
    if (name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) return true;
  }
  return false;
}

void ModelParams::validate() const {
  const auto shapes = parameter_shapes(config);
  if (shapes.size() != params.size()) throw UsageError("parameter set does not match config");
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end()) throw UsageError("missing parameter: " + name);
    if (it->second.shape != shape || it->second.data.size() != element_count(shape)) {
      throw UsageError("shape mismatch for " + name);
    }
  }
  for (const auto& [name, ad] : adapters) {
    auto it = params.find(name);
    if (it == params.end() || it->second.rank() != 2) {
      throw UsageError("adapter target is not a 2-D parameter: " + name);
    }
    const std::size_t out = it->second.shape[0], in = it->second.shape[1];
    const auto r = static_cast<std::size_t>(ad.rank);
    if (ad.rank <= 0 || r > std::min(in, out)) throw UsageError("adapter rank out of range: " + name);
    if (ad.a.shape != std::vector<std::size_t>{r, in} || ad.b.shape != std::vector<std::size_t>{out, r} ||
        ad.a.data.size() != r * in || ad.b.data.size() != out * r) {
      throw UsageError("adapter shape mismatch: " + name);
    }
  }
}

namespace {

void fill_normal(DenseArray& a, double stddev, Rng& rng) {
  for (float& x : a.data) x = static_cast<float>(rng.normal() * stddev);
}

bool ends_with_component(const std::string& name, const std::string& target) {
  const auto dot = name.rfind('.');
  return name.substr(dot == std::string::npos ? 0 : dot + 1) == target;
}

}  // namespace

ModelParams init_model(const ModelConfig& config) {
  ModelParams m;
  m.config = config;
  Rng rng(derive_seed(config.seed, "init"));
  for (const auto& [name, shape] : parameter_shapes(config)) {
    DenseArray a = DenseArray::zeros(shape);
    if (name.ends_with(".gain")) {
      std::fill(a.data.begin(), a.data.end(), 1.f);
    } else if (shape.size() == 2) {
      Rng local = rng.fork(name);
      fill_normal(a, 0.02, local);
    }
    m.params.emplace(name, std::move(a));
  }
  return m;
}

ModelParams zero_model(const ModelConfig& config) {
  ModelParams m;
  m.config = config;
  for (const auto& [name, shape] : parameter_shapes(config)) m.params.emplace(name, DenseArray::zeros(shape));
  return m;
}

ModelParams attach_lora(ModelParams model, const LoraSpec& spec, Rng& rng) {
  if (spec.rank <= 0) throw UsageError("lora rank must be positive");
  model.adapters.clear();
  for (const auto& [name, arr] : model.params) {
    if (arr.rank() != 2) continue;
    // A target names either a per-layer component ("wq") or a full parameter ("head.w").
    const bool in_layer = name.rfind("layers.", 0) == 0;
    bool hit = false;
    for (const auto& t : spec.targets) hit = hit || name == t || (in_layer && ends_with_component(name, t));
    if (!hit) continue;
    const std::size_t out = arr.shape[0], in = arr.shape[1];
    const auto r = static_cast<std::size_t>(spec.rank);
    if (r > std::min(in, out)) throw UsageError("lora rank exceeds matrix dimensions for " + name);
    LoraAdapter ad;
    ad.rank = spec.rank;
    ad.scale = spec.scale;
    ad.a = DenseArray::zeros({r, in});
    ad.b = DenseArray::zeros({out, r});
    Rng local = rng.fork(name);
    fill_normal(ad.a, 1.0 / std::sqrt(static_cast<double>(in)), local);
    model.adapters.emplace(name, std::move(ad));
  }
  return model;
}

void effective_weight(const DenseArray& base, const LoraAdapter& ad, float* out) {
  const std::size_t rows = base.shape[0], cols = base.shape[1];
  const auto r = static_cast<std::size_t>(ad.rank);
  for (std::size_t o = 0; o < rows; ++o) {
    for (std::size_t i = 0; i < cols; ++i) {
      float s = 0.f;
      for (std::size_t k = 0; k < r; ++k) s = s + ad.b.data[o * r + k] * ad.a.data[k * cols + i];
      out[o * cols + i] = base.data[o * cols + i] + ad.scale * s;
    }
  }
}

ModelParams lora_merge(const ModelParams& model) {
  if (model.adapters.empty()) throw UsageError("lora_merge: model has no adapters");
  model.validate();
  ModelParams merged = model;
  for (const auto& [name, ad] : model.adapters) {
    DenseArray& w = merged.at(name);
    std::vector<float> out(w.data.size());
    effective_weight(model.at(name), ad, out.data());
    w.data = std::move(out);
  }
  merged.adapters.clear();
  return merged;
}

}  // namespace pvtrace::lm
