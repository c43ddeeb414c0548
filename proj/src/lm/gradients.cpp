// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "gradients.hpp"

#include <algorithm>

#include "engine.hpp"
#include "pvtrace/simd/kernels.hpp"
#include "pvtrace/util/error.hpp"
#include "pvtrace/util/parallel.hpp"

namespace pvtrace::lm {
namespace {

constexpr std::size_t kMaxGroups = 16;

void push(TrainableSet& s, std::string name, std::vector<std::size_t> shape) {
  const std::size_t sz = element_count(shape);
  s.names.push_back(std::move(name));
  s.shapes.push_back(std::move(shape));
  s.offsets.push_back(s.total);
  s.sizes.push_back(sz);
  s.total += sz;
}

}  // namespace

TrainableSet trainable_set(const ModelParams& model, bool adapters_only) {
  TrainableSet s;
  s.adapters_only = adapters_only;
  if (!adapters_only) {
    for (const auto& [name, arr] : model.params) push(s, name, arr.shape);
  }
  for (const auto& [name, ad] : model.adapters) {
    push(s, "adapters/" + name + ".a", ad.a.shape);
    push(s, "adapters/" + name + ".b", ad.b.shape);
  }
  return s;
}

std::vector<float*> trainable_storage(ModelParams& model, const TrainableSet& set) {
  std::vector<float*> out;
  out.reserve(set.names.size());
  for (const auto& name : set.names) {
    if (name.rfind("adapters/", 0) == 0) {
      const std::string rest = name.substr(9);
      const std::string base = rest.substr(0, rest.size() - 2);
      auto it = model.adapters.find(base);
      if (it == model.adapters.end()) throw UsageError("missing adapter: " + base);
      out.push_back(rest.back() == 'a' ? it->second.a.data.data() : it->second.b.data.data());
    } else {
      out.push_back(model.at(name).data.data());
    }
  }
  return out;
}

double compute_gradients(const ModelParams& model, std::span<const TokenSequence> batch,
                         const TrainableSet& set, std::vector<float>& flat) {
  if (batch.empty()) throw UsageError("empty batch");
  for (const auto& seq : batch) engine::check_sequence(model.config, seq.ids);

  std::vector<std::string> base_names;
  if (set.adapters_only) {
    for (const auto& [name, ad] : model.adapters) base_names.push_back(name);
  } else {
    for (const auto& [name, arr] : model.params) base_names.push_back(name);
  }
  const engine::Weights weights = engine::bind_weights(model);
  const engine::GradLayout layout = engine::make_layout(model, base_names);

  // Sequences are split into contiguous groups that depend only on the batch
  // size; each group is summed in order into its own buffer.
  const std::size_t n = batch.size();
  const std::size_t per_group = (n + kMaxGroups - 1) / kMaxGroups;
  const std::size_t groups = (n + per_group - 1) / per_group;
  std::vector<std::vector<float>> buffers(groups);
  std::vector<double> losses(n, 0.0);
  const float inv_batch = 1.f / static_cast<float>(n);

  parallel_for(groups, [&](std::size_t gi) {
    auto& buf = buffers[gi];
    buf.assign(layout.total, 0.f);
    const auto slots = engine::bind_grads(model.config, layout, buf.data());
    engine::Cache cache;
    const std::size_t lo = gi * per_group, hi = std::min(n, lo + per_group);
    for (std::size_t s = lo; s < hi; ++s) {
      const auto lp = engine::forward(weights, batch[s].ids, cache);
      double sum = 0.0;
      for (float v : lp) sum += v;
      losses[s] = -sum / static_cast<double>(lp.size());
      const float w = inv_batch / static_cast<float>(lp.size());
      engine::backward(weights, batch[s].ids, cache, w, slots);
    }
  });

  std::vector<float> total = std::move(buffers[0]);
  for (std::size_t gi = 1; gi < groups; ++gi) simd::active().add(buffers[gi].data(), total.data(), layout.total);

  flat.assign(set.total, 0.f);
  for (std::size_t i = 0; i < set.names.size(); ++i) {
    const std::string& name = set.names[i];
    float* dst = flat.data() + set.offsets[i];
    if (name.rfind("adapters/", 0) != 0) {
      const float* src = total.data() + layout.find(name);
      std::copy(src, src + set.sizes[i], dst);
      continue;
    }
    const std::string rest = name.substr(9);
    const std::string base = rest.substr(0, rest.size() - 2);
    const LoraAdapter& ad = model.adapters.at(base);
    const DenseArray& w = model.at(base);
    const std::size_t out = w.shape[0], in = w.shape[1], r = static_cast<std::size_t>(ad.rank);
    const float* gw = total.data() + layout.find(base);
    const auto& K = simd::active();
    if (rest.back() == 'a') {
      // dA = scale * B^T G
      for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t k = 0; k < r; ++k) {
          const float coef = ad.scale * ad.b.data[o * r + k];
          if (coef != 0.f) K.axpy(coef, gw + o * in, dst + k * in, in);
        }
      }
    } else {
      // dB = scale * G A^T
      for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t k = 0; k < r; ++k) dst[o * r + k] = ad.scale * K.dot(gw + o * in, &ad.a.data[k * in], in);
      }
    }
  }

  double loss = 0.0;
  for (double l : losses) loss += l;
  return loss / static_cast<double>(n);
}

}  // namespace pvtrace::lm
