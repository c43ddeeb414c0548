// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/attacks/merge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pvtrace/util/error.hpp"
#include "pvtrace/util/rng.hpp"

namespace pvtrace::attacks {

namespace {

void check_compatible(const lm::ModelParams& a, const lm::ModelParams& b) {
  if (!a.adapters.empty() || !b.adapters.empty()) throw UsageError("merge: fold adapters before merging");
  if (a.params.size() != b.params.size()) throw UsageError("merge: parameter sets differ");
  for (const auto& [name, arr] : a.params) {
    auto it = b.params.find(name);
    if (it == b.params.end()) throw UsageError("merge: parameter sets differ at " + name);
    if (it->second.shape != arr.shape) throw UsageError("merge: shape mismatch at " + name);
  }
}

void check_deltas(const lm::ModelParams& theta_0, std::span<const TaskVector> deltas, std::span<const double> gammas) {
  if (deltas.size() != gammas.size()) throw UsageError("merge: one weight per task vector");
  for (const auto& tv : deltas) {
    if (tv.deltas.size() != theta_0.params.size()) throw UsageError("merge: task vector does not match base");
    for (const auto& [name, d] : tv.deltas) {
      auto it = theta_0.params.find(name);
      if (it == theta_0.params.end() || it->second.shape != d.shape) {
        throw UsageError("merge: shape mismatch at " + name);
      }
    }
  }
}

lm::ModelParams add_to_base(const lm::ModelParams& theta_0, const std::map<std::string, std::vector<double>>& sum) {
  lm::ModelParams out = theta_0;
  for (auto& [name, arr] : out.params) {
    const auto& s = sum.at(name);
    for (std::size_t i = 0; i < arr.size(); ++i) arr.data[i] = static_cast<float>(double(arr.data[i]) + s[i]);
  }
  return out;
}

double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

}  // namespace

TaskVector task_vector(const lm::ModelParams& theta_i, const lm::ModelParams& theta_0) {
  check_compatible(theta_i, theta_0);
  TaskVector tv;
  for (const auto& [name, arr] : theta_i.params) {
    const auto& base = theta_0.params.at(name);
    DeltaArray d{arr.shape, std::vector<double>(arr.size())};
    for (std::size_t i = 0; i < arr.size(); ++i) d.data[i] = double(arr.data[i]) - double(base.data[i]);
    tv.deltas.emplace(name, std::move(d));
  }
  return tv;
}

lm::ModelParams merge_task_arithmetic(const lm::ModelParams& theta_0, std::span<const TaskVector> deltas,
                                      std::span<const double> gammas) {
  if (!theta_0.adapters.empty()) throw UsageError("merge: fold adapters before merging");
  check_deltas(theta_0, deltas, gammas);
  std::map<std::string, std::vector<double>> sum;
  for (const auto& [name, arr] : theta_0.params) {
    auto& s = sum[name];
    s.assign(arr.size(), 0.0);
    for (std::size_t m = 0; m < deltas.size(); ++m) {
      const auto& d = deltas[m].deltas.at(name).data;
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += gammas[m] * d[i];
    }
  }
  return add_to_base(theta_0, sum);
}

TaskVector trim(const TaskVector& delta, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw UsageError("trim: keep fraction must be in (0, 1]");
  TaskVector out = delta;
  for (auto& [name, d] : out.deltas) {
    const std::size_t n = d.data.size();
    const std::size_t keep =
        std::min(n, static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(d.data[a]) > std::abs(d.data[b]); });
    for (std::size_t i = keep; i < n; ++i) d.data[order[i]] = 0.0;
  }
  return out;
}

lm::ModelParams ties_merge(const lm::ModelParams& theta_0, std::span<const TaskVector> deltas,
                           std::span<const double> gammas, double keep_fraction) {
  if (!theta_0.adapters.empty()) throw UsageError("merge: fold adapters before merging");
  check_deltas(theta_0, deltas, gammas);
  std::vector<TaskVector> trimmed;
  trimmed.reserve(deltas.size());
  for (const auto& d : deltas) trimmed.push_back(trim(d, keep_fraction));

  std::map<std::string, std::vector<double>> merged;
  for (const auto& [name, arr] : theta_0.params) {
    auto& out = merged[name];
    out.assign(arr.size(), 0.0);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      double vote = 0;
      for (std::size_t m = 0; m < trimmed.size(); ++m) vote += gammas[m] * trimmed[m].deltas.at(name).data[i];
      const double elected = sign(vote);
      if (elected == 0) continue;
      double sum = 0;
      std::size_t count = 0;
      for (std::size_t m = 0; m < trimmed.size(); ++m) {
        const double v = gammas[m] * trimmed[m].deltas.at(name).data[i];
        if (sign(v) == elected) {
          sum += v;
          ++count;
        }
      }
      if (count > 0) out[i] = sum / static_cast<double>(count);
    }
  }
  return add_to_base(theta_0, merged);
}

void dare_rescale(std::span<double> values, const std::vector<bool>& keep, double drop_rate) {
  if (keep.size() != values.size()) throw UsageError("dare: mask size mismatch");
  const double scale = 1.0 / (1.0 - drop_rate);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = keep[i] ? values[i] * scale : 0.0;
}

TaskVector dare(const TaskVector& delta, double drop_rate, std::uint64_t seed) {
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw UsageError("dare: drop rate must be in [0, 1)");
  TaskVector out = delta;
  if (drop_rate == 0.0) return out;
  for (auto& [name, d] : out.deltas) {
    Rng rng(derive_seed(seed, name));
    std::vector<bool> keep(d.data.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = !rng.bernoulli(drop_rate);
    dare_rescale(d.data, keep, drop_rate);
  }
  return out;
}

std::string to_string(MergeStrategy s) {
  switch (s) {
    case MergeStrategy::kTaskArithmetic: return "task_arithmetic";
    case MergeStrategy::kTies: return "ties";
    case MergeStrategy::kDareTask: return "dare_task";
    case MergeStrategy::kDareTies: return "dare_ties";
  }
  return "?";
}

MergeStrategy parse_merge_strategy(const std::string& name) {
  for (auto s : {MergeStrategy::kTaskArithmetic, MergeStrategy::kTies, MergeStrategy::kDareTask,
                 MergeStrategy::kDareTies}) {
    if (to_string(s) == name) return s;
  }
  throw UsageError("unknown merge strategy: " + name);
}

lm::ModelParams merge(const lm::ModelParams& theta_0, std::span<const lm::ModelParams> models, const MergeSpec& spec) {
  if (models.empty()) throw UsageError("merge: no input models");
  if (spec.gammas.size() != models.size()) throw UsageError("merge: one weight per input model");
  const lm::ModelParams base = theta_0.adapters.empty() ? theta_0 : lm::lora_merge(theta_0);
  std::vector<TaskVector> deltas;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    auto tv = task_vector(m.adapters.empty() ? m : lm::lora_merge(m), base);
    if (spec.strategy == MergeStrategy::kDareTask || spec.strategy == MergeStrategy::kDareTies) {
      tv = dare(tv, spec.dare_drop_rate, derive_seed(spec.seed, "dare/" + std::to_string(i)));
    }
    deltas.push_back(std::move(tv));
  }
  switch (spec.strategy) {
    case MergeStrategy::kTaskArithmetic:
    case MergeStrategy::kDareTask:
      return merge_task_arithmetic(base, deltas, spec.gammas);
    case MergeStrategy::kTies:
    case MergeStrategy::kDareTies:
      return ties_merge(base, deltas, spec.gammas, spec.trim_keep_fraction);
  }
  throw UsageError("merge: unknown strategy");
}

lm::ModelParams incremental_finetune(const lm::ModelParams& model, std::span<const lm::TokenSequence> data,
                                     const lm::TrainConfig& cfg, const lm::LoraSpec& lora) {
  lm::ModelParams start = model.adapters.empty() ? model : lm::lora_merge(model);
  Rng rng(derive_seed(cfg.seed, "lora"));
  start = lm::attach_lora(std::move(start), lora, rng);
  lm::TrainConfig c = cfg;
  c.train_adapters_only = true;
  return lm::lora_merge(lm::train(start, data, c));
}

}  // namespace pvtrace::attacks
