// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/lm/train.hpp"

#include <cmath>

#include "gradients.hpp"
#include "pvtrace/simd/kernels.hpp"
#include "pvtrace/util/error.hpp"
#include "pvtrace/util/rng.hpp"

namespace pvtrace::lm {

void TrainConfig::validate() const {
  const bool ok = std::isfinite(learning_rate) && learning_rate >= 0.0 && epochs >= 0 && batch_size > 0 &&
                  std::isfinite(beta1) && beta1 > 0.0 && beta1 < 1.0 && std::isfinite(beta2) && beta2 > 0.0 &&
                  beta2 < 1.0 && std::isfinite(eps) && eps > 0.0 && std::isfinite(weight_decay) &&
                  weight_decay >= 0.0 && learning_rate * weight_decay < 1.0;
  if (!ok) throw UsageError("train config: hyperparameters must be positive and finite");
}

Json TrainConfig::to_json() const {
  Json j{{"learning_rate", learning_rate},
         {"epochs", epochs},
         {"batch_size", batch_size},
         {"seed", seed},
         {"train_adapters_only", train_adapters_only},
         {"optimizer", optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
         {"beta1", beta1},
         {"beta2", beta2},
         {"eps", eps},
         {"weight_decay", weight_decay},
         {"schedule", schedule == LrSchedule::kCosine ? "cosine" : "constant"}};
  return j;
}

TrainConfig TrainConfig::from_json(const Json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.train_adapters_only = j.value("train_adapters_only", c.train_adapters_only);
  const std::string opt = j.value("optimizer", std::string("adam"));
  if (opt == "adam") {
    c.optimizer = OptimizerKind::kAdam;
  } else if (opt == "sgd") {
    c.optimizer = OptimizerKind::kSgd;
  } else {
    throw UsageError("unknown optimizer: " + opt);
  }
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  const std::string schedule = j.value("schedule", std::string("constant"));
  if (schedule == "cosine") {
    c.schedule = LrSchedule::kCosine;
  } else if (schedule != "constant") {
    throw UsageError("unknown learning-rate schedule: " + schedule);
  }
  return c;
}

Json TrainLog::to_json() const {
  return Json{{"stage", stage},
              {"data_ids", data_ids},
              {"config", config},
              {"steps_per_epoch", steps_per_epoch},
              {"total_steps", total_steps},
              {"epoch_loss", epoch_loss}};
}

ModelParams train(const ModelParams& model, std::span<const TokenSequence> data, const TrainConfig& cfg,
                  TrainLog* log) {
  cfg.validate();
  if (data.empty()) throw UsageError("train: empty dataset");
  if (cfg.train_adapters_only && model.adapters.empty()) {
    throw UsageError("train: train_adapters_only requires adapters");
  }
  model.validate();

  ModelParams out = model;
  const TrainableSet set = trainable_set(out, cfg.train_adapters_only);
  std::vector<float> m(set.total, 0.f), v(set.total, 0.f), grad;
  const auto& K = simd::active();

  const std::size_t n = data.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const int steps_per_epoch = static_cast<int>((n + bs - 1) / bs);
  if (log != nullptr) {
    log->config = cfg.to_json();
    log->steps_per_epoch = steps_per_epoch;
    log->total_steps = 0;
    log->epoch_loss.clear();
  }

  Rng rng(derive_seed(cfg.seed, "train"));
  const double total_steps = static_cast<double>(steps_per_epoch) * cfg.epochs;
  long step = 0;
  std::vector<TokenSequence> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = permutation(n, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      batch.clear();
      for (std::size_t i = start; i < std::min(n, start + bs); ++i) batch.push_back(data[order[i]]);
      double loss = 0;
      try {
        loss = compute_gradients(out, batch, set, grad);
      } catch (const NumericalError&) {
        throw NumericalError("training diverged");
      }
      if (!std::isfinite(loss)) throw NumericalError("training diverged");
      epoch_loss += loss;
      double lr = cfg.learning_rate;
      if (cfg.schedule == LrSchedule::kCosine) lr *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps));
      ++step;

      auto storage = trainable_storage(out, set);
      if (cfg.weight_decay > 0) {
        // Decoupled decay on base matrices; vectors and adapters are exempt.
        const float keep = static_cast<float>(1.0 - lr * cfg.weight_decay);
        for (std::size_t i = 0; i < set.names.size(); ++i) {
          if (set.shapes[i].size() == 2 && set.names[i].rfind("adapters/", 0) != 0) K.scale(keep, storage[i], set.sizes[i]);
        }
      }
      if (cfg.optimizer == OptimizerKind::kAdam) {
        simd::AdamStep s{};
        s.lr = static_cast<float>(lr);
        s.beta1 = static_cast<float>(cfg.beta1);
        s.beta2 = static_cast<float>(cfg.beta2);
        s.eps = static_cast<float>(cfg.eps);
        s.bias_correction1 = static_cast<float>(1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
        s.bias_correction2 = static_cast<float>(1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
        for (std::size_t i = 0; i < set.names.size(); ++i) {
          const std::size_t off = set.offsets[i];
          K.adam(s, grad.data() + off, storage[i], m.data() + off, v.data() + off, set.sizes[i]);
        }
      } else {
        const float neg_lr = -static_cast<float>(lr);
        for (std::size_t i = 0; i < set.names.size(); ++i) {
          K.axpy(neg_lr, grad.data() + set.offsets[i], storage[i], set.sizes[i]);
        }
      }
      for (std::size_t i = 0; i < set.names.size(); ++i) {
        for (std::size_t k = 0; k < set.sizes[i]; ++k) {
          if (!std::isfinite(storage[i][k])) throw NumericalError("training diverged");
        }
      }
    }
    if (log != nullptr) log->epoch_loss.push_back(epoch_loss / steps_per_epoch);
  }
  if (log != nullptr) log->total_steps = static_cast<int>(step);
  return out;
}

}  // namespace pvtrace::lm
