// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/cli/config.hpp"

#include <cstdio>
#include <set>

#include "pvtrace/attacks/input.hpp"
#include "pvtrace/attacks/merge.hpp"
#include "pvtrace/attacks/prune.hpp"
#include "pvtrace/util/error.hpp"
#include "pvtrace/util/rng.hpp"

namespace pvtrace::cli {

namespace {

const char* const kStages[] = {"split",     "model",  "pretrain", "inject",      "reference",
                               "lexicon",   "verify", "benign",   "incremental", "remove",
                               "harmlessness"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

template <class T>
T required(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw UsageError(where + ": missing \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw UsageError(where + ": bad value for \"" + key + "\"");
  }
}

}  // namespace

std::string AttackEntry::name() const {
  const Json& p = parameters;
  if (attack == "prune") {
    return "fingerprinted.prune." + p.value("strategy", std::string("l1")) + ".r" + fmt(p.value("ratio", 0.0));
  }
  if (attack == "merge") {
    const auto strategy = attacks::parse_merge_strategy(p.value("strategy", std::string("task_arithmetic")));
    std::string n = "fingerprinted." + attacks::to_string(strategy) + ".a" + fmt(p.value("alpha", 0.5));
    if (strategy == attacks::MergeStrategy::kTies || strategy == attacks::MergeStrategy::kDareTies) {
      n += ".k" + fmt(p.value("trim_keep_fraction", 0.2));
    }
    if (strategy == attacks::MergeStrategy::kDareTask || strategy == attacks::MergeStrategy::kDareTies) {
      n += ".p" + fmt(p.value("dare_drop_rate", 0.5));
    }
    return n;
  }
  if (attack == "incremental") return "fingerprinted.incremental.e" + std::to_string(p.value("epochs", 2));
  if (attack == "remove") return "fingerprinted.rp.r" + fmt(p.value("ratio", 0.05));
  throw UsageError("unknown attack: " + attack);
}

Json AttackEntry::to_json() const {
  Json j{{"attack", attack}, {"parameters", parameters}};
  if (seed) j["seed"] = *seed;
  return j;
}

AttackEntry AttackEntry::from_json(const Json& j) {
  AttackEntry a;
  a.attack = required<std::string>(j, "attack", "attack entry");
  a.parameters = j.value("parameters", Json::object());
  if (j.contains("seed")) a.seed = required<std::uint64_t>(j, "seed", "attack entry");
  a.name();  // rejects unknown kinds and strategies early
  return a;
}

void ExperimentConfig::validate() const {
  if (corpus.empty()) throw UsageError("config: corpus path is empty");
  if (n_tr == 0 || n_ref == 0 || n_unseen == 0) throw UsageError("config: split sizes must be positive");
  if (n_pretrain == 0 || n_holdout == 0) throw UsageError("config: pretrain and holdout slices must be non-empty");
  if (k <= 0) throw UsageError("config: k must be positive");
  if (!(ratio > 0 && ratio <= 1)) throw UsageError("config: ratio must be in (0, 1]");
  if (!(fpr_budget > 0 && fpr_budget < 1)) throw UsageError("config: fpr_budget must be in (0, 1)");
  for (const auto* c : {&pretrain, &injection, &reference, &benign, &incremental}) c->validate();
  std::set<std::string> names;
  for (const auto& a : attacks) {
    if (!names.insert(a.name()).second) throw UsageError("config: duplicate attack " + a.name());
  }
  for (std::size_t s : harmlessness.sizes) {
    if (s == 0) throw UsageError("config: harmlessness sizes must be positive");
  }
}

Json ExperimentConfig::to_json() const {
  Json attack_list = Json::array();
  for (const auto& a : attacks) attack_list.push_back(a.to_json());
  return Json{{"corpus", corpus},
              {"model", model.to_json()},
              {"split", {{"n_tr", n_tr}, {"n_ref", n_ref}, {"n_unseen", n_unseen}}},
              {"slices",
               {{"pretrain", n_pretrain}, {"aux", n_aux}, {"benign", n_benign}, {"holdout", n_holdout}}},
              {"training",
               {{"pretrain", pretrain.to_json()},
                {"injection", injection.to_json()},
                {"reference", reference.to_json()},
                {"benign", benign.to_json()},
                {"incremental", incremental.to_json()},
                {"lora", lora.to_json()},
                {"attack_lora", attack_lora.to_json()}}},
              {"perturbation", {{"k", k}, {"ratio", ratio}, {"lexicon", lexicon}}},
              {"verification", {{"fpr_budget", fpr_budget}, {"calibrated", calibrated}}},
              {"prune_calibration", prune_calibration},
              {"attacks", attack_list},
              {"harmlessness", {{"sizes", harmlessness.sizes}, {"epochs", harmlessness.epochs}}},
              {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  ExperimentConfig c = default_experiment_config();
  try {
    c.corpus = j.value("corpus", c.corpus);
    if (j.contains("model")) c.model = lm::ModelConfig::from_json(j.at("model"));
    if (j.contains("split")) {
      const Json& s = j.at("split");
      c.n_tr = s.value("n_tr", c.n_tr);
      c.n_ref = s.value("n_ref", c.n_ref);
      c.n_unseen = s.value("n_unseen", c.n_unseen);
    }
    if (j.contains("slices")) {
      const Json& s = j.at("slices");
      c.n_pretrain = s.value("pretrain", c.n_pretrain);
      c.n_aux = s.value("aux", c.n_aux);
      c.n_benign = s.value("benign", c.n_benign);
      c.n_holdout = s.value("holdout", c.n_holdout);
    }
    if (j.contains("training")) {
      const Json& t = j.at("training");
      auto train = [&](const char* key, lm::TrainConfig& dst) {
        if (t.contains(key)) dst = lm::TrainConfig::from_json(t.at(key));
      };
      train("pretrain", c.pretrain);
      train("injection", c.injection);
      train("reference", c.reference);
      train("benign", c.benign);
      train("incremental", c.incremental);
      if (t.contains("lora")) c.lora = lm::LoraSpec::from_json(t.at("lora"));
      if (t.contains("attack_lora")) c.attack_lora = lm::LoraSpec::from_json(t.at("attack_lora"));
    }
    if (j.contains("perturbation")) {
      const Json& p = j.at("perturbation");
      c.k = p.value("k", c.k);
      c.ratio = p.value("ratio", c.ratio);
      c.lexicon = p.value("lexicon", c.lexicon);
    }
    if (j.contains("verification")) {
      const Json& v = j.at("verification");
      c.fpr_budget = v.value("fpr_budget", c.fpr_budget);
      c.calibrated = v.value("calibrated", c.calibrated);
    }
    c.prune_calibration = j.value("prune_calibration", c.prune_calibration);
    if (j.contains("attacks")) {
      c.attacks.clear();
      for (const auto& a : j.at("attacks")) c.attacks.push_back(AttackEntry::from_json(a));
    }
    if (j.contains("harmlessness")) {
      const Json& h = j.at("harmlessness");
      c.harmlessness.sizes = h.value("sizes", c.harmlessness.sizes);
      c.harmlessness.epochs = h.value("epochs", c.harmlessness.epochs);
    }
    c.seed = j.value("seed", c.seed);
  } catch (const Json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string ExperimentConfig::hash() const { return hex64(fnv1a64(canonical_line(to_json()))); }

std::uint64_t ExperimentConfig::stage_seed(const std::string& stage) const { return derive_seed(seed, stage); }

std::uint64_t ExperimentConfig::attack_seed(const AttackEntry& a) const {
  if (a.seed) return *a.seed;
  // One seed per pruning strategy keeps random masks nested across ratios.
  if (a.attack == "prune") return stage_seed("prune/" + a.parameters.value("strategy", std::string("l1")));
  return stage_seed("attack/" + a.name());
}

std::map<std::string, std::uint64_t> ExperimentConfig::stage_seeds() const {
  std::map<std::string, std::uint64_t> out;
  for (const char* s : kStages) out[s] = stage_seed(s);
  for (const auto& a : attacks) out["attack/" + a.name()] = attack_seed(a);
  return out;
}

lm::TrainConfig ExperimentConfig::stage_train_config(const std::string& stage) const {
  lm::TrainConfig cfg;
  if (stage == "pretrain") {
    cfg = pretrain;
  } else if (stage == "inject") {
    cfg = injection;
  } else if (stage == "reference") {
    cfg = reference;
  } else if (stage == "benign") {
    cfg = benign;
  } else if (stage == "incremental") {
    cfg = incremental;
  } else {
    throw UsageError("no training config for stage " + stage);
  }
  cfg.seed = stage_seed(stage);
  return cfg;
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.model.d_model = 32;
  c.model.n_layers = 2;
  c.model.n_heads = 2;
  c.model.context_len = 48;
  c.model.ff_mult = 4;

  c.pretrain.learning_rate = 3e-3;
  c.pretrain.epochs = 3;
  c.pretrain.batch_size = 16;
  c.pretrain.schedule = lm::LrSchedule::kCosine;

  c.injection.learning_rate = 3e-3;
  c.injection.epochs = 20;
  c.injection.batch_size = 4;
  c.injection.train_adapters_only = true;

  c.reference = c.injection;
  c.reference.epochs = 4;

  c.benign.learning_rate = 3e-3;
  c.benign.epochs = 5;
  c.benign.batch_size = 16;
  c.benign.train_adapters_only = true;

  c.incremental = c.benign;
  c.incremental.epochs = 2;

  c.lora.rank = 16;
  c.lora.scale = 2.f;
  c.lora.targets = {"wq", "wk", "wv", "wo", "w1", "w2", "head.w"};

  c.attacks = default_attack_matrix();
  return c;
}

std::vector<AttackEntry> default_attack_matrix() {
  std::vector<AttackEntry> out;
  for (const char* s : {"random", "l1", "l2", "taylor"}) {
    for (double r : attacks::kPruneRatios) out.push_back({"prune", {{"strategy", s}, {"ratio", r}}, {}});
  }
  for (const char* s : {"task_arithmetic", "ties", "dare_task", "dare_ties"}) {
    for (int i = 1; i <= 9; ++i) out.push_back({"merge", {{"strategy", s}, {"alpha", i / 10.0}}, {}});
  }
  out.push_back({"incremental", {{"epochs", 2}}, {}});
  for (double r : attacks::kRemovePresets) out.push_back({"remove", {{"ratio", r}}, {}});
  return out;
}

ExperimentConfig read_config(const std::filesystem::path& path) {
  return ExperimentConfig::from_json(read_json_file(path));
}

Json RunManifest::to_json() const {
  return Json{{"config_hash", config_hash},
              {"artifacts", artifacts},
              {"timestamps", timestamps},
              {"tool_version", tool_version}};
}

RunManifest RunManifest::from_json(const Json& j) {
  RunManifest m;
  m.config_hash = j.value("config_hash", std::string());
  m.artifacts = j.value("artifacts", m.artifacts);
  m.timestamps = j.value("timestamps", m.timestamps);
  m.tool_version = j.value("tool_version", m.tool_version);
  return m;
}

}  // namespace pvtrace::cli
