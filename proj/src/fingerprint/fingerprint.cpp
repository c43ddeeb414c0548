// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/fingerprint/fingerprint.hpp"

#include <unordered_map>
#include <unordered_set>

#include "pvtrace/util/error.hpp"
#include "pvtrace/util/rng.hpp"

namespace pvtrace::fingerprint {

namespace {

Corpus slice(const Corpus& corpus, const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
  Corpus out;
  out.samples.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.samples.push_back(corpus.samples[order[i]]);
  return out;
}

}  // namespace

Json FingerprintSplit::manifest() const {
  return Json{{"seed", seed},
              {"d_tr", d_tr.ids()},
              {"d_ref", d_ref.ids()},
              {"d_unseen", d_unseen.ids()},
              {"rest", rest.ids()}};
}

FingerprintSplit split_fingerprint_data(const Corpus& corpus, std::size_t n_tr, std::size_t n_ref,
                                        std::size_t n_unseen, std::uint64_t seed) {
  const std::size_t need = n_tr + n_ref + n_unseen;
  if (corpus.size() < need) {
    throw UsageError("corpus too small: need " + std::to_string(need) + " samples, have " +
                     std::to_string(corpus.size()));
  }
  corpus.validate();
  std::unordered_set<std::string> texts;
  for (const auto& s : corpus.samples) {
    const auto words = lm::normalize_words(s.text);
    if (!texts.insert(lm::join_words(words)).second) throw UsageError("duplicate text in corpus: " + s.id);
  }

  Rng rng(derive_seed(seed, "split"));
  const auto order = permutation(corpus.size(), rng);
  FingerprintSplit split;
  split.seed = seed;
  split.d_tr = slice(corpus, order, 0, n_tr);
  split.d_ref = slice(corpus, order, n_tr, n_tr + n_ref);
  split.d_unseen = slice(corpus, order, n_tr + n_ref, need);
  split.rest = slice(corpus, order, need, corpus.size());
  return split;
}

FingerprintSplit split_from_manifest(const Corpus& corpus, const Json& manifest) {
  std::unordered_map<std::string, const Sample*> by_id;
  for (const auto& s : corpus.samples) by_id[s.id] = &s;
  auto pick = [&](const char* key) {
    Corpus c;
    for (const auto& id : manifest.at(key)) {
      auto it = by_id.find(id.get<std::string>());
      if (it == by_id.end()) throw UsageError(std::string("split manifest references unknown id in ") + key);
      c.samples.push_back(*it->second);
    }
    return c;
  };
  FingerprintSplit split;
  split.seed = manifest.at("seed").get<std::uint64_t>();
  split.d_tr = pick("d_tr");
  split.d_ref = pick("d_ref");
  split.d_unseen = pick("d_unseen");
  if (manifest.contains("rest")) split.rest = pick("rest");
  return split;
}

lm::TrainConfig default_injection_config() {
  lm::TrainConfig cfg;
  cfg.epochs = 20;
  cfg.train_adapters_only = true;
  return cfg;
}

lm::TrainConfig default_reference_config() {
  lm::TrainConfig cfg = default_injection_config();
  cfg.epochs = 4;
  return cfg;
}

lm::TrainConfig short_injection_config() {
  lm::TrainConfig cfg = default_injection_config();
  cfg.epochs = 10;
  return cfg;
}

FineTuneResult fine_tune(const lm::ModelParams& base, const Corpus& data, const lm::Vocabulary& vocab,
                         const lm::TrainConfig& cfg, const lm::LoraSpec& lora, const std::string& stage) {
  if (!cfg.train_adapters_only) throw UsageError(stage + ": fingerprint fine-tuning must train adapters only");
  if (data.empty()) throw UsageError(stage + ": empty training data");
  lm::ModelParams start = base;
  if (start.adapters.empty()) {
    Rng rng(derive_seed(cfg.seed, "lora"));
    start = lm::attach_lora(std::move(start), lora, rng);
  }
  const auto seqs = encode(data, vocab, static_cast<std::size_t>(base.config.context_len));
  FineTuneResult result;
  result.log.stage = stage;
  result.log.data_ids = data.ids();
  result.model = lm::train(start, seqs, cfg, &result.log);
  return result;
}

FineTuneResult inject(const lm::ModelParams& base, const Corpus& d_tr, const lm::Vocabulary& vocab,
                      const lm::TrainConfig& cfg, const lm::LoraSpec& lora) {
  return fine_tune(base, d_tr, vocab, cfg, lora, "inject");
}

FineTuneResult train_reference(const lm::ModelParams& base, const Corpus& d_ref, const lm::Vocabulary& vocab,
                               const lm::TrainConfig& cfg, const lm::LoraSpec& lora) {
  return fine_tune(base, d_ref, vocab, cfg, lora, "reference");
}

}  // namespace pvtrace::fingerprint
