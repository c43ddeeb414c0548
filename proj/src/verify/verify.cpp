// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/verify/verify.hpp"

#include <cmath>
#include <cstdio>

#include "pvtrace/attacks/input.hpp"
#include "pvtrace/util/error.hpp"
#include "pvtrace/util/parallel.hpp"
#include "pvtrace/util/rng.hpp"

namespace pvtrace::verify {

double probabilistic_variation(double original, std::span<const double> positives,
                               std::span<const double> negatives) {
  if (positives.empty() || positives.size() != negatives.size()) {
    throw UsageError("variation needs K positive and K negative neighbours");
  }
  double sum = 0;
  for (std::size_t k = 0; k < positives.size(); ++k) sum += positives[k] + negatives[k];
  return sum / (2.0 * static_cast<double>(positives.size())) - original;
}

double probabilistic_variation(const lm::Scorer& model, const perturb::PerturbationSet& pset,
                               const lm::Vocabulary& vocab, const QueryTransform& transform,
                               const std::string& sample_id) {
  const auto context = static_cast<std::size_t>(model.config().context_len);
  auto lp = [&](const std::string& text, int variant) {
    const std::string query = transform ? transform(text, sample_id, variant) : text;
    return model.mean_logprob(lm::truncate(lm::tokenize(vocab, query), context));
  };
  const int k = static_cast<int>(pset.k());
  std::vector<double> pos(pset.k()), neg(pset.k());
  for (int i = 0; i < k; ++i) {
    pos[i] = lp(pset.positives[i], 1 + i);
    neg[i] = lp(pset.negatives[i], 1 + k + i);
  }
  return probabilistic_variation(lp(pset.original, 0), pos, neg);
}

double calibrated_signal(double pv_suspect, double pv_reference) {
  if (!std::isfinite(pv_suspect) || !std::isfinite(pv_reference)) throw UsageError("non-finite variation");
  return pv_suspect - pv_reference;
}

double uncalibrated_signal(double pv_suspect) {
  if (!std::isfinite(pv_suspect)) throw UsageError("non-finite variation");
  return pv_suspect;
}

Json PVScore::to_json() const {
  Json j{{"sample_id", sample_id}, {"pv_suspect", pv_suspect}, {"delta", delta},
         {"score", score},         {"is_member", is_member}};
  j["pv_reference"] = pv_reference ? Json(*pv_reference) : Json(nullptr);
  return j;
}

Json VerifyOptions::to_json() const {
  return Json{{"k", k},
              {"ratio", ratio},
              {"seed", seed},
              {"fpr_budget", fpr_budget},
              {"calibrated", calibrated},
              {"remove_ratio", remove_ratio}};
}

VerifyOptions VerifyOptions::from_json(const Json& j) {
  VerifyOptions o;
  o.k = j.value("k", o.k);
  o.ratio = j.value("ratio", o.ratio);
  o.seed = j.value("seed", o.seed);
  o.fpr_budget = j.value("fpr_budget", o.fpr_budget);
  o.calibrated = j.value("calibrated", o.calibrated);
  o.remove_ratio = j.value("remove_ratio", o.remove_ratio);
  return o;
}

ProbeSet build_probes(const fingerprint::FingerprintSplit& split, const perturb::SubstitutionLexicon& lexicon,
                      const VerifyOptions& options, perturb::NeighborhoodCache* cache) {
  ProbeSet out;
  auto add = [&](const fingerprint::Corpus& corpus, bool member) {
    for (const auto& s : corpus.samples) {
      const std::uint64_t seed = derive_seed(options.seed, s.id);
      const auto key = perturb::cache_key(s.id, seed);
      if (cache != nullptr) {
        auto it = cache->find(key);
        if (it != cache->end() && it->second.k() == static_cast<std::size_t>(options.k) &&
            it->second.ratio == options.ratio) {
          out.probes.push_back({s.id, member, it->second});
          continue;
        }
      }
      try {
        auto pset = perturb::generate_neighborhood(s.text, options.k, options.ratio, lexicon, seed);
        if (cache != nullptr) (*cache)[key] = pset;
        out.probes.push_back({s.id, member, std::move(pset)});
      } catch (const UsageError& e) {
        if (std::string(e.what()) != "unperturbable sample") throw;
        (member ? out.skipped_members : out.skipped_unseen).push_back(s.id);
      }
    }
  };
  add(split.d_tr, true);
  add(split.d_unseen, false);
  return out;
}

QueryTransform suspect_transform(const VerifyOptions& options) {
  if (options.remove_ratio <= 0) return {};
  const double ratio = options.remove_ratio;
  const std::uint64_t base = derive_seed(options.seed, "remove");
  return [ratio, base](const std::string& text, const std::string& id, int variant) {
    return attacks::remove_perturbation(text, ratio, derive_seed(base, id + "/" + std::to_string(variant)));
  };
}

std::vector<double> score_probes(const lm::Scorer& model, const ProbeSet& probes, const lm::Vocabulary& vocab,
                                 const VerifyOptions& options) {
  const QueryTransform transform = suspect_transform(options);
  std::vector<double> pv(probes.probes.size());
  parallel_for(pv.size(), [&](std::size_t i) {
    const auto& p = probes.probes[i];
    pv[i] = probabilistic_variation(model, p.pset, vocab, transform, p.sample_id);
  });
  return pv;
}

VerificationReport assemble_report(const ProbeSet& probes, std::span<const double> pv_suspect,
                                   std::optional<std::span<const double>> pv_reference, const VerifyOptions& options) {
  const std::size_t n = probes.probes.size();
  if (pv_suspect.size() != n || (pv_reference && pv_reference->size() != n)) {
    throw UsageError("score count does not match probe count");
  }
  if (options.calibrated && !pv_reference) throw UsageError("calibrated verification needs a reference model");

  VerificationReport r;
  r.calibrated = options.calibrated;
  r.options = options;
  std::vector<double> member_scores, unseen_scores;
  for (std::size_t i = 0; i < n; ++i) {
    PVScore s;
    s.sample_id = probes.probes[i].sample_id;
    s.is_member = probes.probes[i].is_member;
    s.pv_suspect = pv_suspect[i];
    if (options.calibrated) {
      s.pv_reference = (*pv_reference)[i];
      s.delta = calibrated_signal(s.pv_suspect, *s.pv_reference);
    } else {
      s.delta = uncalibrated_signal(s.pv_suspect);
    }
    s.score = -s.delta;
    (s.is_member ? member_scores : unseen_scores).push_back(s.score);
    r.scores.push_back(std::move(s));
  }
  r.members_scored = member_scores.size();
  r.unseen_scored = unseen_scores.size();
  r.skipped = probes.skipped_members;
  r.skipped.insert(r.skipped.end(), probes.skipped_unseen.begin(), probes.skipped_unseen.end());
  if (member_scores.empty() || unseen_scores.empty()) {
    throw UsageError("no perturbable samples on one side of the split");
  }
  r.roc = sweep(member_scores, unseen_scores, options.fpr_budget);
  return r;
}

Json VerificationReport::to_json() const {
  Json s = Json::array();
  for (const auto& x : scores) s.push_back(x.to_json());
  return Json{{"scores", s},
              {"roc", roc.to_json()},
              {"counts", {{"members_scored", members_scored}, {"unseen_scored", unseen_scored}, {"skipped", skipped.size()}}},
              {"skipped", skipped},
              {"mode", calibrated ? "calibrated" : "uncalibrated"},
              {"config", options.to_json()},
              {"summary", summary_line()}};
}

std::string VerificationReport::summary_line() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "FSR=%.1f%%@AUC=%.3f", 100.0 * roc.fsr, roc.auc);
  return buf;
}

VerificationReport verify(const lm::ModelParams& suspect, const lm::ModelParams* reference,
                          const fingerprint::FingerprintSplit& split, const perturb::SubstitutionLexicon& lexicon,
                          const lm::Vocabulary& vocab, const VerifyOptions& options,
                          perturb::NeighborhoodCache* cache) {
  if (options.calibrated && reference == nullptr) throw UsageError("calibrated verification needs a reference model");
  const auto probes = build_probes(split, lexicon, options, cache);
  if (probes.probes.empty()) throw UsageError("every sample is unperturbable");
  const auto pv_suspect = score_probes(lm::Scorer(suspect), probes, vocab, options);
  if (!options.calibrated) return assemble_report(probes, pv_suspect, std::nullopt, options);
  // The reference belongs to the verifier, so its queries are never rewritten.
  VerifyOptions clean = options;
  clean.remove_ratio = 0;
  const auto pv_reference = score_probes(lm::Scorer(*reference), probes, vocab, clean);
  return assemble_report(probes, pv_suspect, std::span<const double>(pv_reference), options);
}

}  // namespace pvtrace::verify
