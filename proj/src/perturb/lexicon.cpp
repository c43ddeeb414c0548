// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/perturb/lexicon.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "pvtrace/util/error.hpp"
#include "pvtrace/util/rng.hpp"

namespace pvtrace::perturb {

const Substitutes* SubstitutionLexicon::find(const std::string& word) const {
  auto it = entries.find(word);
  if (it == entries.end() || it->second.pos.empty() || it->second.neg.empty()) return nullptr;
  return &it->second;
}

void SubstitutionLexicon::validate(const lm::Vocabulary& vocab) const {
  for (const auto& [word, subs] : entries) {
    std::set<std::string> pos(subs.pos.begin(), subs.pos.end());
    for (const auto& list : {subs.pos, subs.neg}) {
      for (const auto& r : list) {
        if (r == word) throw UsageError("lexicon maps a word to itself: " + word);
        if (!vocab.contains(r)) throw UsageError("lexicon replacement not in vocabulary: " + r);
      }
    }
    for (const auto& r : subs.neg) {
      if (pos.count(r)) throw UsageError("lexicon lists overlap for: " + word);
    }
  }
}

Json SubstitutionLexicon::to_json() const {
  Json j = Json::object();
  for (const auto& [word, subs] : entries) j[word] = Json{{"pos", subs.pos}, {"neg", subs.neg}};
  return j;
}

SubstitutionLexicon SubstitutionLexicon::from_json(const Json& j) {
  SubstitutionLexicon lex;
  for (const auto& [word, subs] : j.items()) {
    lex.entries[word] = {subs.at("pos").get<std::vector<std::string>>(),
                         subs.at("neg").get<std::vector<std::string>>()};
  }
  return lex;
}

SubstitutionLexicon read_lexicon(const std::filesystem::path& path) {
  return SubstitutionLexicon::from_json(read_json_file(path));
}

void write_lexicon(const std::filesystem::path& path, const SubstitutionLexicon& lexicon) {
  write_json_file(path, lexicon.to_json());
}

namespace {

using Features = std::unordered_map<std::size_t, double>;

double cosine(const Features& a, double na, const Features& b, double nb) {
  const Features& small = a.size() < b.size() ? a : b;
  const Features& large = a.size() < b.size() ? b : a;
  double dot = 0;
  for (const auto& [f, v] : small) {
    auto it = large.find(f);
    if (it != large.end()) dot += v * it->second;
  }
  return na > 0 && nb > 0 ? dot / (na * nb) : 0.0;
}

}  // namespace

SubstitutionLexicon build_default_lexicon(const fingerprint::Corpus& corpus, const lm::Vocabulary& vocab,
                                          std::uint64_t seed, const LexiconOptions& options) {
  if (corpus.empty()) throw UsageError("lexicon: empty corpus");

  // Word index local to the corpus; boundary markers get their own ids.
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::string> words;
  std::vector<std::size_t> counts;
  auto intern = [&](const std::string& w) {
    auto [it, fresh] = index.emplace(w, words.size());
    if (fresh) {
      words.push_back(w);
      counts.push_back(0);
    }
    return it->second;
  };
  const std::size_t bos = intern("<bos>"), eos = intern("<eos>");

  // Context features: (offset slot, neighbour id) for offsets -3..-1, +1..+3.
  constexpr std::size_t kWindow = 3, kSlots = 2 * kWindow;
  std::vector<Features> feats;
  for (const auto& s : corpus.samples) {
    std::vector<std::size_t> ids(kWindow, bos);
    for (const auto& w : lm::normalize_words(s.text)) ids.push_back(intern(w));
    ids.insert(ids.end(), kWindow, eos);
    if (feats.size() < words.size()) feats.resize(words.size());
    for (std::size_t i = kWindow; i + kWindow < ids.size(); ++i) {
      const std::size_t w = ids[i];
      ++counts[w];
      for (std::size_t d = 1; d <= kWindow; ++d) {
        feats[w][ids[i - d] * kSlots + (kWindow - d)] += 1.0;
        feats[w][ids[i + d] * kSlots + (kWindow + d - 1)] += 1.0;
      }
    }
  }

  std::vector<std::size_t> content;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (w == bos || w == eos) continue;
    if (counts[w] >= options.min_count && words[w].size() >= options.min_length && vocab.contains(words[w])) {
      content.push_back(w);
    }
  }
  std::sort(content.begin(), content.end(), [&](std::size_t a, std::size_t b) { return words[a] < words[b]; });

  // Positive pointwise mutual information per (slot, neighbour) feature, so
  // that contexts shared by every word (articles, boundaries) carry little
  // weight.
  std::unordered_map<std::size_t, double> feature_totals;
  double total = 0;
  for (const auto& f : feats) {
    for (const auto& [key, v] : f) {
      feature_totals[key] += v;
      total += v;
    }
  }
  for (std::size_t w = 0; w < feats.size(); ++w) {
    double row = 0;
    for (const auto& [key, v] : feats[w]) row += v;
    for (auto it = feats[w].begin(); it != feats[w].end();) {
      const double pmi = std::log(it->second * total / (row * feature_totals[it->first]));
      if (pmi > 0) {
        it->second = pmi;
        ++it;
      } else {
        it = feats[w].erase(it);
      }
    }
  }

  std::vector<double> norms(words.size(), 0.0);
  for (std::size_t w : content) {
    double s = 0;
    for (const auto& [f, v] : feats[w]) s += v * v;
    norms[w] = std::sqrt(s);
  }
  auto band = [&](std::size_t w) { return static_cast<int>(std::floor(std::log2(double(counts[w])))); };
  std::vector<std::uint64_t> tiebreak(words.size());
  for (std::size_t w : content) tiebreak[w] = derive_seed(seed, words[w]);

  SubstitutionLexicon lex;
  const std::size_t n = content.size();
  std::vector<double> sim(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t w = content[i];
    for (std::size_t j = 0; j < n; ++j) sim[j] = i == j ? 0.0 : cosine(feats[w], norms[w], feats[content[j]], norms[content[j]]);

    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) order.push_back(j);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (sim[a] != sim[b]) return sim[a] > sim[b];
      return tiebreak[content[a]] < tiebreak[content[b]];
    });
    Substitutes subs;
    std::set<std::size_t> taken;
    for (std::size_t j : order) {
      if (subs.pos.size() == options.n_pos || sim[j] <= 0.0) break;
      subs.pos.push_back(words[content[j]]);
      taken.insert(j);
    }
    if (subs.pos.empty()) continue;

    const int b = band(w);
    std::vector<std::size_t> rest;
    for (std::size_t j : order) {
      if (!taken.count(j)) rest.push_back(j);
    }
    std::sort(rest.begin(), rest.end(), [&](std::size_t x, std::size_t y) {
      const int dx = std::abs(band(content[x]) - b), dy = std::abs(band(content[y]) - b);
      if (dx != dy) return dx < dy;
      if (sim[x] != sim[y]) return sim[x] < sim[y];
      return tiebreak[content[x]] < tiebreak[content[y]];
    });
    for (std::size_t j = 0; j < rest.size() && subs.neg.size() < options.n_neg; ++j) {
      subs.neg.push_back(words[content[rest[j]]]);
    }
    if (subs.neg.empty()) continue;
    lex.entries[words[w]] = std::move(subs);
  }
  return lex;
}

}  // namespace pvtrace::perturb
