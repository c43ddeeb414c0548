// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "pvtrace/cli/synthetic_corpus.hpp"
#include "pvtrace/perturb/lexicon.hpp"
#include "pvtrace/perturb/neighborhood.hpp"
#include "pvtrace/util/error.hpp"

using namespace pvtrace;
using namespace pvtrace::perturb;

namespace {

SubstitutionLexicon birth_lexicon() {
  SubstitutionLexicon lex;
  lex.entries["babies"] = {{"children"}, {"adults"}};
  lex.entries["woman"] = {{"mother"}, {"father"}};
  return lex;
}

std::vector<std::string> split(const std::string& s) { return lm::normalize_words(s); }

const cli::SyntheticCorpus& synthetic() {
  static const auto c = cli::generate_synthetic_corpus(3000, 17);
  return c;
}

}  // namespace

TEST_CASE("worked substitution example") {
  const std::string text = "Babies can be protected if their woman is given intravenous antibiotics during labour";
  const auto p = generate_neighborhood(text, 1, 1.0, birth_lexicon(), 5);
  REQUIRE(p.k() == 1);
  CHECK(p.replaced_positions[0] == std::vector<std::size_t>{0, 6});
  CHECK(p.positives[0] ==
        "children can be protected if their mother is given intravenous antibiotics during labour");
  CHECK(p.negatives[0] == "adults can be protected if their father is given intravenous antibiotics during labour");
}

TEST_CASE("replacement count rounds up and never drops to zero") {
  CHECK(replacement_count(10, 0.3) == 3);
  CHECK(replacement_count(7, 0.3) == 3);
  CHECK(replacement_count(2, 0.3) == 1);
  CHECK(replacement_count(1, 0.01) == 1);
  CHECK(replacement_count(4, 1.0) == 4);

  const auto p = generate_neighborhood("the babies slept", 3, 0.01, birth_lexicon(), 1);
  for (const auto& pos : p.replaced_positions) CHECK(pos.size() == 1);
}

TEST_CASE("neighbourhoods are paired, sized and deterministic") {
  const auto& syn = synthetic();
  const auto vocab = lm::Vocabulary::build(syn.corpus.texts());
  const auto lex = build_default_lexicon(syn.corpus, vocab, 3);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    const auto& text = syn.corpus.samples[i].text;
    const auto words = split(text);
    std::size_t n_sub = 0;
    for (const auto& w : words) n_sub += lex.find(w) != nullptr;
    if (n_sub == 0) {
      CHECK_THROWS_WITH_AS(generate_neighborhood(text, 5, 0.3, lex, i), "unperturbable sample", UsageError);
      continue;
    }
    const auto p = generate_neighborhood(text, 5, 0.3, lex, i);
    CHECK(p == generate_neighborhood(text, 5, 0.3, lex, i));
    REQUIRE(p.positives.size() == 5);
    REQUIRE(p.negatives.size() == 5);
    for (std::size_t k = 0; k < 5; ++k) {
      const auto pos = split(p.positives[k]), neg = split(p.negatives[k]);
      REQUIRE(pos.size() == words.size());
      REQUIRE(neg.size() == words.size());
      const auto& where = p.replaced_positions[k];
      CHECK(where.size() == replacement_count(n_sub, 0.3));
      CHECK(std::is_sorted(where.begin(), where.end()));
      std::size_t diff_pos = 0, diff_neg = 0;
      for (std::size_t t = 0; t < words.size(); ++t) {
        const bool replaced = std::binary_search(where.begin(), where.end(), t);
        diff_pos += pos[t] != words[t];
        diff_neg += neg[t] != words[t];
        if (!replaced) {
          CHECK(pos[t] == words[t]);
          CHECK(neg[t] == words[t]);
        }
      }
      CHECK(diff_pos == where.size());
      CHECK(diff_neg == where.size());
    }
    ++checked;
  }
  CHECK(checked > 150);
  CHECK(generate_neighborhood(syn.corpus.samples[0].text, 5, 0.3, lex, 1) !=
        generate_neighborhood(syn.corpus.samples[0].text, 5, 0.3, lex, 2));
}

TEST_CASE("default lexicon satisfies its invariants") {
  const auto& syn = synthetic();
  const auto vocab = lm::Vocabulary::build(syn.corpus.texts());
  const auto lex = build_default_lexicon(syn.corpus, vocab, 3);
  CHECK_NOTHROW(lex.validate(vocab));
  CHECK(lex == build_default_lexicon(syn.corpus, vocab, 3));
  CHECK(lex.entries.count("the") == 1);  // frequent function words qualify
  CHECK(lex.entries.count("zzzq") == 0);
  CHECK(lex.entries.count("a") == 0);  // shorter than three letters
  for (const auto& [word, subs] : lex.entries) {
    CHECK(subs.pos.size() <= 3);
    CHECK(subs.neg.size() <= 3);
    for (const auto& r : subs.pos) CHECK(vocab.contains(r));
    for (const auto& r : subs.neg) CHECK(vocab.contains(r));
  }
  CHECK(SubstitutionLexicon::from_json(lex.to_json()) == lex);

  SubstitutionLexicon bad;
  bad.entries["cook"] = {{"cook"}, {"ship"}};
  CHECK_THROWS_AS(bad.validate(vocab), UsageError);
  bad.entries["cook"] = {{"chef"}, {"chef"}};
  CHECK_THROWS_AS(bad.validate(vocab), UsageError);
}

TEST_CASE("planted synonym pairs are recovered as positives") {
  const auto& syn = synthetic();
  const auto vocab = lm::Vocabulary::build(syn.corpus.texts());
  const auto lex = build_default_lexicon(syn.corpus, vocab, 3);
  std::size_t hit = 0;
  for (const auto& [a, b] : syn.synonym_pairs) {
    auto it = lex.entries.find(a);
    if (it != lex.entries.end() && std::count(it->second.pos.begin(), it->second.pos.end(), b)) ++hit;
  }
  const double rate = double(hit) / double(syn.synonym_pairs.size());
  MESSAGE("planted pairs recovered: " << hit << "/" << syn.synonym_pairs.size());
  CHECK(rate >= 0.90);
}

TEST_CASE("neighbourhood cache round trip") {
  const auto p = generate_neighborhood("babies and a woman", 2, 0.5, birth_lexicon(), 9);
  NeighborhoodCache cache{{cache_key("s1", 9), p}};
  const auto path = std::filesystem::temp_directory_path() / "pvtrace_test_cache.jsonl";
  write_neighborhood_cache(path, cache);
  CHECK(read_neighborhood_cache(path) == cache);
  std::filesystem::remove(path);
}
