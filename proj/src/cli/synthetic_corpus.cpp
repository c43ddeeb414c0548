// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/cli/synthetic_corpus.hpp"

#include <cstdio>
#include <unordered_set>

#include "pvtrace/util/error.hpp"
#include "pvtrace/util/rng.hpp"

namespace pvtrace::cli {

namespace {

using Concept = std::vector<std::string>;

const std::vector<Concept> kAgents = {
    {"doctor", "physician", "medic"},  {"teacher", "tutor", "instructor"}, {"farmer", "grower", "rancher"},
    {"child", "kid", "youngster"},     {"soldier", "trooper", "warrior"},  {"lawyer", "attorney", "counselor"},
    {"cook", "chef"},                  {"sailor", "mariner", "seaman"},    {"thief", "robber", "burglar"},
    {"king", "monarch", "ruler"},      {"woman", "lady"},                  {"baby", "infant", "newborn"},
    {"student", "pupil", "learner"},   {"singer", "vocalist"},             {"driver", "motorist"},
    {"merchant", "trader", "vendor"},
};

const std::vector<Concept> kVerbs = {
    {"helped", "assisted", "aided"},     {"watched", "observed", "viewed"},   {"carried", "hauled", "lugged"},
    {"bought", "purchased", "acquired"}, {"found", "discovered", "located"}, {"cleaned", "washed", "scrubbed"},
    {"built", "constructed", "assembled"}, {"broke", "smashed", "shattered"}, {"painted", "colored"},
    {"moved", "shifted", "relocated"},   {"fixed", "repaired", "mended"},     {"sold", "traded", "peddled"},
    {"hid", "concealed", "stashed"},     {"studied", "examined", "inspected"}, {"lifted", "raised", "hoisted"},
    {"dropped", "released"},
};

const std::vector<Concept> kObjects = {
    {"box", "crate", "carton"},  {"car", "automobile", "vehicle"}, {"book", "volume", "tome"},
    {"chair", "seat", "stool"},  {"lamp", "lantern"},              {"boat", "vessel", "ship"},
    {"coin", "penny"},           {"letter", "note", "message"},    {"basket", "hamper"},
    {"sword", "blade", "saber"}, {"gift", "present"},              {"map", "chart"},
    {"bottle", "flask", "jar"},  {"rope", "cord", "cable"},        {"painting", "picture", "portrait"},
    {"table", "desk", "counter"},
};

const std::vector<Concept> kPlaces = {
    {"garden", "yard"},   {"kitchen", "galley"},          {"market", "bazaar"},
    {"harbor", "port", "dock"}, {"forest", "woods"},      {"castle", "fortress", "palace"},
    {"school", "academy"}, {"hospital", "clinic", "infirmary"}, {"village", "hamlet"},
    {"street", "road", "avenue"},
};

const std::vector<Concept> kTimes = {
    {"morning", "daybreak", "dawn"}, {"evening", "dusk", "twilight"}, {"night", "nighttime"},
    {"afternoon", "midday"},         {"summer", "summertime"},        {"winter", "wintertime"},
    {"spring", "springtime"},        {"autumn", "fall"},
};

// Adjacent entries (0,1), (2,3), ... are opposites.
const std::vector<Concept> kAdjectives = {
    {"big", "large", "huge"},    {"small", "little", "tiny"},  {"happy", "glad", "cheerful"},
    {"sad", "unhappy", "gloomy"}, {"old", "ancient", "aged"},  {"young", "youthful"},
    {"quick", "fast", "rapid"},  {"slow", "sluggish"},         {"bright", "shiny", "gleaming"},
    {"dark", "dim", "murky"},    {"clean", "spotless", "tidy"}, {"dirty", "filthy", "grimy"},
};

// Per-concept subset of compatible concepts from another category.
using Preferences = std::vector<std::vector<std::size_t>>;

Preferences draw_preferences(std::size_t from, std::size_t to, std::size_t k, Rng& rng) {
  Preferences out(from);
  for (auto& row : out) row = sample_without_replacement(to, k, rng);
  return out;
}

struct Grammar {
  Preferences agent_verbs, agent_adjs, agent_times, verb_objects, object_adjs, object_places;
};

}  // namespace

SyntheticCorpus generate_synthetic_corpus(std::size_t n, std::uint64_t seed, std::size_t sentences_per_sample) {
  if (sentences_per_sample == 0) throw UsageError("synthetic corpus: sentences_per_sample must be positive");
  Rng grammar_rng(derive_seed(seed, "grammar"));
  Grammar g;
  g.agent_verbs = draw_preferences(kAgents.size(), kVerbs.size(), 4, grammar_rng);
  g.agent_adjs = draw_preferences(kAgents.size(), kAdjectives.size(), 3, grammar_rng);
  g.agent_times = draw_preferences(kAgents.size(), kTimes.size(), 3, grammar_rng);
  g.verb_objects = draw_preferences(kVerbs.size(), kObjects.size(), 4, grammar_rng);
  g.object_adjs = draw_preferences(kObjects.size(), kAdjectives.size(), 3, grammar_rng);
  g.object_places = draw_preferences(kObjects.size(), kPlaces.size(), 3, grammar_rng);

  Rng rng(derive_seed(seed, "sentences"));
  auto pick = [&](const std::vector<std::size_t>& options) { return options[rng.below(options.size())]; };
  auto any = [&](std::size_t count) { return static_cast<std::size_t>(rng.below(count)); };
  auto word = [&](const std::vector<Concept>& table, std::size_t c) -> const std::string& {
    return table[c][rng.below(table[c].size())];
  };

  auto sentence = [&]() {
    const std::size_t agent = any(kAgents.size());
    const std::size_t verb = pick(g.agent_verbs[agent]);
    const std::size_t object = pick(g.verb_objects[verb]);
    const std::string a = word(kAgents, agent);
    const std::string v = word(kVerbs, verb);
    const std::string o = word(kObjects, object);
    switch (rng.below(6)) {
      case 0:
        return "the " + word(kAdjectives, pick(g.agent_adjs[agent])) + " " + a + " " + v + " the " + o + " in the " +
               word(kPlaces, pick(g.object_places[object]));
      case 1:
        return "in the " + word(kTimes, pick(g.agent_times[agent])) + " the " + a + " " + v + " a " +
               word(kAdjectives, pick(g.object_adjs[object])) + " " + o;
      case 2:
        return "the " + a + " " + v + " the " + word(kAdjectives, pick(g.object_adjs[object])) + " " + o +
               " near the " + word(kPlaces, pick(g.object_places[object])) + " in the " +
               word(kTimes, pick(g.agent_times[agent]));
      case 3:
        return "during the " + word(kTimes, pick(g.agent_times[agent])) + " a " +
               word(kAdjectives, pick(g.agent_adjs[agent])) + " " + a + " " + v + " the " + o + " at the " +
               word(kPlaces, pick(g.object_places[object]));
      case 4: {
        const std::size_t other = any(kAgents.size());
        return "the " + a + " and the " + word(kAgents, other) + " " + v + " the " + o;
      }
      default: {
        const std::size_t verb2 = pick(g.agent_verbs[agent]);
        const std::size_t object2 = pick(g.verb_objects[verb2]);
        return "yesterday the " + a + " " + v + " the " + o + " and " + word(kVerbs, verb2) + " the " +
               word(kObjects, object2);
      }
    }
  };

  SyntheticCorpus out;
  std::unordered_set<std::string> seen;
  const std::size_t max_attempts = 50 * n + 1000;
  for (std::size_t attempt = 0; out.corpus.size() < n; ++attempt) {
    if (attempt == max_attempts) throw UsageError("synthetic grammar cannot produce " + std::to_string(n) + " samples");
    std::string text = sentence();
    for (std::size_t i = 1; i < sentences_per_sample; ++i) text += " then " + sentence();
    if (!seen.insert(text).second) continue;
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%06zu", out.corpus.size());
    out.corpus.samples.push_back({id, std::move(text)});
  }

  for (const auto* table : {&kAgents, &kVerbs, &kObjects, &kPlaces, &kTimes, &kAdjectives}) {
    for (const auto& c : *table) {
      for (const auto& x : c)
        for (const auto& y : c)
          if (x != y) out.synonym_pairs.emplace_back(x, y);
    }
  }
  for (std::size_t i = 0; i + 1 < kAdjectives.size(); i += 2) {
    out.antonym_pairs.emplace_back(kAdjectives[i][0], kAdjectives[i + 1][0]);
  }
  return out;
}

}  // namespace pvtrace::cli
