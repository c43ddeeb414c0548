// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>
#include <memory>
#include <sstream>
#include <set>

#include "doctest.h"
#include "pvtrace/cli/config.hpp"
#include "pvtrace/cli/pipeline.hpp"
#include "pvtrace/lm/checkpoint.hpp"
#include "pvtrace/lm/transformer.hpp"
#include "pvtrace/util/error.hpp"
#include "pvtrace/util/rng.hpp"
#include "support/small_run.hpp"

using namespace pvtrace;
using namespace pvtrace::cli;
namespace fs = std::filesystem;

namespace {

// Every regular file under `dir` except the manifest (which carries
// wall-clock timestamps), keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    out[e.path().lexically_relative(dir).generic_string()] = read_text_file(e.path());
  }
  return out;
}

void run_pipeline(Run& run) {
  cmd_train(run);
  cmd_inject(run);
  cmd_attack(run);
  cmd_report(run);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::istringstream in(read_text_file(p));
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("config round trip and hash") {
  const ExperimentConfig d = default_experiment_config();
  CHECK(ExperimentConfig::from_json(d.to_json()) == d);
  CHECK(ExperimentConfig::from_json(d.to_json()).hash() == d.hash());
  CHECK(d.hash().size() == 16);

  ExperimentConfig s = testing::small_config();
  s.lexicon = "data/custom.json";
  s.attacks.push_back({"merge", {{"strategy", "dare_ties"}, {"alpha", 0.3}, {"dare_drop_rate", 0.7}}, 99});
  const ExperimentConfig back = ExperimentConfig::from_json(Json::parse(canonical_dump(s.to_json())));
  CHECK(back == s);
  CHECK(back.attack_seed(back.attacks.back()) == 99);

  ExperimentConfig other = d;
  other.seed = 2;
  CHECK(other.hash() != d.hash());
  other = d;
  other.injection.epochs = 10;
  CHECK(other.hash() != d.hash());
}

TEST_CASE("partial configs start from the defaults") {
  const ExperimentConfig c = ExperimentConfig::from_json(Json{{"seed", 5}, {"perturbation", {{"k", 3}}}});
  ExperimentConfig expect = default_experiment_config();
  expect.seed = 5;
  expect.k = 3;
  CHECK(c == expect);
}

TEST_CASE("config errors are usage errors") {
  CHECK_THROWS_AS(ExperimentConfig::from_json(Json{{"attacks", {{{"attack", "erase"}}}}}), UsageError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(Json{{"split", {{"n_tr", 0}}}}), UsageError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(Json{{"perturbation", {{"ratio", 1.5}}}}), UsageError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(Json{{"seed", "one"}}), UsageError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json(Json{{"training", {{"pretrain", {{"schedule", "linear"}}}}}}), UsageError);
  Json dup = Json::array();
  dup.push_back(AttackEntry{"incremental", {{"epochs", 2}}, {}}.to_json());
  dup.push_back(AttackEntry{"incremental", {{"epochs", 2}}, {}}.to_json());
  CHECK_THROWS_AS(ExperimentConfig::from_json(Json{{"attacks", dup}}), UsageError);
}

TEST_CASE("stage seeds are a pure function of master seed and stage") {
  ExperimentConfig a = default_experiment_config();
  ExperimentConfig b = a;
  b.k = 7;  // unrelated fields do not move seeds
  CHECK(a.stage_seeds() == b.stage_seeds());
  CHECK(a.stage_seed("inject") == derive_seed(a.seed, "inject"));
  CHECK(a.stage_train_config("inject").seed == a.stage_seed("inject"));
  CHECK(a.stage_train_config("reference").seed != a.stage_train_config("inject").seed);
  CHECK_THROWS_AS(a.stage_train_config("verify"), UsageError);

  std::set<std::uint64_t> distinct;
  for (const char* s : {"split", "model", "pretrain", "inject", "reference", "lexicon", "verify"}) {
    distinct.insert(a.stage_seed(s));
  }
  CHECK(distinct.size() == 7);

  b.seed = a.seed + 1;
  CHECK(a.stage_seed("inject") != b.stage_seed("inject"));

  // Pruning shares one seed per strategy so random masks nest across ratios.
  const AttackEntry r5{"prune", {{"strategy", "random"}, {"ratio", 0.05}}, {}};
  const AttackEntry r20{"prune", {{"strategy", "random"}, {"ratio", 0.2}}, {}};
  CHECK(a.attack_seed(r5) == a.attack_seed(r20));
}

TEST_CASE("attack names") {
  CHECK(AttackEntry{"prune", {{"strategy", "l1"}, {"ratio", 0.1}}, {}}.name() == "fingerprinted.prune.l1.r0.1");
  CHECK(AttackEntry{"merge", {{"strategy", "ties"}, {"alpha", 0.5}}, {}}.name() == "fingerprinted.ties.a0.5.k0.2");
  CHECK(AttackEntry{"merge", {{"strategy", "dare_task"}, {"alpha", 0.5}}, {}}.name() ==
        "fingerprinted.dare_task.a0.5.p0.5");
  CHECK(AttackEntry{"merge", {{"strategy", "dare_ties"}, {"alpha", 0.9}}, {}}.name() ==
        "fingerprinted.dare_ties.a0.9.k0.2.p0.5");
  CHECK(AttackEntry{"merge", {{"alpha", 0.1}}, {}}.name() == "fingerprinted.task_arithmetic.a0.1");
  CHECK(AttackEntry{"incremental", {{"epochs", 2}}, {}}.name() == "fingerprinted.incremental.e2");
  CHECK(AttackEntry{"remove", {{"ratio", 0.05}}, {}}.name() == "fingerprinted.rp.r0.05");
  const AttackEntry slerp{"merge", {{"strategy", "slerp"}}, {}};
  CHECK_THROWS_AS(slerp.name(), UsageError);
}

TEST_CASE("default attack matrix") {
  const auto m = default_attack_matrix();
  std::map<std::string, int> kinds;
  for (const auto& a : m) ++kinds[a.attack];
  CHECK(kinds["prune"] == 12);
  CHECK(kinds["merge"] == 36);
  CHECK(kinds["incremental"] == 1);
  CHECK(kinds["remove"] == 2);
}

TEST_CASE("run directory guards its config") {
  const fs::path dir = testing::scratch_dir("cli_guard");
  ExperimentConfig c = testing::small_config();
  { Run run(c, dir); }
  CHECK(fs::exists(dir / "config.json"));
  { Run again(c, dir); }
  c.seed += 1;
  CHECK_THROWS_AS(Run(c, dir), UsageError);

  const fs::path empty = testing::scratch_dir("cli_nocorpus");
  Run missing(testing::small_config(), empty);
  CHECK_THROWS_AS(missing.data(), UsageError);

  const fs::path tiny = testing::scratch_dir("cli_tiny");
  const ExperimentConfig tc = testing::small_config();
  testing::write_small_corpus(tc, tiny, 300);
  Run small(tc, tiny);
  CHECK_THROWS_WITH_AS(small.data(), doctest::Contains("corpus too small"), UsageError);
}

// Built once; doctest re-enters the test case for every subcase.
struct SharedRun {
  ExperimentConfig config = testing::small_config();
  fs::path dir = testing::scratch_dir("cli_a");
  std::unique_ptr<Run> run;
  std::map<std::string, std::string> fresh;  // snapshot right after the pipeline

  SharedRun() {
    testing::write_small_corpus(config, dir);
    run = std::make_unique<Run>(config, dir);
    run_pipeline(*run);
    fresh = snapshot(dir);
  }
};

SharedRun& shared() {
  static SharedRun s;
  return s;
}

TEST_CASE("pipeline end to end") {
  const ExperimentConfig& config = shared().config;
  const fs::path& dir_a = shared().dir;
  Run& a = *shared().run;
  const auto& d = a.data();

  SUBCASE("slices are disjoint and sized") {
    std::set<std::string> ids;
    std::size_t total = 0;
    for (const auto* c : {&d.split.d_tr, &d.split.d_ref, &d.split.d_unseen, &d.pretrain, &d.aux, &d.benign,
                          &d.holdout, &d.spare}) {
      for (const auto& id : c->ids()) ids.insert(id);
      total += c->size();
    }
    CHECK(ids.size() == total);
    CHECK(total == d.corpus.size());
    CHECK(d.holdout.size() == config.n_holdout);
  }

  SUBCASE("base model beats the uniform model on held-out text") {
    const auto base = lm::load_checkpoint(a.checkpoint("base"));
    const auto held = fingerprint::encode(d.holdout, d.vocab, 48);
    CHECK(lm::nll_loss(base, held) < std::log(static_cast<double>(d.vocab.size())));
  }

  SUBCASE("two runs of one config write identical bytes") {
    const fs::path dir_b = testing::scratch_dir("cli_b");
    testing::write_small_corpus(config, dir_b);
    Run b(config, dir_b);
    run_pipeline(b);
    const auto& sa = shared().fresh;
    const auto sb = snapshot(dir_b);
    CHECK(sa.size() == sb.size());
    for (const auto& [name, bytes] : sa) {
      INFO(name);
      REQUIRE(sb.count(name));
      CHECK(sb.at(name) == bytes);
    }
    CHECK(sa.count("checkpoints/attacked/fingerprinted.ties.a0.5.k0.2.ptrc"));
    CHECK(sa.count("reports/verify/fingerprinted.json"));
  }

  SUBCASE("report regeneration from cached artifacts is byte-identical") {
    const auto before = snapshot(dir_a);
    cmd_report(a);
    Run fresh(config, dir_a);
    cmd_report(fresh);
    CHECK(snapshot(dir_a) == before);
  }

  SUBCASE("reports embed provenance") {
    const Json r = read_json_file(dir_a / "reports/verify/fingerprinted.json");
    CHECK(r.at("provenance").at("config_hash") == config.hash());
    CHECK(r.at("provenance").at("seeds").at("inject") == config.stage_seed("inject"));
    CHECK(r.at("provenance").at("seeds").contains("attack/fingerprinted.incremental.e1"));
    CHECK(r.at("request").at("suspect") == "checkpoints/fingerprinted.ptrc");
    const Json m = read_json_file(dir_a / "manifest.json");
    CHECK(m.at("config_hash") == config.hash());
    CHECK(m.at("tool_version") == kToolVersion);
    CHECK(m.at("timestamps").contains("report"));
  }

  SUBCASE("csv tables") {
    const auto eff = read_csv(dir_a / "reports/effectiveness.csv");
    REQUIRE(eff.size() == 3);
    CHECK(eff[0][6] == "fsr");
    CHECK(eff[0][7] == "auc");
    CHECK(eff[1][0] == "fingerprinted");

    const auto merging = read_csv(dir_a / "reports/merging.csv");
    REQUIRE(merging.size() == 3);
    CHECK(merging[1][0] == "task_arithmetic");
    CHECK(merging[1][2] == "0.5:0.5");
    CHECK(merging[2][0] == "ties");

    const auto pruning = read_csv(dir_a / "reports/pruning.csv");
    CHECK(pruning.size() == 3);
    CHECK(read_csv(dir_a / "reports/calibration.csv").size() == 3);
    CHECK(read_csv(dir_a / "reports/input_perturbation.csv").size() == 3);
  }

  SUBCASE("verification never writes checkpoints") {
    const auto before = snapshot(dir_a / "checkpoints");
    VerifyRequest r;
    r.name = "probe";
    r.suspect = a.checkpoint("fingerprinted.prune.l1.r0.1");
    const Json j = cmd_verify(a, r);
    CHECK(j.at("summary").get<std::string>().rfind("FSR=", 0) == 0);
    r.name = "probe.uncalibrated";
    r.calibrated = false;
    cmd_verify(a, r);
    CHECK(snapshot(dir_a / "checkpoints") == before);
    CHECK(fs::exists(dir_a / "reports/verify/probe.json"));
  }

  SUBCASE("a custom reference gives the same scores as the run reference") {
    VerifyRequest r;
    r.name = "custom";
    r.suspect = a.checkpoint("fingerprinted");
    r.reference = a.checkpoint("reference");
    const Json j = cmd_verify(a, r);
    const Json k = read_json_file(dir_a / "reports/verify/fingerprinted.json");
    CHECK(j.at("scores") == k.at("scores"));
    CHECK(j.at("roc") == k.at("roc"));
  }

  SUBCASE("harmlessness") {
    const Json same = cmd_harmlessness(a, a.checkpoint("base"), a.checkpoint("base"));
    CHECK(same.at("delta").get<double>() == 0.0);
    const Json j = cmd_harmlessness(a, a.checkpoint("base"), a.checkpoint("fingerprinted"));
    CHECK(j.at("delta").get<double>() == doctest::Approx(j.at("nll_after").get<double>() -
                                                          j.at("nll_before").get<double>()));
    CHECK(fs::exists(dir_a / "reports/harmlessness/fingerprinted.vs.base.json"));

    const auto grid = read_csv(harmlessness_grid(a));
    REQUIRE(grid.size() == 3);
    CHECK(grid[0] == std::vector<std::string>{"size", "epochs", "fsr", "auc", "nll_delta"});
    CHECK(grid[1][0] == "10");
    CHECK(grid[2][0] == "20");
  }

  SUBCASE("stages need their inputs") {
    const fs::path dir = testing::scratch_dir("cli_order");
    testing::write_small_corpus(config, dir);
    Run early(config, dir);
    CHECK_THROWS_AS(cmd_inject(early), UsageError);
    CHECK_THROWS_AS(cmd_report(early), UsageError);
  }
}
