// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// pvtrace: fingerprint a toy language model, attack it and verify
// ownership from its likelihood curvature.
//
//   pvtrace gen-corpus --out run
//   pvtrace train --out run
//   pvtrace inject --out run
//   pvtrace attack --out run --jobs 4
//   pvtrace verify --out run --suspect run/checkpoints/fingerprinted.ptrc
//   pvtrace report --out run
//   pvtrace harmlessness --out run [--grid]
//
// Exit status: 0 success, 1 usage error, 2 runtime or numerical failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pvtrace/cli/config.hpp"
#include "pvtrace/cli/pipeline.hpp"
#include "pvtrace/cli/synthetic_corpus.hpp"
#include "pvtrace/lm/transformer.hpp"
#include "pvtrace/util/error.hpp"
#include "pvtrace/util/parallel.hpp"
#include "pvtrace/util/rng.hpp"

namespace fs = std::filesystem;
using namespace pvtrace;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 0;
  std::string out = "run";
};

// --config wins, then the run directory's own config.json, then defaults.
cli::ExperimentConfig load_config(const Globals& g) {
  cli::ExperimentConfig c;
  if (!g.config.empty()) {
    c = cli::read_config(g.config);
  } else if (fs::exists(fs::path(g.out) / "config.json")) {
    c = cli::read_config(fs::path(g.out) / "config.json");
  } else {
    c = cli::default_experiment_config();
  }
  if (g.seed) c.seed = *g.seed;
  return c;
}

void print_report(const std::string& name, const Json& report) {
  std::printf("%-40s %s\n", name.c_str(), report.at("summary").get<std::string>().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fingerprint verification for language models"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--seed", g.seed, "Master seed; overrides the config");
  app.add_option("--jobs", g.jobs, "Worker threads (0 = hardware concurrency)");
  app.add_option("--out", g.out, "Run directory")->capture_default_str();

  auto* gen = app.add_subcommand("gen-corpus", "Write the synthetic corpus into the run directory");
  std::size_t gen_n = 11300;
  std::size_t gen_sentences = 2;
  std::string gen_output;
  gen->add_option("--n", gen_n, "Number of samples")->capture_default_str();
  gen->add_option("--sentences", gen_sentences, "Sentences per sample")->capture_default_str();
  gen->add_option("--output", gen_output, "Output path (default: the config's corpus path)");

  auto* train = app.add_subcommand("train", "Pretrain the base model");
  auto* inject = app.add_subcommand("inject", "Fingerprint the base model and train the reference model");
  auto* attack = app.add_subcommand("attack", "Apply the configured attacks to the fingerprinted model");

  auto* verify = app.add_subcommand("verify", "Verify a suspect checkpoint");
  cli::VerifyRequest vreq;
  std::string v_suspect, v_reference;
  bool v_uncalibrated = false;
  verify->add_option("--suspect", v_suspect, "Suspect checkpoint")->required();
  verify->add_option("--reference", v_reference, "Reference checkpoint (default: the run's reference)");
  verify->add_flag("--uncalibrated", v_uncalibrated, "Score without the reference model");
  verify->add_option("--remove-ratio", vreq.remove_ratio, "Suspect-side character deletion rate");
  verify->add_option("--name", vreq.name, "Report name (default: suspect file stem)");

  auto* report = app.add_subcommand("report", "Verify every model and write the CSV tables");

  auto* harm = app.add_subcommand("harmlessness", "Held-out NLL delta between two checkpoints");
  std::string h_before, h_after, h_holdout;
  bool h_grid = false;
  harm->add_option("--before", h_before, "Checkpoint before (default: base)");
  harm->add_option("--after", h_after, "Checkpoint after (default: fingerprinted)");
  harm->add_option("--holdout", h_holdout, "Holdout corpus (default: the run's holdout slice)");
  harm->add_flag("--grid", h_grid, "Run the fingerprint size x epochs ablation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (g.jobs > 0) set_parallelism(g.jobs);
    const cli::ExperimentConfig config = load_config(g);

    if (gen->parsed()) {
      const fs::path out = gen_output.empty() ? cli::resolve_corpus(config, g.out) : fs::path(gen_output);
      const auto sc = cli::generate_synthetic_corpus(gen_n, config.stage_seed("corpus"), gen_sentences);
      fingerprint::write_corpus(out, sc.corpus);
      std::printf("wrote %zu samples to %s\n", sc.corpus.size(), out.string().c_str());
      return 0;
    }

    cli::Run run(config, g.out);
    if (train->parsed()) {
      const lm::ModelParams base = cli::cmd_train(run);
      const auto& d = run.data();
      const auto held = fingerprint::encode(d.holdout, d.vocab, static_cast<std::size_t>(config.model.context_len));
      std::printf("base: holdout nll %.4f (uniform %.4f)\n", lm::nll_loss(base, held),
                  std::log(static_cast<double>(d.vocab.size())));
    } else if (inject->parsed()) {
      cli::cmd_inject(run);
      std::printf("wrote %s and %s\n", run.checkpoint("fingerprinted").string().c_str(),
                  run.checkpoint("reference").string().c_str());
    } else if (attack->parsed()) {
      const auto outcome = cli::cmd_attack(run);
      for (const auto& n : outcome.written) std::printf("attacked %s\n", n.c_str());
      for (const auto& n : outcome.skipped) std::printf("skipped %s (input-level, applied at verification)\n", n.c_str());
    } else if (verify->parsed()) {
      vreq.suspect = v_suspect;
      if (!v_reference.empty()) vreq.reference = fs::path(v_reference);
      vreq.calibrated = !v_uncalibrated;
      if (vreq.name.empty()) vreq.name = vreq.suspect.stem().string() + (vreq.calibrated ? "" : ".uncalibrated");
      print_report(vreq.name, cli::cmd_verify(run, vreq));
    } else if (report->parsed()) {
      for (const auto& p : cli::cmd_report(run)) std::printf("wrote %s\n", p.string().c_str());
    } else if (harm->parsed()) {
      if (h_grid) {
        std::printf("wrote %s\n", cli::harmlessness_grid(run).string().c_str());
      } else {
        const fs::path before = h_before.empty() ? run.checkpoint("base") : fs::path(h_before);
        const fs::path after = h_after.empty() ? run.checkpoint("fingerprinted") : fs::path(h_after);
        std::optional<fs::path> holdout;
        if (!h_holdout.empty()) holdout = h_holdout;
        const Json j = cli::cmd_harmlessness(run, before, after, holdout);
        std::printf("nll before %.4f after %.4f delta %+.4f\n", j.at("nll_before").get<double>(),
                    j.at("nll_after").get<double>(), j.at("delta").get<double>());
      }
    }
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
