// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/cli/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <set>

#include "pvtrace/attacks/input.hpp"
#include "pvtrace/attacks/merge.hpp"
#include "pvtrace/attacks/prune.hpp"
#include "pvtrace/lm/checkpoint.hpp"
#include "pvtrace/lm/transformer.hpp"
#include "pvtrace/util/error.hpp"
#include "pvtrace/util/parallel.hpp"
#include "pvtrace/util/rng.hpp"

namespace pvtrace::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kFilterQuantile = 0.95;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void write(const fs::path& path) const {
    std::string text;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) text += (i ? "," : "") + csv_field(cells[i]);
      text += "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    write_text_file(path, text);
  }
};

fs::path absolute_normal(const fs::path& p) { return fs::absolute(p).lexically_normal(); }

std::string file_hash(const fs::path& p) { return hex64(fnv1a64(read_text_file(p))); }

fingerprint::Corpus slice(const fingerprint::Corpus& c, std::size_t begin, std::size_t n) {
  fingerprint::Corpus out;
  out.samples.assign(c.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                     c.samples.begin() + static_cast<std::ptrdiff_t>(begin + n));
  return out;
}

lm::ModelParams load_model(const fs::path& path, const lm::Vocabulary& vocab) {
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path.string());
  lm::ModelParams m = lm::load_checkpoint(path);
  if (static_cast<std::size_t>(m.config.vocab_size) != vocab.size()) {
    throw UsageError("checkpoint " + path.string() + " does not match the run vocabulary");
  }
  return m;
}

double holdout_nll(const lm::ModelParams& model, const std::vector<lm::TokenSequence>& seqs) {
  return lm::nll_loss(model, seqs);
}

struct Verified {
  double fsr = 0;
  double auc = 0;
};

Verified read_metrics(const Json& report) {
  return {report.at("roc").at("fsr").get<double>(), report.at("roc").at("auc").get<double>()};
}

}  // namespace

fs::path resolve_corpus(const ExperimentConfig& config, const fs::path& base) {
  const fs::path p(config.corpus);
  return p.is_absolute() ? p : base / p;
}

Run::Run(ExperimentConfig config, fs::path dir) : config_(std::move(config)), dir_(absolute_normal(dir)) {
  config_.validate();
  fs::create_directories(dir_);
  const fs::path cfg = dir_ / "config.json";
  if (fs::exists(cfg)) {
    const ExperimentConfig existing = read_config(cfg);
    if (existing.hash() != config_.hash()) {
      throw UsageError("run directory " + dir_.string() + " holds a different config (hash " + existing.hash() +
                       "); use a fresh --out");
    }
  } else {
    write_json_file(cfg, config_.to_json());
  }
}

Run::~Run() = default;

fs::path Run::checkpoint(const std::string& name) const {
  if (name.rfind("fingerprinted.", 0) == 0) return dir_ / "checkpoints" / "attacked" / (name + ".ptrc");
  return dir_ / "checkpoints" / (name + ".ptrc");
}

const RunData& Run::data() {
  if (data_) return *data_;
  const fs::path corpus_path = resolve_corpus(config_, dir_);
  if (!fs::exists(corpus_path)) throw UsageError("corpus not found: " + corpus_path.string());
  auto d = std::make_unique<RunData>();
  d->corpus = fingerprint::read_corpus(corpus_path);
  d->vocab = lm::Vocabulary::build(d->corpus.texts());
  d->split = fingerprint::split_fingerprint_data(d->corpus, config_.n_tr, config_.n_ref, config_.n_unseen,
                                                 config_.stage_seed("split"));
  const auto& rest = d->split.rest;
  const std::size_t need = config_.n_pretrain + config_.n_aux + config_.n_benign + config_.n_holdout;
  if (rest.size() < need) {
    throw UsageError("corpus too small: " + std::to_string(rest.size()) + " samples left after the split, " +
                     std::to_string(need) + " needed for pretrain/aux/benign/holdout");
  }
  std::size_t at = 0;
  for (auto [dst, n] : {std::pair{&d->pretrain, config_.n_pretrain}, std::pair{&d->aux, config_.n_aux},
                        std::pair{&d->benign, config_.n_benign}, std::pair{&d->holdout, config_.n_holdout}}) {
    *dst = slice(rest, at, n);
    at += n;
  }
  d->spare = slice(rest, at, rest.size() - at);
  data_ = std::move(d);
  return *data_;
}

const perturb::SubstitutionLexicon& Run::lexicon() {
  if (lexicon_) return *lexicon_;
  const RunData& d = data();
  if (config_.lexicon == "auto") {
    lexicon_ = perturb::build_default_lexicon(d.split.rest, d.vocab, config_.stage_seed("lexicon"));
  } else {
    fs::path p(config_.lexicon);
    if (!p.is_absolute()) p = dir_ / p;
    lexicon_ = perturb::read_lexicon(p);
  }
  lexicon_->validate(d.vocab);
  return *lexicon_;
}

verify::VerifyOptions Run::verify_options(bool calibrated, double remove_ratio) const {
  verify::VerifyOptions o;
  o.k = config_.k;
  o.ratio = config_.ratio;
  o.seed = config_.stage_seed("verify");
  o.fpr_budget = config_.fpr_budget;
  o.calibrated = calibrated;
  o.remove_ratio = remove_ratio;
  return o;
}

verify::ProbeSet Run::probes_for(const fingerprint::Corpus& members) {
  const RunData& d = data();
  const auto& lex = lexicon();
  const fs::path cache_path = path("data/neighborhoods.jsonl");
  if (!cache_) {
    cache_ = fs::exists(cache_path) ? perturb::read_neighborhood_cache(cache_path) : perturb::NeighborhoodCache{};
  }
  fingerprint::FingerprintSplit split = d.split;
  split.d_tr = members;
  const std::size_t before = cache_->size();
  verify::ProbeSet out = verify::build_probes(split, lex, verify_options(config_.calibrated), &*cache_);
  if (cache_->size() != before || !fs::exists(cache_path)) {
    fs::create_directories(cache_path.parent_path());
    perturb::write_neighborhood_cache(cache_path, *cache_);
  }
  return out;
}

const verify::ProbeSet& Run::probes() {
  if (!probes_) probes_ = probes_for(data().split.d_tr);
  return *probes_;
}

std::vector<double> Run::reference_pv(const verify::ProbeSet& probes) {
  std::lock_guard lock(mutex_);
  verify::ProbeSet missing;
  for (const auto& p : probes.probes) {
    if (!reference_pv_.count(p.sample_id)) missing.probes.push_back(p);
  }
  if (!missing.probes.empty()) {
    const lm::ModelParams ref = load_model(checkpoint("reference"), data().vocab);
    const auto pv = verify::score_probes(lm::Scorer(ref), missing, data().vocab, verify_options(true));
    for (std::size_t i = 0; i < pv.size(); ++i) reference_pv_[missing.probes[i].sample_id] = pv[i];
  }
  std::vector<double> out;
  out.reserve(probes.probes.size());
  for (const auto& p : probes.probes) out.push_back(reference_pv_.at(p.sample_id));
  return out;
}

Json Run::provenance() const {
  Json seeds = Json::object();
  for (const auto& [k, v] : config_.stage_seeds()) seeds[k] = v;
  return Json{{"config_hash", config_.hash()}, {"seeds", seeds}};
}

void Run::record(const std::string& stage, const std::map<std::string, std::string>& artifacts) {
  std::lock_guard lock(mutex_);
  const fs::path p = path("manifest.json");
  RunManifest m = fs::exists(p) ? RunManifest::from_json(read_json_file(p)) : RunManifest{};
  m.config_hash = config_.hash();
  m.tool_version = kToolVersion;
  for (const auto& [k, v] : artifacts) m.artifacts[k] = v;
  m.timestamps[stage] = utc_now();
  write_json_file(p, m.to_json());
}

namespace {

std::string relative_to(const Run& run, const fs::path& p) {
  return absolute_normal(p).lexically_proximate(run.dir()).generic_string();
}

void write_log(Run& run, const lm::TrainLog& log, const std::string& name) {
  write_json_file(run.path("logs/" + name + ".json"), log.to_json());
}

lm::ModelParams fine_tune_stage(Run& run, const lm::ModelParams& base, const fingerprint::Corpus& data,
                                const std::string& stage, const lm::LoraSpec& lora, const std::string& name) {
  auto result = fingerprint::fine_tune(base, data, run.data().vocab, run.config().stage_train_config(stage), lora,
                                       stage);
  write_log(run, result.log, name);
  return lm::lora_merge(result.model);
}

}  // namespace

lm::ModelParams cmd_train(Run& run) {
  const RunData& d = run.data();
  const ExperimentConfig& cfg = run.config();
  write_json_file(run.path("data/vocab.json"), d.vocab.to_json());
  write_json_file(run.path("data/split.json"), d.split.manifest());

  lm::ModelConfig mc = cfg.model;
  mc.vocab_size = static_cast<int>(d.vocab.size());
  mc.seed = cfg.stage_seed("model");
  const auto seqs = fingerprint::encode(d.pretrain, d.vocab, static_cast<std::size_t>(mc.context_len));
  lm::TrainLog log;
  log.stage = "pretrain";
  lm::ModelParams base = lm::train(lm::init_model(mc), seqs, cfg.stage_train_config("pretrain"), &log);
  log.data_ids = d.pretrain.ids();
  write_log(run, log, "pretrain");
  lm::save_checkpoint(run.checkpoint("base"), base);
  run.record("train", {{"base", "checkpoints/base.ptrc"},
                       {"vocab", "data/vocab.json"},
                       {"split", "data/split.json"},
                       {"log.pretrain", "logs/pretrain.json"}});
  return base;
}

InjectResult cmd_inject(Run& run) {
  const RunData& d = run.data();
  const ExperimentConfig& cfg = run.config();
  const lm::ModelParams base = load_model(run.checkpoint("base"), d.vocab);
  write_json_file(run.path("data/split.json"), d.split.manifest());
  write_lexicon(run.path("data/lexicon.json"), run.lexicon());

  InjectResult out;
  out.fingerprinted = fine_tune_stage(run, base, d.split.d_tr, "inject", cfg.lora, "inject");
  lm::save_checkpoint(run.checkpoint("fingerprinted"), out.fingerprinted);
  out.reference = fine_tune_stage(run, base, d.split.d_ref, "reference", cfg.lora, "reference");
  lm::save_checkpoint(run.checkpoint("reference"), out.reference);
  run.record("inject", {{"fingerprinted", "checkpoints/fingerprinted.ptrc"},
                        {"reference", "checkpoints/reference.ptrc"},
                        {"split", "data/split.json"},
                        {"lexicon", "data/lexicon.json"},
                        {"log.inject", "logs/inject.json"},
                        {"log.reference", "logs/reference.json"}});
  return out;
}

lm::ModelParams benign_model(Run& run) {
  const RunData& d = run.data();
  const fs::path p = run.checkpoint("benign");
  if (fs::exists(p)) return load_model(p, d.vocab);
  const lm::ModelParams base = load_model(run.checkpoint("base"), d.vocab);
  lm::ModelParams m = fine_tune_stage(run, base, d.benign, "benign", run.config().attack_lora, "benign");
  lm::save_checkpoint(p, m);
  run.record("benign", {{"benign", "checkpoints/benign.ptrc"}, {"log.benign", "logs/benign.json"}});
  return m;
}

namespace {

bool needs_benign(const std::vector<AttackEntry>& attacks) {
  for (const auto& a : attacks) {
    if (a.attack == "merge") return true;
  }
  return false;
}

std::vector<lm::TokenSequence> prune_calibration(Run& run) {
  const RunData& d = run.data();
  const std::size_t n = std::min(run.config().prune_calibration, d.aux.size());
  return fingerprint::encode(slice(d.aux, 0, n), d.vocab, static_cast<std::size_t>(run.config().model.context_len));
}

attacks::PruneSpec prune_spec(const ExperimentConfig& cfg, const AttackEntry& a,
                              const std::vector<lm::TokenSequence>& calib) {
  attacks::PruneSpec spec;
  spec.strategy = attacks::parse_prune_strategy(a.parameters.value("strategy", std::string("l1")));
  spec.ratio = a.parameters.value("ratio", 0.1);
  spec.seed = cfg.attack_seed(a);
  if (spec.strategy == attacks::PruneStrategy::kTaylor) spec.calib = calib;
  return spec;
}

}  // namespace

AttackOutcome cmd_attack(Run& run) {
  const RunData& d = run.data();
  const ExperimentConfig& cfg = run.config();
  const lm::ModelParams base = load_model(run.checkpoint("base"), d.vocab);
  const lm::ModelParams fp = load_model(run.checkpoint("fingerprinted"), d.vocab);
  const lm::ModelParams benign = needs_benign(cfg.attacks) ? benign_model(run) : lm::ModelParams{};
  const auto calib = prune_calibration(run);
  const auto aux = fingerprint::encode(d.aux, d.vocab, static_cast<std::size_t>(cfg.model.context_len));
  fs::create_directories(run.path("checkpoints/attacked"));

  AttackOutcome out;
  std::vector<const AttackEntry*> jobs;
  for (const auto& a : cfg.attacks) {
    if (a.attack == "remove") {
      out.skipped.push_back(a.name());
    } else {
      jobs.push_back(&a);
      out.written.push_back(a.name());
    }
  }
  parallel_for(jobs.size(), [&](std::size_t i) {
    const AttackEntry& a = *jobs[i];
    lm::ModelParams attacked;
    if (a.attack == "prune") {
      attacked = attacks::prune(fp, prune_spec(cfg, a, calib));
    } else if (a.attack == "merge") {
      const double alpha = a.parameters.value("alpha", 0.5);
      attacks::MergeSpec spec;
      spec.strategy = attacks::parse_merge_strategy(a.parameters.value("strategy", std::string("task_arithmetic")));
      spec.gammas = {alpha, 1 - alpha};
      spec.trim_keep_fraction = a.parameters.value("trim_keep_fraction", spec.trim_keep_fraction);
      spec.dare_drop_rate = a.parameters.value("dare_drop_rate", spec.dare_drop_rate);
      spec.seed = cfg.attack_seed(a);
      const std::vector<lm::ModelParams> models{fp, benign};
      attacked = attacks::merge(base, models, spec);
    } else {
      lm::TrainConfig tc = cfg.incremental;
      tc.epochs = a.parameters.value("epochs", tc.epochs);
      tc.learning_rate = a.parameters.value("learning_rate", tc.learning_rate);
      tc.seed = cfg.attack_seed(a);
      attacked = attacks::incremental_finetune(fp, aux, tc, cfg.attack_lora);
    }
    lm::save_checkpoint(run.checkpoint(a.name()), attacked);
  });
  std::map<std::string, std::string> artifacts;
  for (const auto& n : out.written) artifacts["attacked/" + n] = "checkpoints/attacked/" + n + ".ptrc";
  run.record("attack", artifacts);
  return out;
}

namespace {

Json request_json(Run& run, const VerifyRequest& r) {
  Json j{{"suspect", relative_to(run, r.suspect)},
         {"suspect_hash", file_hash(r.suspect)},
         {"calibrated", r.calibrated},
         {"remove_ratio", r.remove_ratio}};
  if (r.calibrated) {
    const fs::path ref = r.reference ? *r.reference : run.checkpoint("reference");
    if (!fs::exists(ref)) throw UsageError("reference checkpoint not found: " + ref.string());
    j["reference"] = relative_to(run, ref);
    j["reference_hash"] = file_hash(ref);
  }
  return j;
}

Json verify_impl(Run& run, const VerifyRequest& r) {
  const RunData& d = run.data();
  if (!fs::exists(r.suspect)) throw UsageError("suspect checkpoint not found: " + r.suspect.string());
  const Json request = request_json(run, r);
  const verify::ProbeSet& probes = run.probes();
  const verify::VerifyOptions options = run.verify_options(r.calibrated, r.remove_ratio);
  const lm::ModelParams suspect = load_model(r.suspect, d.vocab);
  const auto pv = verify::score_probes(lm::Scorer(suspect), probes, d.vocab, options);
  std::optional<std::vector<double>> ref;
  if (r.calibrated) {
    if (r.reference) {
      ref = verify::score_probes(lm::Scorer(load_model(*r.reference, d.vocab)), probes, d.vocab,
                                 run.verify_options(true));
    } else {
      ref = run.reference_pv(probes);
    }
  }
  const auto report = verify::assemble_report(
      probes, pv, ref ? std::optional<std::span<const double>>(*ref) : std::nullopt, options);
  Json j = report.to_json();
  j["provenance"] = run.provenance();
  j["request"] = request;
  write_json_file(run.path("reports/verify/" + r.name + ".json"), j);
  return j;
}

}  // namespace

Json cmd_verify(Run& run, const VerifyRequest& request) {
  if (request.name.empty()) throw UsageError("verify: report name is empty");
  Json j = verify_impl(run, request);
  run.record("verify/" + request.name, {{"verify/" + request.name, "reports/verify/" + request.name + ".json"}});
  return j;
}

Json cached_verification(Run& run, const VerifyRequest& request) {
  const fs::path p = run.path("reports/verify/" + request.name + ".json");
  if (fs::exists(p)) {
    Json j = read_json_file(p);
    if (j.value("provenance", Json()) == run.provenance() && j.value("request", Json()) == request_json(run, request)) {
      return j;
    }
  }
  return verify_impl(run, request);
}

std::map<std::string, std::map<double, double>> pruned_base_perplexity(Run& run) {
  const RunData& d = run.data();
  const ExperimentConfig& cfg = run.config();
  const lm::ModelParams base = load_model(run.checkpoint("base"), d.vocab);
  const auto holdout = fingerprint::encode(d.holdout, d.vocab, static_cast<std::size_t>(cfg.model.context_len));
  const auto calib = prune_calibration(run);

  std::vector<const AttackEntry*> cells;
  for (const auto& a : cfg.attacks) {
    if (a.attack == "prune") cells.push_back(&a);
  }
  std::vector<double> ppl(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    ppl[i] = std::exp(holdout_nll(attacks::prune(base, prune_spec(cfg, *cells[i], calib)), holdout));
  });
  const double unpruned = std::exp(holdout_nll(base, holdout));
  std::map<std::string, std::map<double, double>> out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto& row = out[cells[i]->parameters.value("strategy", std::string("l1"))];
    row[0.0] = unpruned;
    row[cells[i]->parameters.value("ratio", 0.1)] = ppl[i];
  }
  return out;
}

std::vector<fs::path> cmd_report(Run& run) {
  const RunData& d = run.data();
  const ExperimentConfig& cfg = run.config();
  const auto holdout = fingerprint::encode(d.holdout, d.vocab, static_cast<std::size_t>(cfg.model.context_len));
  run.reference_pv(run.probes());  // warm the cache before the fan-out

  auto request = [&](const std::string& name, const std::string& model, bool calibrated, double remove = 0) {
    VerifyRequest r;
    r.name = name;
    r.suspect = run.checkpoint(model);
    r.calibrated = calibrated;
    r.remove_ratio = remove;
    if (!fs::exists(r.suspect)) {
      throw UsageError("missing checkpoint " + r.suspect.string() + "; run the train, inject and attack stages first");
    }
    return r;
  };
  std::vector<VerifyRequest> requests{request("fingerprinted", "fingerprinted", true),
                                      request("fingerprinted.uncalibrated", "fingerprinted", false),
                                      request("base", "base", true)};
  for (const auto& a : cfg.attacks) {
    if (a.attack == "remove") {
      requests.push_back(request(a.name(), "fingerprinted", true, a.parameters.value("ratio", 0.05)));
    } else {
      requests.push_back(request(a.name(), a.name(), true));
      if (a.attack == "incremental") requests.push_back(request(a.name() + ".uncalibrated", a.name(), false));
    }
  }
  std::vector<Json> reports(requests.size());
  parallel_for(requests.size(), [&](std::size_t i) { reports[i] = cached_verification(run, requests[i]); });
  std::map<std::string, Verified> m;
  std::map<std::string, std::string> summary;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    m[requests[i].name] = read_metrics(reports[i]);
    summary[requests[i].name] = reports[i].at("summary").get<std::string>();
  }

  std::vector<fs::path> written;
  auto emit = [&](const Table& t, const std::string& file) {
    const fs::path p = run.path("reports/" + file);
    t.write(p);
    written.push_back(p);
  };

  Table eff{{"model", "calibrated", "n_tr", "n_ref", "k", "ratio", "fsr", "auc", "fsr_at_auc"}, {}};
  for (const char* name : {"fingerprinted", "base"}) {
    const Verified& v = m.at(name);
    eff.rows.push_back({name, "true", std::to_string(cfg.n_tr), std::to_string(cfg.n_ref), std::to_string(cfg.k),
                        short_num(cfg.ratio), num(v.fsr), num(v.auc), summary.at(name)});
  }
  emit(eff, "effectiveness.csv");

  const auto base_ppl = pruned_base_perplexity(run);
  Table pruning{{"strategy", "ratio", "fsr", "auc", "ppl_fingerprinted", "ppl_base"}, {}};
  Table merging{{"strategy", "alpha", "weights", "fsr", "auc"}, {}};
  Table incremental{{"model", "epochs", "fsr", "auc", "holdout_nll"}, {}};
  Table calibration{{"model", "fsr_calibrated", "auc_calibrated", "fsr_uncalibrated", "auc_uncalibrated"}, {}};
  Table input{{"remove_ratio", "fsr", "auc", "filter_threshold", "queries_admitted"}, {}};

  const lm::ModelParams fp = load_model(run.checkpoint("fingerprinted"), d.vocab);
  incremental.rows.push_back({"fingerprinted", "0", num(m.at("fingerprinted").fsr), num(m.at("fingerprinted").auc),
                              num(holdout_nll(fp, holdout))});
  calibration.rows.push_back({"fingerprinted", num(m.at("fingerprinted").fsr), num(m.at("fingerprinted").auc),
                              num(m.at("fingerprinted.uncalibrated").fsr), num(m.at("fingerprinted.uncalibrated").auc)});

  // Queries screened by the suspect operator's own model, with a threshold
  // at a high quantile of benign holdout traffic.
  const lm::Scorer screen(fp);
  const auto filter = attacks::PerplexityFilter::calibrate(screen, d.vocab, d.holdout.texts(), kFilterQuantile);
  auto admitted = [&](double remove) {
    const auto transform = verify::suspect_transform(run.verify_options(true, remove));
    const auto& probes = run.probes().probes;
    std::size_t ok = 0;
    for (const auto& p : probes) {
      const std::string q = transform ? transform(p.pset.original, p.sample_id, 0) : p.pset.original;
      ok += filter.admits(attacks::perplexity(screen, d.vocab, q)) ? 1 : 0;
    }
    return probes.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(probes.size());
  };
  input.rows.push_back({"0", num(m.at("fingerprinted").fsr), num(m.at("fingerprinted").auc), num(filter.threshold),
                        num(admitted(0))});

  for (const auto& a : cfg.attacks) {
    const Verified& v = m.at(a.name());
    if (a.attack == "prune") {
      const std::string strategy = a.parameters.value("strategy", std::string("l1"));
      const double ratio = a.parameters.value("ratio", 0.1);
      const double ppl = std::exp(holdout_nll(load_model(run.checkpoint(a.name()), d.vocab), holdout));
      pruning.rows.push_back(
          {strategy, short_num(ratio), num(v.fsr), num(v.auc), num(ppl), num(base_ppl.at(strategy).at(ratio))});
    } else if (a.attack == "merge") {
      const double alpha = a.parameters.value("alpha", 0.5);
      merging.rows.push_back({attacks::to_string(attacks::parse_merge_strategy(
                                  a.parameters.value("strategy", std::string("task_arithmetic")))),
                              short_num(alpha), short_num(alpha) + ":" + short_num(1 - alpha), num(v.fsr),
                              num(v.auc)});
    } else if (a.attack == "incremental") {
      const Verified& u = m.at(a.name() + ".uncalibrated");
      const double nll = holdout_nll(load_model(run.checkpoint(a.name()), d.vocab), holdout);
      incremental.rows.push_back(
          {a.name(), std::to_string(a.parameters.value("epochs", cfg.incremental.epochs)), num(v.fsr), num(v.auc),
           num(nll)});
      calibration.rows.push_back({a.name(), num(v.fsr), num(v.auc), num(u.fsr), num(u.auc)});
    } else {
      const double ratio = a.parameters.value("ratio", 0.05);
      input.rows.push_back({short_num(ratio), num(v.fsr), num(v.auc), num(filter.threshold), num(admitted(ratio))});
    }
  }
  emit(pruning, "pruning.csv");
  emit(merging, "merging.csv");
  emit(incremental, "incremental.csv");
  emit(calibration, "calibration.csv");
  emit(input, "input_perturbation.csv");

  std::map<std::string, std::string> artifacts;
  for (const auto& p : written) artifacts["report/" + p.filename().string()] = relative_to(run, p);
  run.record("report", artifacts);
  return written;
}

Json cmd_harmlessness(Run& run, const fs::path& before, const fs::path& after,
                      const std::optional<fs::path>& holdout) {
  const RunData& d = run.data();
  const fingerprint::Corpus held = holdout ? fingerprint::read_corpus(*holdout) : d.holdout;
  if (held.empty()) throw UsageError("harmlessness: holdout corpus is empty");
  const auto seqs = fingerprint::encode(held, d.vocab, static_cast<std::size_t>(run.config().model.context_len));
  const double nll_before = holdout_nll(load_model(before, d.vocab), seqs);
  const double nll_after = holdout_nll(load_model(after, d.vocab), seqs);
  Json j{{"before", relative_to(run, before)},
         {"after", relative_to(run, after)},
         {"before_hash", file_hash(before)},
         {"after_hash", file_hash(after)},
         {"holdout", holdout ? relative_to(run, *holdout) : std::string("slice:holdout")},
         {"samples", held.size()},
         {"nll_before", nll_before},
         {"nll_after", nll_after},
         {"delta", nll_after - nll_before},
         {"provenance", run.provenance()}};
  const std::string name = after.stem().string() + ".vs." + before.stem().string();
  write_json_file(run.path("reports/harmlessness/" + name + ".json"), j);
  run.record("harmlessness/" + name, {{"harmlessness/" + name, "reports/harmlessness/" + name + ".json"}});
  return j;
}

fs::path harmlessness_grid(Run& run) {
  const RunData& d = run.data();
  const ExperimentConfig& cfg = run.config();
  const lm::ModelParams base = load_model(run.checkpoint("base"), d.vocab);
  const auto holdout = fingerprint::encode(d.holdout, d.vocab, static_cast<std::size_t>(cfg.model.context_len));
  const double base_nll = holdout_nll(base, holdout);

  // Members are the fingerprint slice extended with spare samples.
  fingerprint::Corpus pool = d.split.d_tr;
  pool.samples.insert(pool.samples.end(), d.spare.samples.begin(), d.spare.samples.end());
  const std::uint64_t grid_seed = cfg.stage_seed("harmlessness");

  Table t{{"size", "epochs", "fsr", "auc", "nll_delta"}, {}};
  for (std::size_t size : cfg.harmlessness.sizes) {
    if (size > pool.size()) {
      throw UsageError("harmlessness grid: size " + std::to_string(size) + " exceeds the " +
                       std::to_string(pool.size()) + " available samples");
    }
    const fingerprint::Corpus members = slice(pool, 0, size);
    const verify::ProbeSet probes = run.probes_for(members);
    const auto ref = run.reference_pv(probes);
    for (int epochs : cfg.harmlessness.epochs) {
      lm::TrainConfig tc = cfg.injection;
      tc.epochs = epochs;
      tc.seed = derive_seed(grid_seed, "n" + std::to_string(size) + ".e" + std::to_string(epochs));
      const lm::ModelParams fp =
          lm::lora_merge(fingerprint::fine_tune(base, members, d.vocab, tc, cfg.lora, "harmlessness").model);
      const verify::VerifyOptions options = run.verify_options(true);
      const auto pv = verify::score_probes(lm::Scorer(fp), probes, d.vocab, options);
      const auto report = verify::assemble_report(probes, pv, std::span<const double>(ref), options);
      t.rows.push_back({std::to_string(size), std::to_string(epochs), num(report.roc.fsr), num(report.roc.auc),
                        num(holdout_nll(fp, holdout) - base_nll)});
    }
  }
  const fs::path p = run.path("reports/harmlessness_grid.csv");
  t.write(p);
  run.record("harmlessness_grid", {{"report/harmlessness_grid.csv", "reports/harmlessness_grid.csv"}});
  return p;
}

}  // namespace pvtrace::cli
