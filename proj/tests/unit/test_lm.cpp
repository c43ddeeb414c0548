// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracle/reference_lm.hpp"
#include "pvtrace/lm/checkpoint.hpp"
#include "pvtrace/lm/model.hpp"
#include "pvtrace/lm/train.hpp"
#include "pvtrace/lm/transformer.hpp"
#include "pvtrace/lm/vocab.hpp"
#include "pvtrace/util/error.hpp"

using namespace pvtrace;
using namespace pvtrace::lm;

namespace {

ModelConfig tiny_config(int layers = 1, int vocab = 11) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 8;
  c.n_layers = layers;
  c.n_heads = 2;
  c.context_len = 8;
  c.ff_mult = 2;
  c.seed = 99;
  return c;
}

// Larger-than-default weights and non-trivial norms so that every gradient
// path carries signal.
ModelParams rough_model(const ModelConfig& c, std::uint64_t seed) {
  ModelParams m = init_model(c);
  Rng rng(seed);
  for (auto& [name, arr] : m.params) {
    for (float& x : arr.data) {
      if (name.ends_with(".gain")) {
        x = static_cast<float>(1.0 + 0.3 * rng.normal());
      } else {
        x = static_cast<float>(0.3 * rng.normal());
      }
    }
  }
  return m;
}

TokenSequence random_seq(std::size_t n, int vocab, Rng& rng) {
  TokenSequence s;
  for (std::size_t i = 0; i < n; ++i) s.ids.push_back(static_cast<TokenId>(rng.below(vocab)));
  return s;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

// Finite-difference check of every entry of `values` against the
// double-precision oracle.
double max_fd_error(ModelParams& m, std::vector<float>& values, const std::vector<float>& grad,
                    const std::vector<TokenSequence>& batch) {
  REQUIRE(values.size() == grad.size());
  double worst = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    worst = std::max(worst, rel_err(oracle::fd_derivative(m, values[i], batch), grad[i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("tokenizer normalizes case and maps unknown words") {
  std::vector<std::string> texts{"hello world", "another line"};
  const auto v = Vocabulary::build(texts);
  CHECK(v.token(v.unk_id()) == "<unk>");
  CHECK(v.token(v.bos_id()) == "<bos>");
  CHECK(v.token(v.eos_id()) == "<eos>");
  CHECK(tokenize(v, "hello world").ids ==
        std::vector<TokenId>{v.bos_id(), v.id("hello"), v.id("world"), v.eos_id()});
  CHECK(tokenize(v, "HELLO").ids == std::vector<TokenId>{v.bos_id(), v.id("hello"), v.eos_id()});
  CHECK(tokenize(v, "zzzq").ids == std::vector<TokenId>{v.bos_id(), v.unk_id(), v.eos_id()});
  CHECK(tokenize(v, "  hello \t world\n").ids == tokenize(v, "hello world").ids);
  CHECK_THROWS_WITH_AS(tokenize(v, "   "), "empty input", UsageError);

  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.id(v.token(static_cast<TokenId>(i))) == TokenId(i));
  const auto back = Vocabulary::from_json(v.to_json());
  CHECK(back.tokens() == v.tokens());
}

TEST_CASE("zero model is uniform") {
  auto c = tiny_config(1, 4);
  const auto m = zero_model(c);
  const TokenSequence seq{{1, 3, 0, 2}};
  for (float lp : forward_logprobs(m, seq)) CHECK(lp == doctest::Approx(std::log(0.25)).epsilon(1e-6));
  CHECK(sequence_logprob(m, seq) == doctest::Approx(3 * std::log(0.25)).epsilon(1e-6));
  std::vector<TokenSequence> batch{seq, TokenSequence{{1, 2}}};
  CHECK(nll_loss(m, batch) == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("distributions are normalized and strictly causal") {
  auto c = tiny_config(2);
  const auto m = rough_model(c, 1);
  Rng rng(2);
  const Scorer scorer(m);
  for (int trial = 0; trial < 10; ++trial) {
    const auto seq = random_seq(8, c.vocab_size, rng);
    const auto dists = scorer.distributions(seq);
    REQUIRE(dists.size() == seq.size() - 1);
    for (const auto& row : dists) {
      double s = 0;
      for (float lp : row) s += std::exp(double(lp));
      CHECK(s >= 1 - 1e-4);
      CHECK(s <= 1 + 1e-4);
    }
    const auto lp = forward_logprobs(m, seq);
    for (float x : lp) {
      CHECK(std::exp(x) > 0.f);
      CHECK(std::exp(x) <= 1.f);
    }
    CHECK(sequence_logprob(m, seq) == doctest::Approx(std::accumulate(lp.begin(), lp.end(), 0.0)));

    // Changing token j must leave predictions made before seeing it intact.
    for (std::size_t j = 1; j < seq.size(); ++j) {
      auto mutated = seq;
      mutated.ids[j] = (mutated.ids[j] + 1) % c.vocab_size;
      const auto dm = scorer.distributions(mutated);
      for (std::size_t i = 0; i < j; ++i) CHECK(dm[i] == dists[i]);
    }
  }
}

TEST_CASE("forward pass matches the straight-line oracle") {
  for (int layers : {1, 2}) {
    auto c = tiny_config(layers);
    auto m = rough_model(c, 7);
    Rng rng(8);
    if (layers == 2) {
      m = attach_lora(m, LoraSpec{2, 1.5f, {"wq", "wv", "w1"}}, rng);
      for (auto& [name, ad] : m.adapters)
        for (float& x : ad.b.data) x = static_cast<float>(0.2 * rng.normal());
    }
    for (int trial = 0; trial < 5; ++trial) {
      const auto seq = random_seq(2 + trial, c.vocab_size, rng);
      const auto got = forward_logprobs(m, seq);
      const auto want = oracle::logprobs(m, seq.ids);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-5);
      const double sum = std::accumulate(want.begin(), want.end(), 0.0);
      CHECK(std::abs(sequence_logprob(m, seq) - sum) <= 1e-5);
    }
  }
}

TEST_CASE("sequence validation") {
  auto c = tiny_config();
  const auto m = rough_model(c, 1);
  CHECK_THROWS_WITH_AS(forward_logprobs(m, TokenSequence{std::vector<TokenId>(9, 1)}), "context overflow",
                       UsageError);
  CHECK_NOTHROW(forward_logprobs(m, TokenSequence{std::vector<TokenId>(8, 1)}));
  CHECK_THROWS_AS(forward_logprobs(m, TokenSequence{{1}}), UsageError);
  CHECK_THROWS_AS(forward_logprobs(m, TokenSequence{{1, 11}}), UsageError);
  CHECK_THROWS_AS(nll_loss(m, std::vector<TokenSequence>{}), UsageError);

  auto bad = m;
  bad.at("head.b").data[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_WITH_AS(forward_logprobs(bad, TokenSequence{{1, 2, 3}}), "numerical failure", NumericalError);
}

TEST_CASE("gradients match central finite differences") {
  auto c = tiny_config(2);
  auto m = rough_model(c, 21);
  Rng rng(22);
  std::vector<TokenSequence> batch{random_seq(6, c.vocab_size, rng), random_seq(8, c.vocab_size, rng),
                                   random_seq(3, c.vocab_size, rng)};
  const auto grads = backward(m, batch, false);
  CHECK(grads.size() == m.params.size());
  double worst = 0;
  for (auto& [name, arr] : m.params) {
    const auto& g = grads.at(name);
    REQUIRE(g.shape == arr.shape);
    const double e = max_fd_error(m, arr.data, g.data, batch);
    CAPTURE(name);
    CHECK(e <= 1e-3);
    worst = std::max(worst, e);
  }
  MESSAGE("max relative error (base parameters): " << worst);
}

TEST_CASE("adapter gradients match finite differences and freeze the base") {
  auto c = tiny_config(1);
  auto m = rough_model(c, 31);
  Rng rng(32);
  m = attach_lora(m, LoraSpec{}, rng);
  REQUIRE(m.adapters.size() == 4);
  for (auto& [name, ad] : m.adapters)
    for (float& x : ad.b.data) x = static_cast<float>(0.1 * rng.normal());
  std::vector<TokenSequence> batch{random_seq(7, c.vocab_size, rng), random_seq(5, c.vocab_size, rng)};

  const auto grads = backward(m, batch, true);
  CHECK(grads.size() == 2 * m.adapters.size());
  for (const auto& [name, _] : m.params) CHECK(grads.count(name) == 0);
  for (auto& [name, ad] : m.adapters) {
    CAPTURE(name);
    CHECK(max_fd_error(m, ad.a.data, grads.at("adapters/" + name + ".a").data, batch) <= 1e-3);
    CHECK(max_fd_error(m, ad.b.data, grads.at("adapters/" + name + ".b").data, batch) <= 1e-3);
  }

  const auto full = backward(m, batch, false);
  CHECK(full.size() == m.params.size() + 2 * m.adapters.size());
}

TEST_CASE("batch of identical sequences has the single-sequence gradient") {
  auto c = tiny_config(1);
  const auto m = rough_model(c, 41);
  Rng rng(42);
  const auto seq = random_seq(6, c.vocab_size, rng);
  const auto one = backward(m, std::vector<TokenSequence>{seq}, false);
  const auto three = backward(m, std::vector<TokenSequence>{seq, seq, seq}, false);
  for (const auto& [name, g] : one) {
    const auto& h = three.at(name);
    for (std::size_t i = 0; i < g.data.size(); ++i) CHECK(h.data[i] == doctest::Approx(g.data[i]).epsilon(1e-5));
  }
}

TEST_CASE("lora_merge folds adapters exactly") {
  ModelConfig c;
  c.vocab_size = 4;
  c.d_model = 2;
  c.n_layers = 1;
  c.n_heads = 1;
  c.context_len = 4;
  c.ff_mult = 1;
  auto m = zero_model(c);
  m.at("layers.0.attn.wq").data = {1, 0, 0, 1};
  LoraAdapter ad;
  ad.rank = 1;
  ad.scale = 1.f;
  ad.a = DenseArray{{1, 2}, {0, 2}};
  ad.b = DenseArray{{2, 1}, {1, 0}};
  m.adapters["layers.0.attn.wq"] = ad;
  const auto merged = lora_merge(m);
  CHECK(merged.adapters.empty());
  CHECK(merged.at("layers.0.attn.wq").data == std::vector<float>{1, 2, 0, 1});

  m.adapters["layers.0.attn.wq"].a.data = {0, 0};
  CHECK(lora_merge(m).at("layers.0.attn.wq") == m.at("layers.0.attn.wq"));
  CHECK_THROWS_AS(lora_merge(zero_model(c)), UsageError);
}

TEST_CASE("merged and adapted models score identically") {
  auto c = tiny_config(2);
  auto m = rough_model(c, 51);
  Rng rng(52);
  m = attach_lora(m, LoraSpec{}, rng);
  for (auto& [name, ad] : m.adapters)
    for (float& x : ad.b.data) x = static_cast<float>(0.2 * rng.normal());
  const auto merged = lora_merge(m);
  for (int i = 0; i < 10; ++i) {
    const auto seq = random_seq(8, c.vocab_size, rng);
    const auto a = forward_logprobs(m, seq), b = forward_logprobs(merged, seq);
    for (std::size_t t = 0; t < a.size(); ++t) CHECK(std::abs(a[t] - b[t]) <= 1e-5);
  }
}

TEST_CASE("training is deterministic and respects its contracts") {
  auto c = tiny_config(1, 20);
  c.seed = 5;
  const auto base = init_model(c);
  Rng rng(6);
  std::vector<TokenSequence> data;
  for (int i = 0; i < 12; ++i) data.push_back(random_seq(6, c.vocab_size, rng));

  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 77;
  const auto a = train(base, data, cfg), b = train(base, data, cfg);
  CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
  CHECK(serialize_checkpoint(a) != serialize_checkpoint(base));

  SUBCASE("zero learning rate is the identity") {
    cfg.learning_rate = 0;
    CHECK(train(base, data, cfg) == base);
  }
  SUBCASE("zero epochs is the identity") {
    cfg.epochs = 0;
    CHECK(train(base, data, cfg) == base);
  }
  SUBCASE("adapter-only training leaves base bytes untouched") {
    Rng lr(1);
    const auto adapted = attach_lora(base, LoraSpec{}, lr);
    cfg.train_adapters_only = true;
    const auto out = train(adapted, data, cfg);
    CHECK(out.params == adapted.params);
    CHECK(out.adapters != adapted.adapters);
  }
  SUBCASE("log records the schedule") {
    TrainLog log;
    log.stage = "unit";
    train(base, data, cfg, &log);
    CHECK(log.steps_per_epoch == 3);
    CHECK(log.total_steps == 6);
    CHECK(log.epoch_loss.size() == 2);
  }
  SUBCASE("divergence is reported") {
    cfg.optimizer = OptimizerKind::kSgd;
    cfg.learning_rate = 1e30;
    CHECK_THROWS_WITH_AS(train(base, data, cfg), "training diverged", NumericalError);
  }
  CHECK_THROWS_AS(train(base, std::vector<TokenSequence>{}, cfg), UsageError);
}

TEST_CASE("a tiny model memorizes one sequence") {
  auto c = tiny_config(1, 12);
  c.seed = 8;
  const auto base = init_model(c);
  const std::vector<TokenSequence> data{TokenSequence{{1, 5, 9, 4, 2}}};
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 500;
  cfg.batch_size = 1;
  const auto m = train(base, data, cfg);
  CHECK(nll_loss(m, data) < 0.05);
}

TEST_CASE("training on a toy corpus lowers the loss") {
  auto c = tiny_config(1, 30);
  c.context_len = 10;
  c.seed = 9;
  const auto base = init_model(c);
  Rng rng(10);
  std::vector<TokenSequence> data;
  for (int i = 0; i < 100; ++i) {
    // Structured: each token is followed by a fixed successor most of the time.
    TokenSequence s{{1}};
    TokenId t = static_cast<TokenId>(3 + rng.below(27));
    for (int k = 0; k < 7; ++k) {
      s.ids.push_back(t);
      t = rng.uniform() < 0.8 ? static_cast<TokenId>(3 + (t * 7) % 27) : static_cast<TokenId>(3 + rng.below(27));
    }
    s.ids.push_back(2);
    data.push_back(s);
  }
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.epochs = 20;
  cfg.batch_size = 10;
  const double before = nll_loss(base, data);
  const double after = nll_loss(train(base, data, cfg), data);
  CHECK(after < before);
}

TEST_CASE("checkpoint round trip") {
  auto c = tiny_config(2);
  auto m = rough_model(c, 61);
  Rng rng(62);
  m = attach_lora(m, LoraSpec{4, 0.5f, {"wk", "wo"}}, rng);
  const auto bytes = serialize_checkpoint(m);
  CHECK(bytes.substr(0, 4) == "PTRC");
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back == m);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK_THROWS_AS(deserialize_checkpoint("PTRX" + bytes.substr(4)), Error);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), Error);
}
