// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/attacks/input.hpp"

#include <algorithm>
#include <cmath>

#include "pvtrace/util/error.hpp"
#include "pvtrace/util/rng.hpp"

namespace pvtrace::attacks {

namespace {

bool is_continuation(char c) { return (static_cast<unsigned char>(c) & 0xC0) == 0x80; }

// Byte offset of every code point start.
std::vector<std::size_t> code_point_starts(std::string_view text) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_continuation(text[i])) starts.push_back(i);
  }
  return starts;
}

}  // namespace

std::size_t char_count(std::string_view text) { return code_point_starts(text).size(); }

std::string delete_characters(std::string_view text, std::span<const std::size_t> positions) {
  const auto starts = code_point_starts(text);
  std::vector<bool> drop(starts.size(), false);
  for (std::size_t p : positions) {
    if (p >= starts.size()) throw UsageError("deletion position out of range");
    drop[p] = true;
  }
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (drop[i]) continue;
    const std::size_t end = i + 1 < starts.size() ? starts[i + 1] : text.size();
    out.append(text.substr(starts[i], end - starts[i]));
  }
  return out;
}

std::string remove_perturbation(std::string_view text, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("remove-perturbation ratio must be in (0, 1)");
  if (text.empty()) throw UsageError("empty input");
  const std::size_t len = char_count(text);
  const auto n = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(len) + 1e-9));
  if (n >= len) throw UsageError("remove-perturbation would delete the whole text");
  Rng rng(seed);
  const auto positions = sample_without_replacement(len, n, rng);
  return delete_characters(text, positions);
}

double perplexity(const lm::Scorer& model, const lm::Vocabulary& vocab, std::string_view text) {
  const auto seq =
      lm::truncate(lm::tokenize(vocab, text), static_cast<std::size_t>(model.config().context_len));
  return std::exp(-model.mean_logprob(seq));
}

double perplexity(const lm::ModelParams& model, const lm::Vocabulary& vocab, std::string_view text) {
  return perplexity(lm::Scorer(model), vocab, text);
}

PerplexityFilter PerplexityFilter::calibrate(const lm::Scorer& screen, const lm::Vocabulary& vocab,
                                             std::span<const std::string> benign, double q) {
  if (benign.empty()) throw UsageError("perplexity filter needs benign texts");
  if (!(q > 0.0 && q <= 1.0)) throw UsageError("quantile must be in (0, 1]");
  std::vector<double> ppl;
  ppl.reserve(benign.size());
  for (const auto& t : benign) ppl.push_back(perplexity(screen, vocab, t));
  std::sort(ppl.begin(), ppl.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(ppl.size()) - 1e-9));
  return PerplexityFilter{ppl[std::max<std::size_t>(rank, 1) - 1]};
}

}  // namespace pvtrace::attacks
