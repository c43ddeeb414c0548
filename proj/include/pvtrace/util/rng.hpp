// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// The single random source used across the project.
//
// SplitMix64: the i-th output is mix(seed + i * 0x9E3779B97F4A7C15), so the
// stream is a pure function of (seed, counter) and identical on every
// platform. Distributions are implemented here rather than taken from
// <random>, whose distribution algorithms are implementation-defined.
// Child streams are derived with derive_seed(parent, tag); nothing in the
// library touches global random state.

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace pvtrace {

std::uint64_t mix64(std::uint64_t z);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits.
  double uniform();

  // Uniform integer in [0, n), n > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Standard normal (Box-Muller, one value per two uniforms).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  Rng fork(std::string_view tag) const { return Rng(derive_seed(state_, tag)); }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

// k distinct indices from 0..n-1 (partial Fisher-Yates), in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng);

}  // namespace pvtrace
