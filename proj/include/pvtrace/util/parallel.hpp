// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace pvtrace {

// Worker count used by parallel_for; defaults to the hardware concurrency.
void set_parallelism(std::size_t jobs);
std::size_t parallelism();

// Runs fn(i) for i in [0, n). Results must not depend on scheduling: each
// index writes only its own output slot.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace pvtrace
