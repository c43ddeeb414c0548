// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format (all integers little-endian):
//
//   "PTRC"                      4 bytes magic
//   version                     u32 (= 1)
//   config_len                  u64
//   config                      canonical JSON (model config; adapter
//                               rank/scale under "adapters")
//   tensor_count                u64
//   per tensor, sorted by name:
//     name_len u32, name (UTF-8)
//     rank u32, dims u64[rank]
//     data f32[prod(dims)]
//
// Adapters appear as "adapters/<base>.a" and "adapters/<base>.b" and sort
// together with the base parameters.

#pragma once

#include <filesystem>
#include <string>

#include "pvtrace/lm/model.hpp"

namespace pvtrace::lm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ModelParams& model);
ModelParams deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& model);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace pvtrace::lm
