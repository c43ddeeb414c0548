// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Canonical JSON: object keys sorted (nlohmann's default std::map storage),
// shortest round-trip float formatting, two-space indent, trailing newline.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace pvtrace {

using Json = nlohmann::json;

std::string canonical_dump(const Json& j);
std::string canonical_line(const Json& j);  // single line, no indent

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

std::vector<Json> read_jsonl_file(const std::filesystem::path& path);
void write_jsonl_file(const std::filesystem::path& path, const std::vector<Json>& rows);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

std::string hex64(std::uint64_t v);

}  // namespace pvtrace
