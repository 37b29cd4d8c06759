// Copyright 2026 The zipnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace zipnet {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// Git-style content hash: SHA-1 of "blob <size>\0" followed by the bytes.
std::string git_blob_hash(std::string_view bytes);
std::string git_blob_hash_file(const std::filesystem::path& path);

/// SHA-256 over every regular file below `dir`, visited in sorted relative
/// path order; each file contributes its relative path, a NUL and its bytes.
std::string tree_sha256(const std::filesystem::path& dir);

std::string read_file_bytes(const std::filesystem::path& path);

}  // namespace zipnet
