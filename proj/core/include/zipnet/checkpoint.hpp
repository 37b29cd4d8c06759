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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "zipnet/tensor.hpp"

namespace zipnet {

/// One record of a parameter checkpoint.
struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

inline constexpr char kCheckpointMagic[4] = {'Z', 'I', 'P', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: magic "ZIPC", u32 version, u32 record count, then per record
// u32 name length, UTF-8 name, 4 x u32 shape (n, c, h, w) and the raw f32
// values. All integers and floats are little-endian.
void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& records);
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> read_checkpoint(std::istream& in);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

}  // namespace zipnet
