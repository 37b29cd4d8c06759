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

#include "zipnet/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "zipnet/errors.hpp"

namespace zipnet {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                 static_cast<char>((v >> 16) & 0xff),
                                 static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw FormatError("checkpoint: truncated file");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& records) {
  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (r.values.size() != r.shape.numel()) {
      throw DimensionError(fmt::format("checkpoint: record '{}' has {} values for shape {}",
                                       r.name, r.values.size(), r.shape.str()));
    }
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    for (int e : {r.shape.n, r.shape.c, r.shape.h, r.shape.w}) {
      put_u32(out, static_cast<std::uint32_t>(e));
    }
    for (float v : r.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw FormatError("checkpoint: write failed");
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(out, records);
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic, expected ZIPC");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("checkpoint: unsupported version {}", version));
  }
  const std::uint32_t count = get_u32(in);
  std::vector<NamedTensor> records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor r;
    const std::uint32_t len = get_u32(in);
    if (len > (1u << 16)) throw FormatError("checkpoint: implausible name length");
    r.name.resize(len);
    if (!in.read(r.name.data(), len)) throw FormatError("checkpoint: truncated name");
    r.shape.n = static_cast<int>(get_u32(in));
    r.shape.c = static_cast<int>(get_u32(in));
    r.shape.h = static_cast<int>(get_u32(in));
    r.shape.w = static_cast<int>(get_u32(in));
    if (r.shape.numel() > (std::size_t{1} << 32)) {
      throw FormatError("checkpoint: implausible record size for '" + r.name + "'");
    }
    r.values.resize(r.shape.numel());
    for (float& v : r.values) v = std::bit_cast<float>(get_u32(in));
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace zipnet
