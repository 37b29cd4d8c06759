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
#include <vector>

#include "zipnet/tensor.hpp"

namespace zipnet {

/// 8-bit RGB image stored as three planes (R, G, B), each row-major.
struct Image {
  Image() = default;
  Image(int height, int width)
      : h(height), w(width), pixels(static_cast<std::size_t>(3) * height * width, 0) {}

  std::uint8_t& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * h + y) * w + x];
  }
  std::uint8_t at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * h + y) * w + x];
  }

  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> pixels;
};

// ZIMG layout: magic "ZIMG", u32 height, u32 width (little-endian), then
// the R, G and B planes as u8.
void write_zimg(std::ostream& out, const Image& image);
void write_zimg(const std::filesystem::path& path, const Image& image);
Image read_zimg(std::istream& in);
Image read_zimg(const std::filesystem::path& path);

/// Half-pixel bilinear resampling to new_h x new_w.
Image resize_bilinear(const Image& image, int new_h, int new_w);

/// Smallest multiple of `multiple` that is >= value.
int padded_extent(int value, int multiple);

/// Normalized (1, 3, H', W') tensor, (v - 127.5) / 64, zero-padded on the
/// bottom and right to multiples of `multiple`.
template <typename T>
Tensor<T> image_to_tensor(const Image& image, int multiple = 32);

}  // namespace zipnet
