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

#include "zipnet/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

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
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("zimg: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_zimg(std::ostream& out, const Image& image) {
  out.write("ZIMG", 4);
  put_u32(out, static_cast<std::uint32_t>(image.h));
  put_u32(out, static_cast<std::uint32_t>(image.w));
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw FormatError("zimg: write failed");
}

void write_zimg(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("zimg: cannot open " + path.string() + " for writing");
  write_zimg(out, image);
}

Image read_zimg(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || std::memcmp(magic.data(), "ZIMG", 4) != 0) {
    throw FormatError("zimg: bad magic, expected ZIMG");
  }
  const std::uint32_t h = get_u32(in);
  const std::uint32_t w = get_u32(in);
  if (h == 0 || w == 0 || h > 16384 || w > 16384) {
    throw FormatError(fmt::format("zimg: implausible extent {}x{}", h, w));
  }
  Image image(static_cast<int>(h), static_cast<int>(w));
  if (!in.read(reinterpret_cast<char*>(image.pixels.data()),
               static_cast<std::streamsize>(image.pixels.size()))) {
    throw FormatError("zimg: truncated pixel data");
  }
  return image;
}

Image read_zimg(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("zimg: cannot open " + path.string());
  return read_zimg(in);
}

Image resize_bilinear(const Image& image, int new_h, int new_w) {
  if (new_h < 1 || new_w < 1) {
    throw DimensionError(fmt::format("resize_bilinear: target {}x{} is empty", new_h, new_w));
  }
  if (new_h == image.h && new_w == image.w) return image;
  Image out(new_h, new_w);
  const double sy = static_cast<double>(image.h) / new_h;
  const double sx = static_cast<double>(image.w) / new_w;
  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int out_n, int in_n, double s) {
    std::vector<Tap> t(out_n);
    for (int o = 0; o < out_n; ++o) {
      const double src = std::clamp((o + 0.5) * s - 0.5, 0.0, static_cast<double>(in_n - 1));
      const int i0 = static_cast<int>(std::floor(src));
      t[o] = {i0, std::min(i0 + 1, in_n - 1), src - i0};
    }
    return t;
  };
  const auto ty = taps(new_h, image.h, sy);
  const auto tx = taps(new_w, image.w, sx);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < new_h; ++y) {
      for (int x = 0; x < new_w; ++x) {
        const double top = (1 - tx[x].f) * image.at(c, ty[y].i0, tx[x].i0) +
                           tx[x].f * image.at(c, ty[y].i0, tx[x].i1);
        const double bot = (1 - tx[x].f) * image.at(c, ty[y].i1, tx[x].i0) +
                           tx[x].f * image.at(c, ty[y].i1, tx[x].i1);
        const double v = (1 - ty[y].f) * top + ty[y].f * bot;
        out.at(c, y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

int padded_extent(int value, int multiple) {
  return ((value + multiple - 1) / multiple) * multiple;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image, int multiple) {
  const int ph = padded_extent(image.h, multiple);
  const int pw = padded_extent(image.w, multiple);
  Tensor<T> t({1, 3, ph, pw});
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < image.h; ++y) {
      for (int x = 0; x < image.w; ++x) {
        t.at(0, c, y, x) = static_cast<T>((image.at(c, y, x) - 127.5) / 64.0);
      }
    }
  }
  return t;
}

template Tensor<float> image_to_tensor(const Image&, int);
template Tensor<double> image_to_tensor(const Image&, int);

}  // namespace zipnet
