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

#include <array>
#include <cstdint>
#include <vector>

#include "zipnet/box.hpp"

namespace zipnet {

inline constexpr int kNumLevels = 3;

/// Anchor templates per network level. Level m (1-based) owns
/// scales[m - 1] x ratios templates tiled with strides[m - 1].
struct AnchorSpec {
  std::array<std::vector<double>, kNumLevels> scales{
      std::vector<double>{16, 32}, std::vector<double>{64, 128}, std::vector<double>{256, 512}};
  std::vector<double> ratios{0.25, 0.5, 1.0, 2.0, 4.0};
  std::array<int, kNumLevels> strides{8, 16, 32};

  /// Every scale placed on the level-3 grid (single-map baseline).
  static AnchorSpec all_on_top();

  int per_cell(int level) const {
    return static_cast<int>(scales[level - 1].size() * ratios.size());
  }
  int total_templates() const;
  bool level_active(int level) const { return !scales[level - 1].empty(); }
};

/// Template extent: width = scale * sqrt(ratio),
/// height = scale / sqrt(ratio).
struct AnchorTemplate {
  double width;
  double height;
};

/// Templates of one level, scale-major then ratio.
std::vector<AnchorTemplate> level_templates(const AnchorSpec& spec, int level);

/// Dense anchors of one level. Index (i * feat_w + j) * per_cell + t holds
/// template t centered on cell (i, j).
struct AnchorGrid {
  int level = 0;
  int stride = 0;
  int feat_h = 0;
  int feat_w = 0;
  int per_cell = 0;
  BoxList boxes;
  // 1 when the anchor center falls outside the image (over padding).
  std::vector<std::uint8_t> out_of_image;

  std::size_t size() const { return boxes.size(); }
};

/// Anchors of `level` on a feat_h x feat_w grid, centered at
/// (stride * (j + 0.5), stride * (i + 0.5)).
AnchorGrid generate_anchors(const AnchorSpec& spec, int level, int feat_h, int feat_w,
                            int image_h, int image_w);

}  // namespace zipnet
