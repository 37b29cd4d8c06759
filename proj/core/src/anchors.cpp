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

#include "zipnet/anchors.hpp"

#include <cmath>

namespace zipnet {

AnchorSpec AnchorSpec::all_on_top() {
  AnchorSpec spec;
  std::vector<double> all;
  for (const auto& level : spec.scales) all.insert(all.end(), level.begin(), level.end());
  spec.scales = {std::vector<double>{}, std::vector<double>{}, all};
  return spec;
}

int AnchorSpec::total_templates() const {
  int total = 0;
  for (int m = 1; m <= kNumLevels; ++m) total += per_cell(m);
  return total;
}

std::vector<AnchorTemplate> level_templates(const AnchorSpec& spec, int level) {
  std::vector<AnchorTemplate> out;
  for (double s : spec.scales[level - 1]) {
    for (double r : spec.ratios) {
      const double root = std::sqrt(r);
      out.push_back({s * root, s / root});
    }
  }
  return out;
}

AnchorGrid generate_anchors(const AnchorSpec& spec, int level, int feat_h, int feat_w,
                            int image_h, int image_w) {
  AnchorGrid grid;
  grid.level = level;
  grid.stride = spec.strides[level - 1];
  grid.feat_h = feat_h;
  grid.feat_w = feat_w;
  grid.per_cell = spec.per_cell(level);
  const auto templates = level_templates(spec, level);
  const std::size_t count = static_cast<std::size_t>(feat_h) * feat_w * templates.size();
  grid.boxes.reserve(count);
  grid.out_of_image.reserve(count);
  for (int i = 0; i < feat_h; ++i) {
    const double cy = grid.stride * (i + 0.5);
    for (int j = 0; j < feat_w; ++j) {
      const double cx = grid.stride * (j + 0.5);
      const bool outside = cx >= image_w || cy >= image_h;
      for (const auto& t : templates) {
        Box b;
        b.x1 = cx - 0.5 * t.width;
        b.y1 = cy - 0.5 * t.height;
        b.x2 = cx + 0.5 * t.width;
        b.y2 = cy + 0.5 * t.height;
        b.level = level;
        grid.boxes.push_back(b);
        grid.out_of_image.push_back(outside ? 1 : 0);
      }
    }
  }
  return grid;
}

}  // namespace zipnet
