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

#include "zipnet/box.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace zipnet {

bool Box::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x1 < x2 && y1 < y2;
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Offsets encode_offsets(const Box& anchor, const Box& gt) {
  if (!(anchor.width() > 0.0 && anchor.height() > 0.0)) {
    throw std::invalid_argument("encode_offsets: anchor has non-positive size");
  }
  if (!(gt.width() > 0.0 && gt.height() > 0.0)) {
    throw std::invalid_argument("encode_offsets: ground truth has non-positive size");
  }
  return {(gt.cx() - anchor.cx()) / anchor.width(), (gt.cy() - anchor.cy()) / anchor.height(),
          std::log(gt.width() / anchor.width()), std::log(gt.height() / anchor.height())};
}

Box decode_offsets(const Box& anchor, const Offsets& t) {
  const double aw = anchor.width();
  const double ah = anchor.height();
  const double cx = anchor.cx() + t[0] * aw;
  const double cy = anchor.cy() + t[1] * ah;
  const double w = aw * std::exp(std::min(t[2], kMaxLogScale));
  const double h = ah * std::exp(std::min(t[3], kMaxLogScale));
  Box out = anchor;
  out.x1 = cx - 0.5 * w;
  out.y1 = cy - 0.5 * h;
  out.x2 = cx + 0.5 * w;
  out.y2 = cy + 0.5 * h;
  return out;
}

Box clip_box(const Box& b, double width, double height) {
  Box out = b;
  out.x1 = std::clamp(b.x1, 0.0, width);
  out.y1 = std::clamp(b.y1, 0.0, height);
  out.x2 = std::clamp(b.x2, 0.0, width);
  out.y2 = std::clamp(b.y2, 0.0, height);
  return out;
}

Box scale_box(const Box& b, double factor) {
  Box out = b;
  out.x1 *= factor;
  out.y1 *= factor;
  out.x2 *= factor;
  out.y2 *= factor;
  return out;
}

}  // namespace zipnet
