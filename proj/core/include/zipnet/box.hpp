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
#include <vector>

namespace zipnet {

/// Axis-aligned rectangle in continuous image pixel coordinates.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  double score = 0.0;
  int level = 0;  // 0 when not tied to a network level

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const;
};

using BoxList = std::vector<Box>;

/// Regression offsets (tx, ty, tw, th) of a box relative to an anchor.
using Offsets = std::array<double, 4>;

/// Intersection over union, 0 when either box is empty.
double iou(const Box& a, const Box& b);

/// Center/size parameterization:
///   tx = (gx - ax) / aw, ty = (gy - ay) / ah, tw = ln(gw / aw), th = ln(gh / ah).
/// Throws std::invalid_argument for non-positive sizes.
Offsets encode_offsets(const Box& anchor, const Box& gt);

/// Inverse of encode_offsets. tw and th are clamped to kMaxLogScale before
/// exponentiation so untrained heads cannot overflow.
Box decode_offsets(const Box& anchor, const Offsets& t);

inline constexpr double kMaxLogScale = 4.135166556742356;  // ln(1000 / 16)

/// Clamps the box to [0, width] x [0, height], keeping score and level.
Box clip_box(const Box& b, double width, double height);

/// Multiplies every coordinate by `factor`.
Box scale_box(const Box& b, double factor);

}  // namespace zipnet
