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
#include <filesystem>
#include <string>
#include <vector>

#include "zipnet/box.hpp"
#include "zipnet/image.hpp"

namespace zipnet {

enum class Split { kTrain, kCal, kEval };

const char* split_name(Split split);
/// Parses "train", "cal" or "eval"; throws ConfigError otherwise.
Split parse_split(const std::string& name);

struct SceneSpec {
  std::uint64_t seed = 7;
  int image_h = 256;
  int image_w = 256;
  int min_objects = 1;
  int max_objects = 8;
  double min_side = 8.0;     // sqrt(area) range of requested objects
  double max_side = 200.0;
  double small_fraction = 0.35;  // share of objects drawn below 32 px
  double max_aspect = 3.0;
  int clutter = 6;
  int max_retries = 40;
  int margin = 2;  // free pixels kept between object frames
  int n_train = 2000;
  int n_cal = 200;
  int n_eval = 500;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  int count(Split split) const;
};

enum class ShapeKind { kRect, kEllipse, kTriangle, kDiamond };

struct SceneObject {
  ShapeKind kind = ShapeKind::kRect;
  Box box;  // tight bound of the rendered pixels, x2/y2 exclusive
};

struct Scene {
  Image image;
  std::vector<SceneObject> objects;
  // Per pixel: 0 for background and clutter, i + 1 for objects[i].
  std::vector<std::uint16_t> owner;
  int style = 0;
  int requested = 0;
  int dropped = 0;  // objects that found no free spot
};

/// Seed of scene `index` in `split`. Indices of distinct splits map to
/// distinct seeds for a fixed base seed.
std::uint64_t scene_seed(std::uint64_t base_seed, Split split, int index);

/// Renders one scene. Identical seeds give byte-identical scenes.
Scene render_scene(const SceneSpec& spec, std::uint64_t seed);

/// Paints a filled shape over frame [x1, x1 + w) x [y1, y1 + h) into
/// `scene` and returns the tight pixel bound. Colors are RGB.
Box draw_object(Scene& scene, ShapeKind kind, int x1, int y1, int w, int h,
                const std::array<int, 3>& color, std::uint16_t id);

struct DatasetImage {
  int id = 0;
  std::string file;  // relative to the annotation file's directory
  int h = 0;
  int w = 0;
  BoxList gts;
};

/// Annotation set plus the directory its image paths are relative to.
struct Dataset {
  std::filesystem::path root;
  std::vector<DatasetImage> images;

  Image load_image(std::size_t index) const;
  std::size_t num_boxes() const;
};

/// {images: [{id, file, h, w}], annotations: [{image_id, bbox: [x1, y1, x2, y2]}]}
Dataset read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path, const Dataset& dataset);

struct GenerateSummary {
  int images = 0;
  int objects = 0;
  int dropped = 0;
};

/// Writes <root>/<split>/NNNNNN.zimg and <root>/<split>/annotations.json.
GenerateSummary generate_split(const SceneSpec& spec, Split split,
                               const std::filesystem::path& root);

}  // namespace zipnet
