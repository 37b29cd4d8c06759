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

#include "zipnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

#include "zipnet/errors.hpp"

namespace zipnet {

namespace {

using Rgb = std::array<int, 3>;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

Rgb hsv(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 1.0) * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  return {static_cast<int>(255 * (r + m)), static_cast<int>(255 * (g + m)),
          static_cast<int>(255 * (b + m))};
}

// Saturated color in style 0, gray in style 1 (objects); the reverse for
// background and clutter.
Rgb chromatic(std::mt19937_64& rng) {
  return hsv(uniform(rng, 0, 1), uniform(rng, 0.6, 1.0), uniform(rng, 0.45, 1.0));
}

Rgb achromatic(std::mt19937_64& rng) {
  const int g = uniform_int(rng, 25, 230);
  return {g, g, g};
}

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

bool inside(ShapeKind kind, double u, double v) {
  // (u, v) in [-1, 1]^2 relative to the frame.
  switch (kind) {
    case ShapeKind::kRect: return true;
    case ShapeKind::kEllipse: return u * u + v * v <= 1.0;
    case ShapeKind::kTriangle: return std::abs(u) <= 0.5 * (v + 1.0);
    case ShapeKind::kDiamond: return std::abs(u) + std::abs(v) <= 1.0;
  }
  return false;
}

void paint_background(Scene& scene, int style, std::mt19937_64& rng) {
  Image& im = scene.image;
  const Rgb base = style == 0 ? achromatic(rng) : chromatic(rng);
  const Rgb second = style == 0 ? achromatic(rng) : chromatic(rng);
  const double fx = uniform(rng, 0.01, 0.06);
  const double fy = uniform(rng, 0.01, 0.06);
  const double phase = uniform(rng, 0, 6.3);
  std::normal_distribution<double> noise(0.0, 6.0);
  for (int y = 0; y < im.h; ++y) {
    for (int x = 0; x < im.w; ++x) {
      const double t = 0.5 + 0.5 * std::sin(fx * x + fy * y + phase) * std::cos(fy * x - fx * y);
      const double n = noise(rng);
      for (int c = 0; c < 3; ++c) {
        im.at(c, y, x) = clamp_u8((1 - t) * base[c] + t * second[c] + n);
      }
    }
  }
}

void paint_clutter(Scene& scene, const SceneSpec& spec, int style, std::mt19937_64& rng) {
  Image& im = scene.image;
  const int count = spec.clutter > 0 ? uniform_int(rng, spec.clutter / 2, spec.clutter) : 0;
  for (int k = 0; k < count; ++k) {
    const Rgb color = style == 0 ? achromatic(rng) : chromatic(rng);
    if (uniform(rng, 0, 1) < 0.5) {
      // straight stroke
      const double x0 = uniform(rng, 0, im.w), y0 = uniform(rng, 0, im.h);
      const double angle = uniform(rng, 0, 6.283185307179586);
      const double len = uniform(rng, 10, 0.5 * std::max(im.h, im.w));
      const int width = uniform_int(rng, 1, 3);
      const int steps = static_cast<int>(len * 2);
      for (int s = 0; s <= steps; ++s) {
        const double px = x0 + std::cos(angle) * len * s / steps;
        const double py = y0 + std::sin(angle) * len * s / steps;
        for (int dy = 0; dy < width; ++dy) {
          for (int dx = 0; dx < width; ++dx) {
            const int xi = static_cast<int>(px) + dx, yi = static_cast<int>(py) + dy;
            if (xi < 0 || yi < 0 || xi >= im.w || yi >= im.h) continue;
            for (int c = 0; c < 3; ++c) im.at(c, yi, xi) = static_cast<std::uint8_t>(color[c]);
          }
        }
      }
    } else {
      // blob shaped like an object
      const auto kind = static_cast<ShapeKind>(uniform_int(rng, 0, 3));
      const int w = uniform_int(rng, 4, 40), h = uniform_int(rng, 4, 40);
      const int x1 = uniform_int(rng, -w / 2, im.w - w / 2), y1 = uniform_int(rng, -h / 2, im.h - h / 2);
      for (int y = std::max(y1, 0); y < std::min(y1 + h, im.h); ++y) {
        for (int x = std::max(x1, 0); x < std::min(x1 + w, im.w); ++x) {
          const double u = 2.0 * (x + 0.5 - x1) / w - 1.0, v = 2.0 * (y + 0.5 - y1) / h - 1.0;
          if (!inside(kind, u, v)) continue;
          for (int c = 0; c < 3; ++c) im.at(c, y, x) = static_cast<std::uint8_t>(color[c]);
        }
      }
    }
  }
}

struct Frame {
  int x1, y1, w, h;
};

bool frames_clash(const Frame& a, const Frame& b, int margin) {
  return a.x1 < b.x1 + b.w + margin && b.x1 < a.x1 + a.w + margin &&
         a.y1 < b.y1 + b.h + margin && b.y1 < a.y1 + a.h + margin;
}

}  // namespace

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kCal: return "cal";
    case Split::kEval: return "eval";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "cal") return Split::kCal;
  if (name == "eval") return Split::kEval;
  throw ConfigError("unknown split '" + name + "' (expected train, cal or eval)");
}

void SceneSpec::validate() const {
  auto fail = [](const char* field, const std::string& why) {
    throw ConfigError(fmt::format("synth.{}: {}", field, why));
  };
  if (image_h < 32 || image_w < 32) fail("image_h", "image extent must be at least 32");
  if (min_objects < 0 || max_objects < min_objects) fail("max_objects", "need 0 <= min <= max");
  if (max_objects > 1000) fail("max_objects", "at most 1000 objects per scene");
  if (!(min_side >= 4.0 && max_side > min_side)) fail("min_side", "need 4 <= min_side < max_side");
  if (!(small_fraction >= 0.0 && small_fraction <= 1.0)) fail("small_fraction", "must be in [0, 1]");
  if (!(max_aspect >= 1.0)) fail("max_aspect", "must be >= 1");
  if (clutter < 0) fail("clutter", "must be >= 0");
  if (max_retries < 1) fail("max_retries", "must be >= 1");
  if (margin < 0) fail("margin", "must be >= 0");
  if (n_train < 0 || n_cal < 0 || n_eval < 0) fail("n_train", "split sizes must be >= 0");
}

int SceneSpec::count(Split split) const {
  switch (split) {
    case Split::kTrain: return n_train;
    case Split::kCal: return n_cal;
    case Split::kEval: return n_eval;
  }
  return 0;
}

std::uint64_t scene_seed(std::uint64_t base_seed, Split split, int index) {
  // splitmix64 is a bijection, so distinct (split, index) ids never collide.
  const std::uint64_t id = (static_cast<std::uint64_t>(split) << 32) |
                           static_cast<std::uint32_t>(index);
  return splitmix64(splitmix64(base_seed) ^ id);
}

Box draw_object(Scene& scene, ShapeKind kind, int x1, int y1, int w, int h, const Rgb& color,
                std::uint16_t id) {
  Image& im = scene.image;
  if (scene.owner.size() != static_cast<std::size_t>(im.h) * im.w) {
    scene.owner.assign(static_cast<std::size_t>(im.h) * im.w, 0);
  }
  int bx1 = im.w, by1 = im.h, bx2 = -1, by2 = -1;
  for (int y = std::max(y1, 0); y < std::min(y1 + h, im.h); ++y) {
    for (int x = std::max(x1, 0); x < std::min(x1 + w, im.w); ++x) {
      const double u = 2.0 * (x + 0.5 - x1) / w - 1.0;
      const double v = 2.0 * (y + 0.5 - y1) / h - 1.0;
      if (!inside(kind, u, v)) continue;
      for (int c = 0; c < 3; ++c) im.at(c, y, x) = clamp_u8(color[c]);
      scene.owner[static_cast<std::size_t>(y) * im.w + x] = id;
      bx1 = std::min(bx1, x);
      by1 = std::min(by1, y);
      bx2 = std::max(bx2, x);
      by2 = std::max(by2, y);
    }
  }
  if (bx2 < 0) return Box{};
  return Box{static_cast<double>(bx1), static_cast<double>(by1), static_cast<double>(bx2 + 1),
             static_cast<double>(by2 + 1)};
}

Scene render_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  Scene scene;
  scene.image = Image(spec.image_h, spec.image_w);
  scene.owner.assign(static_cast<std::size_t>(spec.image_h) * spec.image_w, 0);
  scene.style = uniform_int(rng, 0, 1);
  paint_background(scene, scene.style, rng);
  paint_clutter(scene, spec, scene.style, rng);

  scene.requested = uniform_int(rng, spec.min_objects, spec.max_objects);
  std::vector<std::pair<int, int>> sizes;
  for (int k = 0; k < scene.requested; ++k) {
    const double side = uniform(rng, 0, 1) < spec.small_fraction
                            ? log_uniform(rng, spec.min_side, std::min(32.0, spec.max_side))
                            : log_uniform(rng, std::max(32.0, spec.min_side), spec.max_side);
    const double aspect = log_uniform(rng, 1.0 / spec.max_aspect, spec.max_aspect);
    const int w = std::clamp(static_cast<int>(std::lround(side * std::sqrt(aspect))), 4,
                             spec.image_w - 2 * spec.margin);
    const int h = std::clamp(static_cast<int>(std::lround(side / std::sqrt(aspect))), 4,
                             spec.image_h - 2 * spec.margin);
    sizes.emplace_back(w, h);
  }
  // Large frames first; they are the hardest to fit.
  std::stable_sort(sizes.begin(), sizes.end(), [](const auto& a, const auto& b) {
    return a.first * a.second > b.first * b.second;
  });

  std::vector<Frame> placed;
  for (const auto& [w, h] : sizes) {
    bool ok = false;
    Frame f{};
    for (int attempt = 0; attempt < spec.max_retries && !ok; ++attempt) {
      f = {uniform_int(rng, 0, spec.image_w - w), uniform_int(rng, 0, spec.image_h - h), w, h};
      ok = std::none_of(placed.begin(), placed.end(),
                        [&](const Frame& p) { return frames_clash(f, p, spec.margin); });
    }
    if (!ok) {
      ++scene.dropped;
      continue;
    }
    placed.push_back(f);
    const auto kind = static_cast<ShapeKind>(uniform_int(rng, 0, 3));
    Rgb color = scene.style == 0 ? chromatic(rng) : achromatic(rng);
    const auto id = static_cast<std::uint16_t>(scene.objects.size() + 1);
    const Box box = draw_object(scene, kind, f.x1, f.y1, f.w, f.h, color, id);
    if (!box.valid()) {
      ++scene.dropped;
      continue;
    }
    scene.objects.push_back({kind, box});
  }
  // Mild sensor noise on object pixels keeps fills from being flat.
  std::normal_distribution<double> noise(0.0, 4.0);
  Image& im = scene.image;
  for (std::size_t p = 0; p < scene.owner.size(); ++p) {
    if (scene.owner[p] == 0) continue;
    const double n = noise(rng);
    for (int c = 0; c < 3; ++c) {
      auto& px = im.pixels[c * scene.owner.size() + p];
      px = clamp_u8(px + n);
    }
  }
  return scene;
}

Image Dataset::load_image(std::size_t index) const {
  const auto& entry = images.at(index);
  Image im = read_zimg(root / entry.file);
  if (im.h != entry.h || im.w != entry.w) {
    throw FormatError(fmt::format("{}: image is {}x{} but annotation says {}x{}", entry.file,
                                  im.h, im.w, entry.h, entry.w));
  }
  return im;
}

std::size_t Dataset::num_boxes() const {
  std::size_t n = 0;
  for (const auto& im : images) n += im.gts.size();
  return n;
}

Dataset read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open annotations " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
  Dataset ds;
  ds.root = path.parent_path();
  try {
    std::unordered_map<int, std::size_t> by_id;
    for (const auto& j : doc.at("images")) {
      DatasetImage im;
      im.id = j.at("id").get<int>();
      im.file = j.at("file").get<std::string>();
      im.h = j.at("h").get<int>();
      im.w = j.at("w").get<int>();
      if (!by_id.emplace(im.id, ds.images.size()).second) {
        throw FormatError(fmt::format("{}: duplicate image id {}", path.string(), im.id));
      }
      ds.images.push_back(std::move(im));
    }
    for (const auto& j : doc.at("annotations")) {
      const int id = j.at("image_id").get<int>();
      const auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw FormatError(fmt::format("{}: annotation for unknown image {}", path.string(), id));
      }
      const auto b = j.at("bbox").get<std::vector<double>>();
      if (b.size() != 4) {
        throw FormatError(fmt::format("{}: bbox of image {} needs 4 values", path.string(), id));
      }
      ds.images[it->second].gts.push_back(Box{b[0], b[1], b[2], b[3]});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return ds;
}

void write_annotations(const std::filesystem::path& path, const Dataset& dataset) {
  nlohmann::ordered_json doc;
  doc["images"] = nlohmann::ordered_json::array();
  doc["annotations"] = nlohmann::ordered_json::array();
  for (const auto& im : dataset.images) {
    doc["images"].push_back({{"id", im.id}, {"file", im.file}, {"h", im.h}, {"w", im.w}});
    for (const auto& b : im.gts) {
      doc["annotations"].push_back({{"image_id", im.id}, {"bbox", {b.x1, b.y1, b.x2, b.y2}}});
    }
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

GenerateSummary generate_split(const SceneSpec& spec, Split split,
                               const std::filesystem::path& root) {
  spec.validate();
  const auto dir = root / split_name(split);
  std::filesystem::create_directories(dir);
  Dataset ds;
  ds.root = dir;
  GenerateSummary summary;
  const int n = spec.count(split);
  for (int i = 0; i < n; ++i) {
    const Scene scene = render_scene(spec, scene_seed(spec.seed, split, i));
    DatasetImage entry;
    entry.id = i;
    entry.file = fmt::format("{:06d}.zimg", i);
    entry.h = scene.image.h;
    entry.w = scene.image.w;
    for (const auto& obj : scene.objects) entry.gts.push_back(obj.box);
    write_zimg(dir / entry.file, scene.image);
    summary.objects += static_cast<int>(scene.objects.size());
    summary.dropped += scene.dropped;
    ds.images.push_back(std::move(entry));
  }
  summary.images = n;
  write_annotations(dir / "annotations.json", ds);
  if (summary.dropped > 0) {
    spdlog::info("{}: {} objects could not be placed and were dropped", split_name(split),
                 summary.dropped);
  }
  return summary;
}

}  // namespace zipnet
