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

#include "zipnet/assign.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "zipnet/errors.hpp"

namespace zipnet {

void AssignmentConfig::validate() const {
  if (!(iou_neg < gray_low && gray_low < gray_high && gray_high < iou_pos)) {
    throw ConfigError(fmt::format(
        "assignment thresholds must satisfy iou_neg < gray_low < gray_high < iou_pos, got "
        "{} / {} / {} / {}",
        iou_neg, gray_low, gray_high, iou_pos));
  }
  if (batch_cap < 3 || neg_to_pos_max < 0 || empty_neg_floor < 0 || gray_fraction < 0.0) {
    throw ConfigError("assignment caps must be non-negative and batch_cap >= 3");
  }
}

Band classify_iou(double max_iou, const AssignmentConfig& cfg) {
  if (max_iou >= cfg.iou_pos) return Band::kPositive;
  if (max_iou < cfg.iou_neg) return Band::kNegative;
  if (max_iou < cfg.gray_low) return Band::kDeadLow;
  if (max_iou <= cfg.gray_high) return Band::kGray;
  return Band::kDeadHigh;
}

std::vector<AnchorOverlap> anchor_overlaps(const AnchorGrid& grid, const BoxList& gts) {
  std::vector<AnchorOverlap> out(grid.size());
  for (std::size_t a = 0; a < grid.size(); ++a) {
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(grid.boxes[a], gts[g]);
      if (v > out[a].max_iou) {
        out[a].max_iou = v;
        out[a].best_gt = static_cast<int>(g);
      }
    }
  }
  return out;
}

namespace {

// Uniformly chooses `k` elements of `pool` (partial Fisher-Yates), keeping
// the chosen ones in ascending order.
std::vector<int> sample(std::vector<int> pool, std::size_t k, std::mt19937_64& rng) {
  if (pool.size() > k) {
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(k);
  }
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

std::vector<LevelTargets> assign(const std::vector<AnchorGrid>& levels, const BoxList& gts,
                                 const AssignmentConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  std::vector<std::vector<AnchorOverlap>> overlaps;
  overlaps.reserve(levels.size());
  for (const auto& grid : levels) overlaps.push_back(anchor_overlaps(grid, gts));

  // Best in-image anchor per gt across all levels; an anchor already forced
  // for an earlier gt is skipped so every gt keeps one of its own.
  struct Forced {
    double iou = 0.0;
    int level_pos = -1;
    int anchor = -1;
  };
  std::vector<Forced> forced(gts.size());
  std::set<std::pair<int, int>> taken;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    for (std::size_t li = 0; li < levels.size(); ++li) {
      const auto& grid = levels[li];
      for (std::size_t a = 0; a < grid.size(); ++a) {
        if (grid.out_of_image[a]) continue;
        const double v = iou(grid.boxes[a], gts[g]);
        if (v > forced[g].iou &&
            !taken.count({static_cast<int>(li), static_cast<int>(a)})) {
          forced[g] = {v, static_cast<int>(li), static_cast<int>(a)};
        }
      }
    }
    if (forced[g].iou > 0.0) taken.insert({forced[g].level_pos, forced[g].anchor});
  }

  const std::size_t cap = static_cast<std::size_t>(cfg.per_class_cap());
  std::vector<LevelTargets> out;
  out.reserve(levels.size());
  for (std::size_t li = 0; li < levels.size(); ++li) {
    const auto& grid = levels[li];
    const auto& ov = overlaps[li];
    // gt that each forced anchor regresses to
    std::vector<std::pair<int, int>> forced_here;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (forced[g].level_pos == static_cast<int>(li) && forced[g].iou > 0.0) {
        forced_here.emplace_back(forced[g].anchor, static_cast<int>(g));
      }
    }
    std::sort(forced_here.begin(), forced_here.end());

    std::vector<int> pos, neg, gray;
    for (std::size_t a = 0; a < grid.size(); ++a) {
      const int ai = static_cast<int>(a);
      const bool is_forced = std::any_of(forced_here.begin(), forced_here.end(),
                                         [ai](const auto& f) { return f.first == ai; });
      if (is_forced) continue;
      switch (classify_iou(ov[a].max_iou, cfg)) {
        case Band::kPositive:
          if (!grid.out_of_image[a]) pos.push_back(ai);
          break;
        case Band::kNegative:
          neg.push_back(ai);
          break;
        case Band::kGray:
          if (!grid.out_of_image[a]) gray.push_back(ai);
          break;
        default:
          break;
      }
    }

    // Forced anchors first (deduplicated), then sampled band positives.
    std::vector<std::pair<int, int>> chosen_pos;
    for (const auto& f : forced_here) {
      if (chosen_pos.empty() || chosen_pos.back().first != f.first) chosen_pos.push_back(f);
    }
    if (chosen_pos.size() > cap) chosen_pos.resize(cap);
    const std::size_t room = cap - chosen_pos.size();
    for (int a : sample(pos, room, rng)) chosen_pos.emplace_back(a, ov[a].best_gt);
    std::sort(chosen_pos.begin(), chosen_pos.end());

    const std::size_t p = chosen_pos.size();
    const std::size_t neg_quota =
        p > 0 ? std::min(cap, static_cast<std::size_t>(cfg.neg_to_pos_max) * p)
              : std::min(cap, static_cast<std::size_t>(cfg.empty_neg_floor));
    const auto chosen_neg = sample(neg, neg_quota, rng);
    const auto gray_quota = static_cast<std::size_t>(
        std::floor(cfg.gray_fraction * static_cast<double>(p + chosen_neg.size())));
    const auto chosen_gray = sample(gray, std::min(gray_quota, cap), rng);

    LevelTargets t;
    t.level = grid.level;
    t.num_pos = static_cast<int>(p);
    t.num_neg = static_cast<int>(chosen_neg.size());
    t.num_gray = static_cast<int>(chosen_gray.size());
    for (const auto& [a, g] : chosen_pos) {
      t.anchors.push_back(a);
      t.labels.push_back(kPositive);
      t.offsets.push_back(encode_offsets(grid.boxes[a], gts[g]));
      t.matched_gt.push_back(g);
    }
    for (int a : chosen_neg) {
      t.anchors.push_back(a);
      t.labels.push_back(kNegative);
      t.offsets.push_back({0, 0, 0, 0});
      t.matched_gt.push_back(-1);
    }
    for (int a : chosen_gray) {
      t.anchors.push_back(a);
      t.labels.push_back(kGray);
      t.offsets.push_back({0, 0, 0, 0});
      t.matched_gt.push_back(-1);
    }
    out.push_back(std::move(t));
  }
  return out;
}

double scale_for_target(const Box& gt, double target_side) {
  const double side = std::sqrt(gt.area());
  return side > 0.0 ? target_side / side : 1.0;
}

double clamp_train_scale(double factor, int image_h, int image_w, const TrainScaleConfig& cfg) {
  const double longer = std::max(image_h, image_w);
  return std::clamp(factor, cfg.min_side / longer, cfg.max_side / longer);
}

double dynamic_train_scale(int image_h, int image_w, const BoxList& gts,
                           const TrainScaleConfig& cfg, std::mt19937_64& rng) {
  if (gts.empty()) return 1.0;
  std::uniform_int_distribution<std::size_t> pick(0, gts.size() - 1);
  const Box& gt = gts[pick(rng)];
  std::uniform_real_distribution<double> side(cfg.target_lo, cfg.target_hi);
  return clamp_train_scale(scale_for_target(gt, side(rng)), image_h, image_w, cfg);
}

}  // namespace zipnet
