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
#include <random>
#include <vector>

#include "zipnet/anchors.hpp"
#include "zipnet/box.hpp"

namespace zipnet {

struct AssignmentConfig {
  double iou_pos = 0.60;    // positive at or above
  double gray_low = 0.35;   // gray band [gray_low, gray_high]
  double gray_high = 0.55;
  double iou_neg = 0.25;    // negative strictly below
  int neg_to_pos_max = 2;
  double gray_fraction = 0.5;
  int batch_cap = 300;      // split evenly across the three classes
  int empty_neg_floor = 32; // negatives drawn when a level has no positives

  /// Throws ConfigError unless iou_neg < gray_low < gray_high < iou_pos.
  void validate() const;
  int per_class_cap() const { return batch_cap / 3; }
};

enum AnchorClass : int { kNegative = 0, kGray = 1, kPositive = 2 };

/// IoU band of an anchor before sampling.
enum class Band { kNegative, kDeadLow, kGray, kDeadHigh, kPositive };

Band classify_iou(double max_iou, const AssignmentConfig& cfg);

/// Sampled training targets of one level.
struct LevelTargets {
  int level = 0;
  std::vector<int> anchors;       // sampled anchor indices
  std::vector<int> labels;        // AnchorClass per sampled anchor
  std::vector<Offsets> offsets;   // regression target, zero unless positive
  std::vector<int> matched_gt;    // gt index for positives, -1 otherwise
  int num_pos = 0;
  int num_neg = 0;
  int num_gray = 0;

  std::size_t size() const { return anchors.size(); }
};

/// Per-anchor overlap summary shared by sampling and tests.
struct AnchorOverlap {
  double max_iou = 0.0;
  int best_gt = -1;
};

std::vector<AnchorOverlap> anchor_overlaps(const AnchorGrid& grid, const BoxList& gts);

/// Labels and samples anchors on every level.
///
/// Bands follow classify_iou on the anchor's best overlap. Each gt, in
/// order, forces its best in-image anchor across all levels (lowest level,
/// then lowest index, on ties) positive when that overlap is > 0; anchors
/// forced by earlier gts are skipped. Per level at most
/// per_class_cap() positives are kept; negatives are capped at
/// neg_to_pos_max times the positives (or empty_neg_floor when the level has
/// none) and grays at gray_fraction of positives plus negatives.
std::vector<LevelTargets> assign(const std::vector<AnchorGrid>& levels, const BoxList& gts,
                                 const AssignmentConfig& cfg, std::mt19937_64& rng);

struct TrainScaleConfig {
  double target_lo = 64.0;
  double target_hi = 128.0;
  int min_side = 128;
  int max_side = 256;
};

/// Resize factor mapping gt's sqrt(area) onto `target_side`.
double scale_for_target(const Box& gt, double target_side);

/// Clamps a factor so the longer image side lands in [min_side, max_side].
double clamp_train_scale(double factor, int image_h, int image_w, const TrainScaleConfig& cfg);

/// Picks one gt and a target side uniformly, returns the clamped factor, or
/// 1 when there are no gts.
double dynamic_train_scale(int image_h, int image_w, const BoxList& gts,
                           const TrainScaleConfig& cfg, std::mt19937_64& rng);

}  // namespace zipnet
