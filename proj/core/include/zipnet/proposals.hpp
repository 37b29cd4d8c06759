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
#include <filesystem>
#include <map>
#include <vector>

#include "zipnet/anchors.hpp"
#include "zipnet/box.hpp"
#include "zipnet/metrics.hpp"

namespace zipnet {

struct ProposalConfig {
  double level_nms_iou = 0.5;
  int level_top_k = 2000;
  int merge_pre_top_k = 3000;  // candidates entering the final NMS
  std::vector<int> budgets{10, 100, 500, 1000};
  std::vector<int> scales{256, 192, 128};  // longer image side per test scale
  double bias_lo = -0.2;
  double bias_hi = 0.2;
  double bias_step = 0.05;
  double thresh_lo = 0.40;
  double thresh_hi = 0.90;
  double thresh_step = 0.05;
  double bias_search_iou = 0.70;  // final NMS threshold while biases are searched
  int bias_budget = 100;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  std::vector<double> bias_grid() const;
  std::vector<double> thresh_grid() const;
};

/// Greedy NMS. Boxes are visited by descending score (lower input index
/// first on ties); a box is kept unless it overlaps an already kept box with
/// IoU > iou_thresh. Stops after top_k keeps (top_k <= 0: no limit).
BoxList nms(const BoxList& boxes, double iou_thresh, int top_k);

/// Dense per-anchor predictions of one level and one image.
struct LevelPrediction {
  const AnchorGrid* anchors = nullptr;
  std::vector<double> scores;   // positive-class probability per anchor
  std::vector<Offsets> offsets; // regression output per anchor
};

/// Decodes every anchor, clips to the image, tags the level, then runs
/// nms(level_nms_iou, level_top_k).
BoxList decode_and_filter(const LevelPrediction& pred, int image_h, int image_w,
                          const ProposalConfig& cfg);

/// Per-level proposal lists of one image in original image coordinates.
using LevelBoxes = std::array<BoxList, kNumLevels>;

struct CalibrationBias {
  std::array<double, kNumLevels> b{0.0, 0.0, 0.0};
};

/// Adds each level's bias (scores clipped to [0, 1]), concatenates level 1,
/// 2, 3, keeps the merge_pre_top_k best and returns nms(iou, budget).
BoxList merge_and_final_nms(const LevelBoxes& levels, const CalibrationBias& bias, int budget,
                            double iou, int pre_top_k);

struct ProposalCalibration {
  CalibrationBias bias;
  std::map<int, double> thresholds;  // final NMS IoU per budget
  // AR of every evaluated grid point, in enumeration order.
  std::vector<std::pair<CalibrationBias, double>> bias_table;
  std::map<int, std::vector<std::pair<double, double>>> thresh_table;

  double threshold_for(int budget) const;
};

/// Keeps `base` (at most `budget` boxes) and tops it up from `fill` in order,
/// skipping boxes already present, until `budget` boxes are held.
BoxList extend_proposals(const BoxList& base, const BoxList& fill, int budget);

/// Grid search over (b1, b2) with b3 = 0 maximizing AR@bias_budget, then a
/// per-budget search over the threshold grid with the chosen biases, smallest
/// budget first. Each budget's list extends the one chosen for the budget
/// below it, so recall never drops as the budget grows. Ties prefer the
/// smaller |b1| + |b2|, then enumeration order; thresholds tie to the lowest
/// value. An empty split returns zero biases and the grid midpoint thresholds
/// with a warning.
ProposalCalibration calibrate(const std::vector<LevelBoxes>& raw, const std::vector<BoxList>& gts,
                              const ProposalConfig& cfg);

/// Final proposals per budget for one image, nested the same way as in
/// calibrate().
std::map<int, BoxList> finalize(const LevelBoxes& raw, const ProposalCalibration& cal,
                                const ProposalConfig& cfg);

/// Builds an evaluation record: `boxes` holds the largest budget's list and
/// `budget_boxes` every budget's list.
ProposalRecord make_record(int image_id, const std::map<int, BoxList>& per_budget);

/// JSON lines {"image_id", "boxes": [[x1, y1, x2, y2, score], ...],
/// "budget_boxes": {"10": [...], ...}}.
void write_proposals_jsonl(const std::filesystem::path& path,
                           const std::vector<ProposalRecord>& records);
std::vector<ProposalRecord> read_proposals_jsonl(const std::filesystem::path& path);

void write_calibration_json(const std::filesystem::path& path, const ProposalCalibration& cal);
ProposalCalibration read_calibration_json(const std::filesystem::path& path);

}  // namespace zipnet
