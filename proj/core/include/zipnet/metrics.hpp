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
#include <optional>
#include <string>
#include <vector>

#include "zipnet/box.hpp"
#include "zipnet/synth.hpp"

namespace zipnet {

/// IoU thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> iou_grid();

/// Walks the proposals in order; each claims its highest-IoU unmatched gt
/// (lowest index on ties) when that IoU is >= thresh. Returns the number of
/// matched gts; `matched`, when given, receives one flag per gt.
int match_greedy(const BoxList& proposals, const BoxList& gts, double thresh,
                 std::vector<std::uint8_t>* matched = nullptr);

/// Recall of one image; 1 when there are no gts.
double image_recall(const BoxList& proposals, const BoxList& gts, double thresh);

enum class SizeBucket { kSmall, kMedium, kLarge };
inline constexpr std::array<SizeBucket, 3> kBuckets{SizeBucket::kSmall, SizeBucket::kMedium,
                                                    SizeBucket::kLarge};
const char* bucket_name(SizeBucket b);
/// small: area < 32^2, medium: < 96^2, large otherwise.
SizeBucket size_bucket(const Box& gt);

/// Scored proposals of one image, best first. `budget_boxes` optionally
/// holds a dedicated list per budget; otherwise a budget takes the top N of
/// `boxes`.
struct ProposalRecord {
  int image_id = 0;
  BoxList boxes;
  std::map<int, BoxList> budget_boxes;

  BoxList top(int budget) const;
};

/// Match flags of one image: flags[b][t][g] is 1 when gt g was matched under
/// budget b and IoU threshold t.
struct ImageMatches {
  int image_id = 0;
  std::vector<double> gt_area;
  std::vector<std::vector<std::vector<std::uint8_t>>> flags;
};

struct RecallReport {
  std::vector<int> budgets;
  std::vector<double> ious;
  std::vector<std::vector<double>> recall;  // [budget][iou], micro-averaged
  std::map<int, double> ar;                 // per budget
  int bucket_budget = 100;
  std::array<std::optional<double>, 3> ar_bucket;  // absent for empty buckets
  std::array<int, 3> bucket_gts{0, 0, 0};
  int num_images = 0;
  int images_with_gts = 0;
  int num_gts = 0;
  std::vector<ImageMatches> matches;
};

/// Matches every image of the dataset against its record (missing records
/// count as empty proposal lists).
RecallReport evaluate(const std::vector<ProposalRecord>& records, const Dataset& dataset,
                      const std::vector<int>& budgets, int bucket_budget = 100);

/// AR at one budget from per-image proposal lists, aligned with `gts`.
double average_recall(const std::vector<BoxList>& proposals, const std::vector<BoxList>& gts,
                      int budget);

void write_report_json(const std::filesystem::path& path, const RecallReport& report);
void write_recall_csv(const std::filesystem::path& path, const RecallReport& report);
std::string ascii_curves(const RecallReport& report);
/// report.json, recall_grid.csv and curves.txt under `dir`.
void write_report_dir(const std::filesystem::path& dir, const RecallReport& report);

}  // namespace zipnet
