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

#include "zipnet/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

#include "zipnet/errors.hpp"

namespace zipnet {

namespace {

std::vector<double> make_grid(double lo, double hi, double step) {
  std::vector<double> g;
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  for (int i = 0; i <= n; ++i) {
    // round to 1e-9 so 0.35000000000000003 and friends print cleanly
    g.push_back(std::round((lo + step * i) * 1e9) / 1e9);
  }
  return g;
}

// Kept boxes in structure-of-arrays form so the overlap test vectorizes.
class KeptSet {
 public:
  explicit KeptSet(std::size_t reserve) {
    x1_.reserve(reserve);
    y1_.reserve(reserve);
    x2_.reserve(reserve);
    y2_.reserve(reserve);
    area_.reserve(reserve);
  }

  std::size_t size() const { return x1_.size(); }

  // Same arithmetic as iou(); true when some kept box has IoU > thresh.
  bool suppresses(const Box& b, double thresh) const {
    const double ba = b.area();
    const std::size_t n = size();
    constexpr std::size_t kChunk = 64;
    for (std::size_t s = 0; s < n; s += kChunk) {
      const std::size_t e = std::min(n, s + kChunk);
      bool hit = false;
      for (std::size_t i = s; i < e; ++i) {
        const double iw = std::min(x2_[i], b.x2) - std::max(x1_[i], b.x1);
        const double ih = std::min(y2_[i], b.y2) - std::max(y1_[i], b.y1);
        const double inter = iw * ih;
        const double uni = area_[i] + ba - inter;
        const bool overlap = iw > 0.0 && ih > 0.0 && uni > 0.0 && inter / uni > thresh;
        hit |= overlap;
      }
      if (hit) return true;
    }
    return false;
  }

  void add(const Box& b) {
    x1_.push_back(b.x1);
    y1_.push_back(b.y1);
    x2_.push_back(b.x2);
    y2_.push_back(b.y2);
    area_.push_back(b.area());
  }

 private:
  std::vector<double> x1_, y1_, x2_, y2_, area_;
};

bool sorted_desc(const BoxList& b) {
  return std::is_sorted(b.begin(), b.end(),
                        [](const Box& x, const Box& y) { return x.score > y.score; });
}

BoxList sort_desc(BoxList b) {
  std::stable_sort(b.begin(), b.end(),
                   [](const Box& x, const Box& y) { return x.score > y.score; });
  return b;
}

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

void ProposalConfig::validate() const {
  auto fail = [](const char* field, const std::string& why) {
    throw ConfigError(fmt::format("propose.{}: {}", field, why));
  };
  if (!(level_nms_iou > 0.0 && level_nms_iou <= 1.0)) fail("level_nms_iou", "must be in (0, 1]");
  if (level_top_k < 1) fail("level_top_k", "must be >= 1");
  if (merge_pre_top_k < 1) fail("merge_pre_top_k", "must be >= 1");
  if (budgets.empty()) fail("budgets", "at least one budget is required");
  for (int b : budgets) {
    if (b < 1) fail("budgets", fmt::format("budget {} must be >= 1", b));
  }
  if (scales.empty()) fail("scales", "at least one scale is required");
  for (int s : scales) {
    if (s < 32) fail("scales", fmt::format("scale {} is below the stride floor 32", s));
  }
  if (!(bias_step > 0.0 && bias_hi >= bias_lo)) fail("bias_step", "need step > 0 and lo <= hi");
  if (!(thresh_step > 0.0 && thresh_hi >= thresh_lo && thresh_lo > 0.0 && thresh_hi <= 1.0)) {
    fail("thresh_step", "need step > 0 and 0 < lo <= hi <= 1");
  }
  if (!(bias_search_iou > 0.0 && bias_search_iou <= 1.0)) fail("bias_search_iou", "must be in (0, 1]");
  if (bias_budget < 1) fail("bias_budget", "must be >= 1");
}

std::vector<double> ProposalConfig::bias_grid() const {
  return make_grid(bias_lo, bias_hi, bias_step);
}

std::vector<double> ProposalConfig::thresh_grid() const {
  return make_grid(thresh_lo, thresh_hi, thresh_step);
}

BoxList nms(const BoxList& boxes, double iou_thresh, int top_k) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return boxes[a].score > boxes[b].score;
  });
  const std::size_t limit = top_k > 0 ? static_cast<std::size_t>(top_k) : boxes.size();
  KeptSet kept(std::min(limit, boxes.size()));
  BoxList out;
  for (std::size_t i : order) {
    if (out.size() >= limit) break;
    if (kept.suppresses(boxes[i], iou_thresh)) continue;
    kept.add(boxes[i]);
    out.push_back(boxes[i]);
  }
  return out;
}

BoxList decode_and_filter(const LevelPrediction& pred, int image_h, int image_w,
                          const ProposalConfig& cfg) {
  const AnchorGrid& grid = *pred.anchors;
  if (pred.scores.size() != grid.size() || pred.offsets.size() != grid.size()) {
    throw DimensionError(fmt::format("decode_and_filter: {} anchors but {} scores / {} offsets",
                                     grid.size(), pred.scores.size(), pred.offsets.size()));
  }
  BoxList boxes;
  boxes.reserve(grid.size());
  for (std::size_t a = 0; a < grid.size(); ++a) {
    Box b = clip_box(decode_offsets(grid.boxes[a], pred.offsets[a]), image_w, image_h);
    if (!b.valid() || !std::isfinite(pred.scores[a])) continue;
    b.score = pred.scores[a];
    b.level = grid.level;
    boxes.push_back(b);
  }
  return nms(boxes, cfg.level_nms_iou, cfg.level_top_k);
}

BoxList merge_and_final_nms(const LevelBoxes& levels, const CalibrationBias& bias, int budget,
                            double iou, int pre_top_k) {
  // Each level list sorted descending; adding a constant and clipping keeps
  // that order, so a k-way merge (lower level first on ties) reproduces a
  // stable sort of the concatenation without materializing it.
  std::array<BoxList, kNumLevels> sorted;
  std::array<const BoxList*, kNumLevels> src{};
  for (int m = 0; m < kNumLevels; ++m) {
    if (sorted_desc(levels[m])) {
      src[m] = &levels[m];
    } else {
      sorted[m] = sort_desc(levels[m]);
      src[m] = &sorted[m];
    }
  }
  std::array<std::size_t, kNumLevels> pos{0, 0, 0};
  KeptSet kept(static_cast<std::size_t>(std::max(budget, 0)));
  BoxList out;
  for (int taken = 0; taken < pre_top_k && static_cast<int>(out.size()) < budget; ++taken) {
    int best = -1;
    double best_score = 0.0;
    for (int m = 0; m < kNumLevels; ++m) {
      if (pos[m] >= src[m]->size()) continue;
      const double s = clip01((*src[m])[pos[m]].score + bias.b[m]);
      if (best < 0 || s > best_score) {
        best = m;
        best_score = s;
      }
    }
    if (best < 0) break;
    Box b = (*src[best])[pos[best]++];
    b.score = best_score;
    if (kept.suppresses(b, iou)) continue;
    kept.add(b);
    out.push_back(b);
  }
  return out;
}

namespace {

std::vector<int> ascending(std::vector<int> budgets) {
  std::sort(budgets.begin(), budgets.end());
  budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());
  return budgets;
}

bool same_box(const Box& a, const Box& b) {
  return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2;
}

}  // namespace

BoxList extend_proposals(const BoxList& base, const BoxList& fill, int budget) {
  const auto cap = static_cast<std::size_t>(std::max(budget, 0));
  BoxList out(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(std::min(cap, base.size())));
  const std::size_t kept = out.size();
  for (const auto& b : fill) {
    if (out.size() >= cap) break;
    const bool dup = std::any_of(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(kept),
                                 [&](const Box& o) { return same_box(o, b); });
    if (!dup) out.push_back(b);
  }
  return out;
}

double ProposalCalibration::threshold_for(int budget) const {
  if (const auto it = thresholds.find(budget); it != thresholds.end()) return it->second;
  throw ConfigError(fmt::format("no calibrated NMS threshold for budget {}", budget));
}

ProposalCalibration calibrate(const std::vector<LevelBoxes>& raw, const std::vector<BoxList>& gts,
                              const ProposalConfig& cfg) {
  cfg.validate();
  if (raw.size() != gts.size()) {
    throw DimensionError(fmt::format("calibrate: {} proposal sets for {} gt lists", raw.size(),
                                     gts.size()));
  }
  ProposalCalibration cal;
  const auto tgrid = cfg.thresh_grid();
  const bool empty = std::all_of(gts.begin(), gts.end(), [](const BoxList& g) { return g.empty(); });
  if (empty) {
    spdlog::warn("calibration split has no annotated objects; using zero biases");
    for (int b : cfg.budgets) cal.thresholds[b] = tgrid[tgrid.size() / 2];
    return cal;
  }

  auto ar_with = [&](const CalibrationBias& bias, int budget, double thresh) {
    std::vector<BoxList> finals;
    finals.reserve(raw.size());
    for (const auto& r : raw) {
      finals.push_back(merge_and_final_nms(r, bias, budget, thresh, cfg.merge_pre_top_k));
    }
    return average_recall(finals, gts, budget);
  };

  const auto bgrid = cfg.bias_grid();
  double best_ar = -1.0;
  double best_mag = 0.0;
  for (double b1 : bgrid) {
    for (double b2 : bgrid) {
      CalibrationBias bias;
      bias.b = {b1, b2, 0.0};
      const double ar = ar_with(bias, cfg.bias_budget, cfg.bias_search_iou);
      cal.bias_table.emplace_back(bias, ar);
      const double mag = std::abs(b1) + std::abs(b2);
      if (ar > best_ar || (ar == best_ar && mag < best_mag - 1e-12)) {
        best_ar = ar;
        best_mag = mag;
        cal.bias = bias;
      }
    }
  }
  std::vector<BoxList> below(raw.size());
  for (int budget : ascending(cfg.budgets)) {
    double best = -1.0;
    std::vector<BoxList> chosen;
    for (double t : tgrid) {
      std::vector<BoxList> finals;
      finals.reserve(raw.size());
      for (std::size_t i = 0; i < raw.size(); ++i) {
        finals.push_back(extend_proposals(
            below[i], merge_and_final_nms(raw[i], cal.bias, budget, t, cfg.merge_pre_top_k),
            budget));
      }
      const double ar = average_recall(finals, gts, budget);
      cal.thresh_table[budget].emplace_back(t, ar);
      if (ar > best) {
        best = ar;
        cal.thresholds[budget] = t;
        chosen = std::move(finals);
      }
    }
    below = std::move(chosen);
  }
  return cal;
}

std::map<int, BoxList> finalize(const LevelBoxes& raw, const ProposalCalibration& cal,
                                const ProposalConfig& cfg) {
  std::map<int, BoxList> out;
  BoxList below;
  for (int budget : ascending(cfg.budgets)) {
    below = extend_proposals(
        below,
        merge_and_final_nms(raw, cal.bias, budget, cal.threshold_for(budget), cfg.merge_pre_top_k),
        budget);
    out[budget] = below;
  }
  return out;
}

ProposalRecord make_record(int image_id, const std::map<int, BoxList>& per_budget) {
  ProposalRecord r;
  r.image_id = image_id;
  r.budget_boxes = per_budget;
  if (!per_budget.empty()) r.boxes = per_budget.rbegin()->second;
  return r;
}

namespace {

nlohmann::ordered_json boxes_json(const BoxList& boxes) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& b : boxes) arr.push_back({b.x1, b.y1, b.x2, b.y2, b.score});
  return arr;
}

BoxList boxes_from_json(const nlohmann::json& arr, int image_id) {
  BoxList out;
  for (const auto& e : arr) {
    const auto v = e.get<std::vector<double>>();
    if (v.size() != 5) {
      throw FormatError(fmt::format("image {}: proposal entries need 5 values, got {}", image_id,
                                    v.size()));
    }
    out.push_back(Box{v[0], v[1], v[2], v[3], v[4]});
  }
  return out;
}

}  // namespace

void write_proposals_jsonl(const std::filesystem::path& path,
                           const std::vector<ProposalRecord>& records) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["image_id"] = r.image_id;
    j["boxes"] = boxes_json(r.boxes);
    if (!r.budget_boxes.empty()) {
      nlohmann::ordered_json per = nlohmann::ordered_json::object();
      for (const auto& [budget, boxes] : r.budget_boxes) per[std::to_string(budget)] = boxes_json(boxes);
      j["budget_boxes"] = per;
    }
    out << j.dump() << '\n';
  }
}

std::vector<ProposalRecord> read_proposals_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<ProposalRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ProposalRecord r;
      r.image_id = j.at("image_id").get<int>();
      r.boxes = boxes_from_json(j.at("boxes"), r.image_id);
      if (j.contains("budget_boxes")) {
        for (const auto& [key, arr] : j.at("budget_boxes").items()) {
          r.budget_boxes[std::stoi(key)] = boxes_from_json(arr, r.image_id);
        }
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

void write_calibration_json(const std::filesystem::path& path, const ProposalCalibration& cal) {
  nlohmann::ordered_json j;
  j["bias"] = cal.bias.b;
  nlohmann::ordered_json th = nlohmann::ordered_json::object();
  for (const auto& [budget, t] : cal.thresholds) th[std::to_string(budget)] = t;
  j["thresholds"] = th;
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ProposalCalibration read_calibration_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  ProposalCalibration cal;
  try {
    const auto j = nlohmann::json::parse(in);
    cal.bias.b = j.at("bias").get<std::array<double, kNumLevels>>();
    for (const auto& [key, t] : j.at("thresholds").items()) cal.thresholds[std::stoi(key)] = t.get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return cal;
}

}  // namespace zipnet
