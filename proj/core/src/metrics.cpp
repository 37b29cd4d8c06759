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

#include "zipnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <fmt/format.h>

#include <json.hpp>

#include "zipnet/errors.hpp"

namespace zipnet {

namespace {

// Greedy matching on a precomputed IoU matrix (proposal-major).
int match_on_matrix(const std::vector<double>& m, std::size_t np, std::size_t ng, double thresh,
                    std::vector<std::uint8_t>& taken) {
  taken.assign(ng, 0);
  int count = 0;
  for (std::size_t p = 0; p < np && count < static_cast<int>(ng); ++p) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < ng; ++g) {
      if (taken[g]) continue;
      const double v = m[p * ng + g];
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= thresh) {
      taken[best] = 1;
      ++count;
    }
  }
  return count;
}

std::vector<double> iou_matrix(const BoxList& props, std::size_t np, const BoxList& gts) {
  std::vector<double> m(np * gts.size());
  for (std::size_t p = 0; p < np; ++p) {
    for (std::size_t g = 0; g < gts.size(); ++g) m[p * gts.size() + g] = iou(props[p], gts[g]);
  }
  return m;
}

}  // namespace

std::vector<double> iou_grid() {
  std::vector<double> g;
  for (int i = 0; i < 10; ++i) g.push_back(0.5 + 0.05 * i);
  return g;
}

int match_greedy(const BoxList& proposals, const BoxList& gts, double thresh,
                 std::vector<std::uint8_t>* matched) {
  const auto m = iou_matrix(proposals, proposals.size(), gts);
  std::vector<std::uint8_t> taken;
  const int n = match_on_matrix(m, proposals.size(), gts.size(), thresh, taken);
  if (matched) *matched = std::move(taken);
  return n;
}

double image_recall(const BoxList& proposals, const BoxList& gts, double thresh) {
  if (gts.empty()) return 1.0;
  return static_cast<double>(match_greedy(proposals, gts, thresh)) /
         static_cast<double>(gts.size());
}

const char* bucket_name(SizeBucket b) {
  switch (b) {
    case SizeBucket::kSmall: return "small";
    case SizeBucket::kMedium: return "medium";
    case SizeBucket::kLarge: return "large";
  }
  return "?";
}

SizeBucket size_bucket(const Box& gt) {
  const double a = gt.area();
  if (a < 32.0 * 32.0) return SizeBucket::kSmall;
  if (a < 96.0 * 96.0) return SizeBucket::kMedium;
  return SizeBucket::kLarge;
}

BoxList ProposalRecord::top(int budget) const {
  if (const auto it = budget_boxes.find(budget); it != budget_boxes.end()) {
    BoxList b = it->second;
    if (static_cast<int>(b.size()) > budget) b.resize(budget);
    return b;
  }
  BoxList b(boxes.begin(), boxes.begin() + std::min<std::size_t>(boxes.size(), budget));
  return b;
}

RecallReport evaluate(const std::vector<ProposalRecord>& records, const Dataset& dataset,
                      const std::vector<int>& budgets, int bucket_budget) {
  if (budgets.empty()) throw ConfigError("eval.budgets: at least one budget is required");
  RecallReport r;
  r.budgets = budgets;
  r.ious = iou_grid();
  r.bucket_budget = bucket_budget;
  std::unordered_map<int, const ProposalRecord*> by_id;
  for (const auto& rec : records) by_id[rec.image_id] = &rec;

  std::vector<int> budget_list = budgets;
  const bool extra_bucket_budget =
      std::find(budgets.begin(), budgets.end(), bucket_budget) == budgets.end();
  if (extra_bucket_budget) budget_list.push_back(bucket_budget);

  const std::size_t nb = budget_list.size(), nt = r.ious.size();
  std::vector<std::vector<long>> hits(nb, std::vector<long>(nt, 0));
  std::array<std::vector<long>, 3> bucket_hits;
  for (auto& v : bucket_hits) v.assign(nt, 0);
  const std::size_t bucket_index =
      std::find(budget_list.begin(), budget_list.end(), bucket_budget) - budget_list.begin();

  const ProposalRecord empty;
  for (const auto& im : dataset.images) {
    ++r.num_images;
    const auto it = by_id.find(im.id);
    const ProposalRecord& rec = it == by_id.end() ? empty : *it->second;
    ImageMatches m;
    m.image_id = im.id;
    for (const auto& g : im.gts) m.gt_area.push_back(g.area());
    m.flags.resize(nb);
    if (!im.gts.empty()) {
      ++r.images_with_gts;
      r.num_gts += static_cast<int>(im.gts.size());
      for (const auto& g : im.gts) ++r.bucket_gts[static_cast<int>(size_bucket(g))];
    }
    for (std::size_t b = 0; b < nb; ++b) {
      const BoxList props = rec.top(budget_list[b]);
      const auto mat = iou_matrix(props, props.size(), im.gts);
      m.flags[b].resize(nt);
      for (std::size_t t = 0; t < nt; ++t) {
        hits[b][t] += match_on_matrix(mat, props.size(), im.gts.size(), r.ious[t], m.flags[b][t]);
        if (b == bucket_index) {
          for (std::size_t g = 0; g < im.gts.size(); ++g) {
            if (m.flags[b][t][g]) ++bucket_hits[static_cast<int>(size_bucket(im.gts[g]))][t];
          }
        }
      }
    }
    r.matches.push_back(std::move(m));
  }

  for (std::size_t b = 0; b < budgets.size(); ++b) {
    std::vector<double> row(nt, 0.0);
    double sum = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      row[t] = r.num_gts > 0 ? static_cast<double>(hits[b][t]) / r.num_gts : 0.0;
      sum += row[t];
    }
    r.recall.push_back(row);
    r.ar[budgets[b]] = sum / static_cast<double>(nt);
  }
  for (int k = 0; k < 3; ++k) {
    if (r.bucket_gts[k] == 0) continue;
    double sum = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      sum += static_cast<double>(bucket_hits[k][t]) / r.bucket_gts[k];
    }
    r.ar_bucket[k] = sum / static_cast<double>(nt);
  }
  if (extra_bucket_budget) {
    for (auto& m : r.matches) m.flags.pop_back();
  }
  return r;
}

double average_recall(const std::vector<BoxList>& proposals, const std::vector<BoxList>& gts,
                      int budget) {
  if (proposals.size() != gts.size()) {
    throw DimensionError(fmt::format("average_recall: {} proposal lists for {} gt lists",
                                     proposals.size(), gts.size()));
  }
  const auto ious = iou_grid();
  long total = 0;
  long hits = 0;
  std::vector<std::uint8_t> taken;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].empty()) continue;
    total += static_cast<long>(gts[i].size());
    const std::size_t np = std::min<std::size_t>(proposals[i].size(), budget);
    const auto mat = iou_matrix(proposals[i], np, gts[i]);
    for (double t : ious) hits += match_on_matrix(mat, np, gts[i].size(), t, taken);
  }
  if (total == 0) return 0.0;
  return static_cast<double>(hits) / (static_cast<double>(total) * ious.size());
}

void write_report_json(const std::filesystem::path& path, const RecallReport& r) {
  nlohmann::ordered_json j;
  j["num_images"] = r.num_images;
  j["images_with_gts"] = r.images_with_gts;
  j["num_gts"] = r.num_gts;
  j["budgets"] = r.budgets;
  j["iou_thresholds"] = r.ious;
  nlohmann::ordered_json ar = nlohmann::ordered_json::object();
  for (int b : r.budgets) ar[std::to_string(b)] = r.ar.at(b);
  j["ar"] = ar;
  j["bucket_budget"] = r.bucket_budget;
  nlohmann::ordered_json buckets = nlohmann::ordered_json::object();
  for (auto b : kBuckets) {
    const int k = static_cast<int>(b);
    nlohmann::ordered_json e;
    e["gts"] = r.bucket_gts[k];
    e["ar"] = r.ar_bucket[k] ? nlohmann::ordered_json(*r.ar_bucket[k]) : nlohmann::ordered_json();
    buckets[bucket_name(b)] = e;
  }
  j["ar_bucket"] = buckets;
  j["recall"] = r.recall;
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_recall_csv(const std::filesystem::path& path, const RecallReport& r) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "iou";
  for (int b : r.budgets) out << ",recall@" << b;
  out << '\n';
  for (std::size_t t = 0; t < r.ious.size(); ++t) {
    out << fmt::format("{:.2f}", r.ious[t]);
    for (std::size_t b = 0; b < r.budgets.size(); ++b) {
      out << fmt::format(",{:.6f}", r.recall[b][t]);
    }
    out << '\n';
  }
}

std::string ascii_curves(const RecallReport& r) {
  std::string s = "recall vs IoU threshold\n";
  constexpr int kWidth = 50;
  for (std::size_t b = 0; b < r.budgets.size(); ++b) {
    s += fmt::format("  budget {} (AR {:.4f})\n", r.budgets[b], r.ar.at(r.budgets[b]));
    for (std::size_t t = 0; t < r.ious.size(); ++t) {
      const int bar = static_cast<int>(std::lround(r.recall[b][t] * kWidth));
      s += fmt::format("    {:.2f} |{:<{}}| {:.4f}\n", r.ious[t], std::string(bar, '#'), kWidth,
                       r.recall[b][t]);
    }
  }
  s += "AR vs budget\n";
  for (int b : r.budgets) {
    const int bar = static_cast<int>(std::lround(r.ar.at(b) * kWidth));
    s += fmt::format("  {:>5} |{:<{}}| {:.4f}\n", b, std::string(bar, '#'), kWidth, r.ar.at(b));
  }
  s += fmt::format("AR by object size @{}\n", r.bucket_budget);
  for (auto bk : kBuckets) {
    const int k = static_cast<int>(bk);
    if (r.ar_bucket[k]) {
      s += fmt::format("  {:<6} {:.4f} ({} gts)\n", bucket_name(bk), *r.ar_bucket[k],
                       r.bucket_gts[k]);
    } else {
      s += fmt::format("  {:<6} absent\n", bucket_name(bk));
    }
  }
  return s;
}

void write_report_dir(const std::filesystem::path& dir, const RecallReport& report) {
  std::filesystem::create_directories(dir);
  write_report_json(dir / "report.json", report);
  write_recall_csv(dir / "recall_grid.csv", report);
  std::ofstream out(dir / "curves.txt");
  if (!out) throw FormatError("cannot write " + (dir / "curves.txt").string());
  out << ascii_curves(report);
}

}  // namespace zipnet
