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

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"

#include "oracles.hpp"
#include "zipnet/errors.hpp"
#include "zipnet/metrics.hpp"
#include "zipnet/pipeline.hpp"
#include "zipnet/proposals.hpp"

using namespace zipnet;

namespace {

Box scored(double x1, double y1, double x2, double y2, double s) {
  Box b{x1, y1, x2, y2};
  b.score = s;
  return b;
}

// Scores on a 1/64 lattice so shifts stay exact and ties are common.
BoxList random_scored(std::mt19937_64& rng, int n, double extent) {
  BoxList out;
  std::uniform_int_distribution<int> s(0, 63);
  for (int i = 0; i < n; ++i) {
    Box b = oracle::random_box(rng, extent, 2.0, extent / 2);
    b.score = s(rng) / 64.0;
    out.push_back(b);
  }
  return out;
}

bool same_boxes(const BoxList& a, const BoxList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].x1 != b[i].x1 || a[i].y1 != b[i].y1 || a[i].x2 != b[i].x2 || a[i].y2 != b[i].y2)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("nms small cases") {
  CHECK(nms({}, 0.5, 10).empty());
  const auto one = nms({scored(1, 1, 5, 5, 0.3)}, 0.5, 10);
  REQUIRE(one.size() == 1);
  CHECK(one[0].score == 0.3);

  const auto dup = nms({scored(0, 0, 10, 10, 0.8), scored(0, 0, 10, 10, 0.9)}, 0.5, 10);
  REQUIRE(dup.size() == 1);
  CHECK(dup[0].score == 0.9);

  // equal scores: lower index wins
  auto tie = nms({scored(0, 0, 10, 10, 0.5), scored(1, 0, 11, 10, 0.5)}, 0.5, 0);
  REQUIRE(tie.size() == 1);
  CHECK(tie[0].x1 == 0);

  const BoxList apart{scored(0, 0, 1, 1, 0.1), scored(5, 5, 6, 6, 0.2), scored(9, 9, 10, 10, 0.3)};
  CHECK(nms(apart, 0.5, 2).size() == 2);
  CHECK(nms(apart, 0.5, 0).size() == 3);
}

TEST_CASE("nms equals the brute-force greedy oracle") {
  std::mt19937_64 rng(1);
  for (int inst = 0; inst < 1000; ++inst) {
    const int n = 1 + static_cast<int>(rng() % 200);
    const auto boxes = random_scored(rng, n, 100.0);
    const double th = 0.3 + 0.1 * static_cast<double>(inst % 5);
    const int top_k = inst % 3 == 0 ? 0 : 1 + static_cast<int>(rng() % 60);
    REQUIRE(same_boxes(nms(boxes, th, top_k), oracle::nms(boxes, th, top_k)));
  }
}

TEST_CASE("nms is suppression consistent and shift invariant") {
  std::mt19937_64 rng(2);
  for (int inst = 0; inst < 200; ++inst) {
    const auto boxes = random_scored(rng, 150, 80.0);
    const double th = 0.5;
    const auto kept = nms(boxes, th, 0);
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j) REQUIRE(oracle::iou(kept[i], kept[j]) <= th);
    for (const auto& b : boxes) {
      const bool is_kept = std::any_of(kept.begin(), kept.end(), [&](const Box& k) {
        return k.x1 == b.x1 && k.y1 == b.y1 && k.x2 == b.x2 && k.y2 == b.y2;
      });
      if (is_kept) continue;
      const bool covered = std::any_of(kept.begin(), kept.end(), [&](const Box& k) {
        return k.score >= b.score && oracle::iou(k, b) > th;
      });
      REQUIRE(covered);
    }
    auto shifted = boxes;
    for (auto& b : shifted) b.score += 3.0;
    REQUIRE(same_boxes(nms(shifted, th, 0), kept));
  }
}

TEST_CASE("decode_and_filter") {
  AnchorSpec spec;
  const auto grid = generate_anchors(spec, 2, 4, 5, 60, 80);
  ProposalConfig cfg;

  SUBCASE("zero offsets give the clipped anchors") {
    LevelPrediction p{&grid, {}, {}};
    for (std::size_t a = 0; a < grid.size(); ++a) {
      p.scores.push_back(1.0 - 0.001 * static_cast<double>(a));
      p.offsets.push_back({0, 0, 0, 0});
    }
    cfg.level_nms_iou = 1.0;
    const auto out = decode_and_filter(p, 60, 80, cfg);
    REQUIRE(out.size() == grid.size());
    for (std::size_t a = 0; a < grid.size(); ++a) {
      const Box c = clip_box(grid.boxes[a], 80, 60);
      CHECK(out[a].x1 == doctest::Approx(c.x1).epsilon(1e-12));
      CHECK(out[a].y2 == doctest::Approx(c.y2).epsilon(1e-12));
      CHECK(out[a].level == 2);
      CHECK(out[a].x1 >= 0);
      CHECK(out[a].x2 <= 80);
      CHECK(out[a].y2 <= 60);
    }
  }
  SUBCASE("decoded boxes match decode_offsets elementwise") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0.0, 0.3);
    LevelPrediction p{&grid, {}, {}};
    for (std::size_t a = 0; a < grid.size(); ++a) {
      p.scores.push_back(std::uniform_real_distribution<double>(0, 1)(rng));
      p.offsets.push_back({nd(rng), nd(rng), nd(rng), nd(rng)});
    }
    cfg.level_nms_iou = 1.0;
    const auto out = decode_and_filter(p, 60, 80, cfg);
    BoxList expect;
    for (std::size_t a = 0; a < grid.size(); ++a) {
      Box b = clip_box(decode_offsets(grid.boxes[a], p.offsets[a]), 80, 60);
      b.score = p.scores[a];
      if (b.valid()) expect.push_back(b);
    }
    std::stable_sort(expect.begin(), expect.end(),
                     [](const Box& x, const Box& y) { return x.score > y.score; });
    CHECK(same_boxes(out, expect));
  }
  SUBCASE("uniform scores keep a spread of boxes") {
    LevelPrediction p{&grid, std::vector<double>(grid.size(), 0.5),
                      std::vector<Offsets>(grid.size(), Offsets{0, 0, 0, 0})};
    const auto out = decode_and_filter(p, 60, 80, cfg);
    CHECK(out.size() > 1);
    CHECK(out.size() < grid.size());
    for (const auto& b : out) CHECK(b.score == 0.5);
  }
  SUBCASE("length mismatch") {
    LevelPrediction p{&grid, {0.1}, {Offsets{}}};
    CHECK_THROWS_AS(decode_and_filter(p, 60, 80, cfg), DimensionError);
  }
}

TEST_CASE("merge_and_final_nms") {
  const BoxList lone{scored(0, 0, 4, 4, 0.7), scored(10, 10, 14, 14, 0.5), scored(20, 0, 24, 4, 0.2)};
  LevelBoxes single{BoxList{}, BoxList{}, lone};
  CalibrationBias bias;
  bias.b = {0.0, 0.0, 0.0};
  auto out = merge_and_final_nms(single, bias, 10, 0.5, 3000);
  CHECK(same_boxes(out, lone));

  bias.b = {0.3, 0.1, 0.0};
  LevelBoxes first{lone, BoxList{}, BoxList{}};
  out = merge_and_final_nms(first, bias, 10, 0.5, 3000);
  REQUIRE(out.size() == 3);
  CHECK(out[0].score == doctest::Approx(1.0));  // clipped
  CHECK(out[1].score == doctest::Approx(0.8));
  CHECK(out[2].score == doctest::Approx(0.5));

  // the same box from two levels survives once
  LevelBoxes dup{lone, BoxList{}, lone};
  bias.b = {0.0, 0.0, 0.0};
  out = merge_and_final_nms(dup, bias, 10, 0.5, 3000);
  CHECK(out.size() == 3);

  std::mt19937_64 rng(4);
  for (int inst = 0; inst < 50; ++inst) {
    LevelBoxes lv;
    for (auto& l : lv) {
      l = random_scored(rng, 60, 100.0);
      std::stable_sort(l.begin(), l.end(), [](const Box& x, const Box& y) { return x.score > y.score; });
    }
    bias.b = {0.05, -0.1, 0.0};
    const auto once = merge_and_final_nms(lv, bias, 30, 0.6, 3000);
    LevelBoxes again{once, BoxList{}, BoxList{}};
    const auto twice = merge_and_final_nms(again, CalibrationBias{}, 30, 0.6, 3000);
    REQUIRE(same_boxes(once, twice));
    REQUIRE(once.size() <= 30);
  }
}

TEST_CASE("calibration") {
  ProposalConfig cfg;
  cfg.budgets = {2, 10};

  SUBCASE("empty split gives zero biases") {
    const auto cal = calibrate({LevelBoxes{}}, {BoxList{}}, cfg);
    CHECK(cal.bias.b == std::array<double, 3>{0, 0, 0});
    CHECK(cal.thresholds.size() == 2);
  }

  // per image two gts; level 3 finds one plus junk, level 1 finds the other
  // with a score 0.1 below the level-3 junk
  std::vector<LevelBoxes> raw;
  std::vector<BoxList> gts;
  for (int i = 0; i < 6; ++i) {
    const double o = 3.0 * i;
    const Box g0{o, o, o + 20, o + 20}, g1{60, 60 + o, 80, 80 + o};
    gts.push_back({g0, g1});
    LevelBoxes lv;
    lv[2] = {scored(g0.x1, g0.y1, g0.x2, g0.y2, 0.9), scored(120, 0, 140, 20, 0.8),
             scored(120, 40, 140, 60, 0.7)};
    lv[0] = {scored(g1.x1, g1.y1, g1.x2, g1.y2, 0.7)};
    raw.push_back(lv);
  }
  cfg.bias_budget = 2;

  SUBCASE("a level that scores low gets a positive bias") {
    const auto cal = calibrate(raw, gts, cfg);
    CHECK(cal.bias.b[0] > 0.0);
    CHECK(cal.bias.b[2] == 0.0);
    double best = -1;
    for (const auto& [b, ar] : cal.bias_table) best = std::max(best, ar);
    const auto chosen = std::find_if(cal.bias_table.begin(), cal.bias_table.end(), [&](const auto& e) {
      return e.first.b == cal.bias.b;
    });
    REQUIRE(chosen != cal.bias_table.end());
    CHECK(chosen->second == best);
    CHECK(cal.bias_table.size() == cfg.bias_grid().size() * cfg.bias_grid().size());
    for (int budget : cfg.budgets) {
      const auto& table = cal.thresh_table.at(budget);
      REQUIRE(table.size() == cfg.thresh_grid().size());
      auto arg = table.begin();
      for (auto it = table.begin(); it != table.end(); ++it)
        if (it->second > arg->second) arg = it;
      CHECK(cal.threshold_for(budget) == arg->first);
    }
    CHECK_THROWS_AS(cal.threshold_for(7), ConfigError);
  }

  SUBCASE("identical levels need no bias") {
    std::vector<LevelBoxes> same;
    for (const auto& lv : raw) {
      BoxList all = lv[2];
      all.insert(all.end(), lv[0].begin(), lv[0].end());
      std::stable_sort(all.begin(), all.end(), [](const Box& x, const Box& y) { return x.score > y.score; });
      same.push_back({all, all, all});
    }
    const auto cal = calibrate(same, gts, cfg);
    CHECK(cal.bias.b == std::array<double, 3>{0, 0, 0});
  }

  SUBCASE("finalize follows the calibration") {
    const auto cal = calibrate(raw, gts, cfg);
    const auto per = finalize(raw[0], cal, cfg);
    REQUIRE(per.size() == 2);
    CHECK(per.at(2).size() <= 2);
    const auto rec = make_record(0, per);
    CHECK(same_boxes(rec.boxes, per.at(10)));
    CHECK(image_recall(per.at(2), gts[0], 0.5) == 1.0);
  }

  SUBCASE("larger budgets extend smaller ones") {
    std::mt19937_64 rng(41);
    std::vector<LevelBoxes> noisy;
    std::vector<BoxList> truth;
    for (int i = 0; i < 12; ++i) {
      LevelBoxes lv;
      for (auto& l : lv) l = random_scored(rng, 60, 160.0);
      noisy.push_back(lv);
      truth.push_back(random_scored(rng, 5, 160.0));
    }
    cfg.budgets = {20, 3, 8};
    const auto cal = calibrate(noisy, truth, cfg);
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      const auto per = finalize(noisy[i], cal, cfg);
      REQUIRE(per.size() == 3);
      for (auto [lo, hi] : {std::pair{3, 8}, std::pair{8, 20}}) {
        const BoxList& small = per.at(lo);
        const BoxList& big = per.at(hi);
        REQUIRE(big.size() >= small.size());
        CHECK(same_boxes(small, BoxList(big.begin(), big.begin() + small.size())));
        for (double t : iou_grid()) {
          CHECK(image_recall(big, truth[i], t) >= image_recall(small, truth[i], t));
        }
      }
    }
  }
}

TEST_CASE("extend_proposals") {
  const BoxList base{scored(0, 0, 10, 10, 0.2), scored(5, 5, 9, 9, 0.1)};
  const BoxList fill{scored(0, 0, 10, 10, 0.9), scored(20, 20, 30, 30, 0.5),
                     scored(40, 40, 50, 50, 0.4)};
  const auto out = extend_proposals(base, fill, 3);
  REQUIRE(out.size() == 3);
  CHECK(same_boxes(out, {base[0], base[1], fill[1]}));
  CHECK(extend_proposals(base, fill, 1).size() == 1);
  CHECK(same_boxes(extend_proposals({}, fill, 10), fill));
}

TEST_CASE("config validation") {
  ProposalConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.scales = {256, 16};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.budgets = {};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  CHECK(cfg.bias_grid().size() == 9);
  CHECK(cfg.thresh_grid().size() == 11);
  CHECK(cfg.thresh_grid()[1] == 0.45);
}

TEST_CASE("multi-scale proposals") {
  ZipConfig zc;
  ZipNetwork<float> net(zc, 1);
  Image img(90, 120);
  std::mt19937_64 rng(5);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
  ProposalConfig cfg;
  cfg.level_top_k = 200;

  CHECK_THROWS_AS(predict(net, img, 16), ConfigError);

  const auto single = propose_single_scale(net, img, 120, cfg);
  const auto multi = multi_scale_propose(net, img, {120}, cfg);
  for (int m = 0; m < 3; ++m) CHECK(same_boxes(single[m], multi[m]));

  const auto fused = multi_scale_propose(net, img, {160, 96, 64}, cfg);
  for (const auto& level : fused)
    for (const auto& b : level) {
      REQUIRE(b.x1 >= 0);
      REQUIRE(b.y1 >= 0);
      REQUIRE(b.x2 <= 120);
      REQUIRE(b.y2 <= 90);
      REQUIRE(std::isfinite(b.score));
    }
}
