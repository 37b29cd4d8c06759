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

#include <cmath>
#include <random>

#include "doctest.h"

#include "oracles.hpp"
#include "zipnet/errors.hpp"
#include "zipnet/network.hpp"
#include "zipnet/synth.hpp"
#include "zipnet/train.hpp"

using namespace zipnet;

namespace {

ZipConfig desk(Topology topo = Topology::kZip, bool mad = true) {
  ZipConfig c;
  c.topology = topo;
  c.use_mad = mad;
  return c;
}

Tensor<float> random_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_tensor<float>({1, 3, h, w}, rng);
}

bool ends_with(const std::string& s, const std::string& tail) {
  return s.size() >= tail.size() && s.compare(s.size() - tail.size(), tail.size(), tail) == 0;
}

}  // namespace

TEST_CASE("feature map shapes at 256 x 256") {
  ZipNetwork<float> net(desk(), 1);
  auto lv = net.forward_backbone(random_image(256, 256, 1), BnMode::kEval);
  CHECK(lv.f[0].shape() == Shape{1, 32, 32, 32});
  CHECK(lv.f[1].shape() == Shape{1, 64, 16, 16});
  CHECK(lv.f[2].shape() == Shape{1, 128, 8, 8});
  CHECK(lv.h[0].shape() == lv.f[0].shape());
  CHECK(lv.h[1].shape() == lv.f[1].shape());
  CHECK(lv.y[0].shape() == Shape{1, 64, 32, 32});
  CHECK(lv.y[1].shape() == Shape{1, 128, 16, 16});
  CHECK(lv.y[2].data().data() == lv.f[2].data().data());
  REQUIRE(lv.mu[0].has_value());
  CHECK(lv.mu[0]->length() == 64);
  CHECK(lv.mu[1]->length() == 128);

  auto heads = net.forward_heads(lv);
  REQUIRE(heads.size() == 3);
  for (const auto& h : heads) {
    const Shape fs = lv.f[h.level - 1].shape();
    CHECK(h.per_cell == 10);
    CHECK(h.cls.shape() == Shape{1, 30, fs.h, fs.w});
    CHECK(h.reg.shape() == Shape{1, 40, fs.h, fs.w});
  }
}

TEST_CASE("fully convolutional: doubling the height doubles every map height") {
  ZipNetwork<float> net(desk(), 2);
  auto a = net.forward_backbone(random_image(64, 96, 2), BnMode::kEval);
  auto b = net.forward_backbone(random_image(128, 96, 3), BnMode::kEval);
  for (int m = 0; m < 3; ++m) {
    CHECK(b.f[m].shape().h == 2 * a.f[m].shape().h);
    CHECK(b.f[m].shape().w == a.f[m].shape().w);
    if (m < 2) CHECK(b.h[m].shape().h == 2 * a.h[m].shape().h);
  }
  for (int m = 0; m < 2; ++m) CHECK(a.f[m].shape().h == 2 * a.f[m + 1].shape().h);
  CHECK_THROWS_AS(net.forward_backbone(random_image(48, 64, 4), BnMode::kEval), DimensionError);
}

TEST_CASE("zero image and zero biases give zero maps") {
  ZipNetwork<float> net(desk(), 3);
  for (auto* p : net.parameters()) {
    if (ends_with(p->name, ".bias") || ends_with(p->name, ".beta")) {
      for (auto& v : p->value.data()) v = 0.0f;
    }
  }
  auto zero = Tensor<float>::full({1, 3, 64, 64}, 0.0f);
  for (BnMode mode : {BnMode::kEval, BnMode::kTrain}) {
    auto lv = net.forward_backbone(zero, mode);
    for (int m = 0; m < 3; ++m) {
      for (float v : lv.f[m].data()) REQUIRE(v == 0.0f);
      for (float v : lv.y[m].data()) REQUIRE(v == 0.0f);
    }
    for (int m = 0; m < 2; ++m)
      for (float v : lv.h[m].data()) REQUIRE(v == 0.0f);
  }
}

TEST_CASE("all-ones gate reduces to the plain merge") {
  ZipNetwork<float> net(desk(), 4);
  net.set_mad_override(1.0);
  auto img = random_image(64, 64, 5);
  auto lv = net.forward_backbone(img, BnMode::kEval);
  for (int m = 0; m < 2; ++m) {
    auto plain = concat_channels(lv.f[m], lv.h[m]);
    for (std::size_t i = 0; i < plain.numel(); ++i) REQUIRE(lv.y[m].data()[i] == plain.data()[i]);
  }
  net.set_mad_override(std::nullopt);
  auto learned = net.forward_backbone(img, BnMode::kEval);
  bool differs = false;
  for (std::size_t i = 0; i < lv.y[0].numel(); ++i) differs = differs || learned.y[0].data()[i] != lv.y[0].data()[i];
  CHECK(differs);
}

TEST_CASE("one backward reaches every parameter") {
  for (auto topo : {Topology::kZip, Topology::kZoomOut}) {
    ZipConfig cfg = desk(topo, topo == Topology::kZip);
    ZipNetwork<float> net(cfg, 5);
    auto img = random_image(256, 256, 6);
    TrainSample s;
    s.image = img;
    s.image_h = s.image_w = 256;
    // one gt per level so every regression head sees a positive
    s.gts = {Box{10, 12, 30, 34}, Box{40, 20, 110, 100}, Box{3, 3, 253, 253}};
    const auto grids = head_anchors(net, 256, 256, 256, 256);
    std::mt19937_64 rng(7);
    const auto targets = assign(grids, s.gts, AssignmentConfig{}, rng);
    auto lv = net.forward_backbone(img, BnMode::kTrain);
    auto loss = rpn_loss(net.forward_heads(lv), targets, cfg.num_classes);
    loss.total.backward();
    for (auto* p : net.parameters()) {
      INFO(p->name);
      REQUIRE(p->value.has_grad());
      double sq = 0.0;
      for (float g : p->value.grad()) sq += static_cast<double>(g) * g;
      CHECK(sq > 0.0);
    }
  }
}

TEST_CASE("rpn_loss") {
  auto make_heads = [](float cls_value) {
    std::vector<HeadOutput<double>> heads;
    for (int level = 1; level <= 3; ++level) {
      heads.push_back({level, 10, Tensor<double>::full({1, 30, 2, 2}, cls_value),
                       Tensor<double>::full({1, 40, 2, 2}, 0.0)});
    }
    return heads;
  };
  SUBCASE("uniform logits and no positives give ln 3 per level") {
    auto heads = make_heads(0.0f);
    std::vector<LevelTargets> t(3);
    for (int m = 0; m < 3; ++m) {
      t[m].level = m + 1;
      t[m].anchors = {0, 5, 17, 39};
      t[m].labels = {0, 0, 1, 0};
      t[m].offsets.assign(4, {0, 0, 0, 0});
      t[m].matched_gt.assign(4, -1);
      t[m].num_neg = 3;
      t[m].num_gray = 1;
    }
    auto loss = rpn_loss(heads, t, 3);
    for (int m = 0; m < 3; ++m) CHECK(loss.per_level[m].item() == doctest::Approx(std::log(3.0)));
    CHECK(loss.total.item() == doctest::Approx(3 * std::log(3.0)));
  }
  SUBCASE("perfect predictions give zero loss") {
    auto heads = make_heads(0.0f);
    std::vector<LevelTargets> t(3);
    for (int m = 0; m < 3; ++m) t[m].level = m + 1;
    // level 2: anchor 7 positive with offsets, anchor 3 negative
    auto& cls = heads[1].cls;
    auto& reg = heads[1].reg;
    const int cell7 = 7 / 10, tmpl7 = 7 % 10;
    const int cell3 = 3 / 10, tmpl3 = 3 % 10;
    const Offsets off{0.1, -0.2, 0.3, 0.05};
    cls.at(0, tmpl7 * 3 + 2, cell7 / 2, cell7 % 2) = 200.0;
    cls.at(0, tmpl3 * 3 + 0, cell3 / 2, cell3 % 2) = 200.0;
    for (int r = 0; r < 4; ++r) reg.at(0, tmpl7 * 4 + r, cell7 / 2, cell7 % 2) = off[r];
    t[1].anchors = {7, 3};
    t[1].labels = {kPositive, kNegative};
    t[1].offsets = {off, {0, 0, 0, 0}};
    t[1].matched_gt = {0, -1};
    t[1].num_pos = 1;
    t[1].num_neg = 1;
    auto loss = rpn_loss(heads, t, 3);
    CHECK(loss.total.item() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(loss.per_level[0].item() == 0.0);  // empty level contributes 0
  }
  SUBCASE("random case matches a scalar recomputation") {
    std::mt19937_64 rng(9);
    std::vector<HeadOutput<double>> heads;
    for (int level = 1; level <= 3; ++level) {
      heads.push_back({level, 10, oracle::random_tensor<double>({1, 30, 3, 2}, rng),
                       oracle::random_tensor<double>({1, 40, 3, 2}, rng)});
    }
    std::vector<LevelTargets> t(3);
    double expect = 0.0;
    for (int m = 0; m < 3; ++m) {
      t[m].level = m + 1;
      std::uniform_int_distribution<int> anchor(0, 59), label(0, 2);
      double ce = 0.0, sq = 0.0;
      for (int k = 0; k < 12; ++k) {
        const int a = anchor(rng), l = label(rng);
        Offsets off{};
        for (auto& v : off) v = std::normal_distribution<double>()(rng);
        if (l != kPositive) off = {0, 0, 0, 0};
        t[m].anchors.push_back(a);
        t[m].labels.push_back(l);
        t[m].offsets.push_back(off);
        t[m].matched_gt.push_back(l == kPositive ? 0 : -1);
        (l == kPositive ? t[m].num_pos : l == kGray ? t[m].num_gray : t[m].num_neg)++;
        const int cell = a / 10, tmpl = a % 10;
        const int i = cell / 2, j = cell % 2;
        double z[3], mx = -1e300, sum = 0.0;
        for (int c = 0; c < 3; ++c) mx = std::max(mx, z[c] = heads[m].cls.at(0, tmpl * 3 + c, i, j));
        for (int c = 0; c < 3; ++c) sum += std::exp(z[c] - mx);
        ce += -(z[l] - mx - std::log(sum));
        if (l == kPositive) {
          for (int r = 0; r < 4; ++r) sq += std::pow(heads[m].reg.at(0, tmpl * 4 + r, i, j) - off[r], 2);
        }
      }
      expect += ce / 12 + (t[m].num_pos > 0 ? sq / t[m].num_pos : 0.0);
    }
    auto loss = rpn_loss(heads, t, 3);
    CHECK(loss.total.item() == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("roi_pool") {
  std::mt19937_64 rng(10);
  auto f = oracle::random_tensor<double>({1, 3, 6, 8}, rng);

  SUBCASE("whole map to 1x1 is the global max") {
    auto y = roi_pool(f, {Box{0, 0, 64, 48}}, 8, 1, 1);
    auto g = global_max_pool(f);
    for (int c = 0; c < 3; ++c) CHECK(y.at(0, c, 0, 0) == g.at(0, c, 0, 0));
  }
  SUBCASE("constant map") {
    auto c = Tensor<double>::full({1, 2, 5, 5}, 0.75);
    auto y = roi_pool(c, {Box{3, 4, 30, 22}, Box{0, 0, 9, 9}}, 8);
    for (double v : y.data()) CHECK(v == 0.75);
  }
  SUBCASE("brute-force sub-window max") {
    const int stride = 4;
    for (int trial = 0; trial < 50; ++trial) {
      Box r = oracle::random_box(rng, 24.0, 1.0, 20.0);
      const int oh = 1 + trial % 4, ow = 1 + (trial / 4) % 5;
      auto y = roi_pool(f, {r}, stride, oh, ow);
      // cells of the map whose footprint overlaps the RoI
      int cy0 = 1 << 30, cy1 = -1, cx0 = 1 << 30, cx1 = -1;
      for (int i = 0; i < 6; ++i)
        if ((i + 1) * stride > r.y1 && i * stride < r.y2) cy0 = std::min(cy0, i), cy1 = std::max(cy1, i + 1);
      for (int j = 0; j < 8; ++j)
        if ((j + 1) * stride > r.x1 && j * stride < r.x2) cx0 = std::min(cx0, j), cx1 = std::max(cx1, j + 1);
      REQUIRE(cy1 > cy0);
      const double rh = cy1 - cy0, rw = cx1 - cx0;
      for (int c = 0; c < 3; ++c)
        for (int ph = 0; ph < oh; ++ph)
          for (int pw = 0; pw < ow; ++pw) {
            const double lo_y = cy0 + ph * rh / oh, hi_y = cy0 + (ph + 1) * rh / oh;
            const double lo_x = cx0 + pw * rw / ow, hi_x = cx0 + (pw + 1) * rw / ow;
            double m = -1e300;
            for (int i = cy0; i < cy1; ++i)
              for (int j = cx0; j < cx1; ++j)
                if (i < hi_y && i + 1 > lo_y && j < hi_x && j + 1 > lo_x) m = std::max(m, f.at(0, c, i, j));
            CHECK(y.at(0, c, ph, pw) == m);
          }
    }
  }
  SUBCASE("degenerate RoI is widened and flagged") {
    std::vector<int> flagged;
    auto y = roi_pool(f, {Box{4, 4, 20, 20}, Box{9, 9, 9, 30}}, 8, 2, 2, &flagged);
    CHECK(flagged == std::vector<int>{1});
    CHECK(y.shape() == Shape{2, 3, 2, 2});
    for (double v : y.data()) CHECK(std::isfinite(v));
  }
  SUBCASE("level routing by scale range") {
    AnchorSpec spec;
    CHECK(route_roi_level(Box{0, 0, 20, 20}, spec) == 1);
    CHECK(route_roi_level(Box{0, 0, 100, 90}, spec) == 2);
    CHECK(route_roi_level(Box{0, 0, 300, 300}, spec) == 3);
    CHECK(route_roi_level(Box{0, 0, 20, 20}, AnchorSpec::all_on_top()) == 3);
  }
}

namespace {

std::vector<TrainSample> small_batch() {
  SceneSpec spec;
  spec.image_h = spec.image_w = 128;
  spec.max_side = 100;
  std::vector<TrainSample> out;
  for (int i = 0; i < 8; ++i) {
    Scene s = render_scene(spec, scene_seed(spec.seed, Split::kTrain, i));
    BoxList gts;
    for (const auto& o : s.objects) gts.push_back(o.box);
    out.push_back(make_sample(s.image, gts, 1.0, false));
  }
  return out;
}

double batch_loss(ZipNetwork<float>& net, const std::vector<TrainSample>& batch) {
  NoGradGuard guard;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    const Shape sh = s.image.shape();
    std::mt19937_64 rng(100 + i);
    const auto targets = assign(head_anchors(net, sh.h, sh.w, s.image_h, s.image_w), s.gts,
                                AssignmentConfig{}, rng);
    auto lv = net.forward_backbone(s.image, BnMode::kTrain);
    total += rpn_loss(net.forward_heads(lv), targets, 3).total.item();
  }
  return total;
}

}  // namespace

TEST_CASE("train_step") {
  const auto batch = small_batch();
  SUBCASE("lr 0 leaves parameters unchanged") {
    ZipNetwork<float> net(desk(), 11);
    std::vector<std::vector<float>> before;
    for (auto* p : net.parameters()) before.emplace_back(p->value.data().begin(), p->value.data().end());
    std::mt19937_64 rng(1);
    train_step(net, batch[0], AssignmentConfig{}, {.lr = 0.0, .momentum = 0.9, .weight_decay = 5e-4},
               0.0, rng);
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      CHECK(std::equal(before[i].begin(), before[i].end(), params[i]->value.data().begin()));
    }
  }
  SUBCASE("same seed, same losses") {
    auto run = [&] {
      ZipNetwork<float> net(desk(), 12);
      std::mt19937_64 rng(3);
      std::vector<double> losses;
      for (int k = 0; k < 10; ++k) {
        losses.push_back(train_step(net, batch[k % 8], AssignmentConfig{},
                                    {.lr = 0.01, .momentum = 0.9, .weight_decay = 5e-4}, 0.0, rng)
                             .total);
      }
      return losses;
    };
    CHECK(run() == run());
  }
  SUBCASE("loss on a fixed batch decreases over 200 steps") {
    ZipNetwork<float> net(desk(), 13);
    const double start = batch_loss(net, batch);
    std::mt19937_64 rng(4);
    for (int k = 0; k < 200; ++k) {
      train_step(net, batch[k % 8], AssignmentConfig{},
                 {.lr = 0.01, .momentum = 0.9, .weight_decay = 5e-4}, 10.0, rng);
    }
    const double end = batch_loss(net, batch);
    INFO("start " << start << " end " << end);
    CHECK(end < start);
  }
  SUBCASE("non-finite loss aborts with per-level terms") {
    ZipNetwork<float> net(desk(), 14);
    auto bad = batch[0];
    bad.image = bad.image.clone();
    bad.image.data()[5] = std::numeric_limits<float>::quiet_NaN();
    std::mt19937_64 rng(5);
    try {
      train_step(net, bad, AssignmentConfig{}, {}, 0.0, rng);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("level1: cls=") != std::string::npos);
    }
  }
}

TEST_CASE("checkpoint state round trip and mismatch") {
  ZipNetwork<float> a(desk(), 20);
  ZipNetwork<float> b(desk(), 21);
  b.load_state(a.state());
  auto img = random_image(64, 64, 22);
  auto ya = a.forward_backbone(img, BnMode::kEval).y[0];
  auto yb = b.forward_backbone(img, BnMode::kEval).y[0];
  CHECK(std::equal(ya.data().begin(), ya.data().end(), yb.data().begin()));

  ZipConfig narrow = desk();
  narrow.level_channels = {16, 64, 128};
  ZipNetwork<float> c(narrow, 23);
  try {
    c.load_state(a.state());
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("shape") != std::string::npos);
  }
}
