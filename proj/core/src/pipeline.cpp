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

#include "zipnet/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "zipnet/errors.hpp"
#include "zipnet/ops.hpp"
#include "zipnet/train.hpp"

namespace zipnet {

double scale_factor(int image_h, int image_w, int scale) {
  return static_cast<double>(scale) / std::max(image_h, image_w);
}

ForwardPredictions predict(ZipNetwork<float>& net, const Image& image, int scale) {
  if (scale < 32) {
    throw ConfigError(fmt::format("test scale {} is below the stride floor 32", scale));
  }
  const double factor = scale_factor(image.h, image.w, scale);
  const TrainSample sample = make_sample(image, {}, factor, false);
  NoGradGuard no_grad;
  // Training sees one image per step, so every map was normalized by its own
  // image's statistics; inference does the same.
  const auto levels = net.forward_backbone(sample.image, BnMode::kBatch);
  const auto heads = net.forward_heads(levels);
  const Shape s = sample.image.shape();

  ForwardPredictions out;
  out.image_h = sample.image_h;
  out.image_w = sample.image_w;
  out.anchors = head_anchors(net, s.h, s.w, sample.image_h, sample.image_w);
  const int k = net.config().num_classes;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const auto& head = heads[i];
    const AnchorGrid& grid = out.anchors[i];
    LevelPrediction pred;
    pred.anchors = &grid;
    pred.scores = grouped_softmax(head.cls, 0, head.per_cell, k, k - 1);
    pred.offsets.resize(grid.size());
    const Shape rs = head.reg.shape();
    const auto reg = head.reg.data();
    const std::size_t plane = rs.plane();
    for (std::size_t a = 0; a < grid.size(); ++a) {
      const std::size_t cell = a / head.per_cell;
      const std::size_t t = a % head.per_cell;
      for (int r = 0; r < 4; ++r) {
        pred.offsets[a][r] = reg[(t * 4 + r) * plane + cell];
      }
    }
    out.levels.push_back(std::move(pred));
  }
  return out;
}

LevelBoxes propose_single_scale(ZipNetwork<float>& net, const Image& image, int scale,
                                const ProposalConfig& cfg) {
  const ForwardPredictions fp = predict(net, image, scale);
  const double sx = static_cast<double>(image.w) / fp.image_w;
  const double sy = static_cast<double>(image.h) / fp.image_h;
  LevelBoxes out;
  for (const auto& pred : fp.levels) {
    BoxList boxes = decode_and_filter(pred, fp.image_h, fp.image_w, cfg);
    for (auto& b : boxes) {
      b.x1 *= sx;
      b.x2 *= sx;
      b.y1 *= sy;
      b.y2 *= sy;
      b = clip_box(b, image.w, image.h);
    }
    out[pred.anchors->level - 1] = std::move(boxes);
  }
  return out;
}

LevelBoxes multi_scale_propose(ZipNetwork<float>& net, const Image& image,
                               const std::vector<int>& scales, const ProposalConfig& cfg) {
  LevelBoxes out;
  for (int scale : scales) {
    LevelBoxes one = propose_single_scale(net, image, scale, cfg);
    for (int m = 0; m < kNumLevels; ++m) {
      out[m].insert(out[m].end(), one[m].begin(), one[m].end());
    }
  }
  for (auto& level : out) {
    std::stable_sort(level.begin(), level.end(),
                     [](const Box& a, const Box& b) { return a.score > b.score; });
  }
  return out;
}

std::vector<LevelBoxes> propose_dataset(ZipNetwork<float>& net, const Dataset& data,
                                        const ProposalConfig& cfg) {
  std::vector<LevelBoxes> out;
  out.reserve(data.images.size());
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    out.push_back(multi_scale_propose(net, data.load_image(i), cfg.scales, cfg));
  }
  return out;
}

std::vector<ProposalRecord> propose_and_finalize(ZipNetwork<float>& net, const Dataset& cal,
                                                 const Dataset& eval, const ProposalConfig& cfg,
                                                 ProposalCalibration* calibration) {
  cfg.validate();
  const auto cal_raw = propose_dataset(net, cal, cfg);
  std::vector<BoxList> cal_gts;
  for (const auto& im : cal.images) cal_gts.push_back(im.gts);
  const ProposalCalibration c = calibrate(cal_raw, cal_gts, cfg);
  std::vector<ProposalRecord> records;
  for (std::size_t i = 0; i < eval.images.size(); ++i) {
    const LevelBoxes raw = multi_scale_propose(net, eval.load_image(i), cfg.scales, cfg);
    records.push_back(make_record(eval.images[i].id, finalize(raw, c, cfg)));
  }
  if (calibration) *calibration = c;
  return records;
}

}  // namespace zipnet
