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

#include "zipnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "zipnet/errors.hpp"

namespace zipnet {

void TrainConfig::validate() const {
  auto fail = [](const char* field, const std::string& why) {
    throw ConfigError(fmt::format("train.{}: {}", field, why));
  };
  if (steps < 0) fail("steps", "must be >= 0");
  if (!(lr >= 0.0)) fail("lr", "must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must be in [0, 1)");
  if (!(weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
  if (!(clip_grad_norm >= 0.0)) fail("clip_grad_norm", "must be >= 0");
  if (log_every < 0) fail("log_every", "must be >= 0");
}

TrainSample make_sample(const Image& image, const BoxList& gts, double factor, bool flip) {
  const int h = std::max(1, static_cast<int>(std::lround(image.h * factor)));
  const int w = std::max(1, static_cast<int>(std::lround(image.w * factor)));
  Image resized = resize_bilinear(image, h, w);
  if (flip) {
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w / 2; ++x) std::swap(resized.at(c, y, x), resized.at(c, y, w - 1 - x));
      }
    }
  }
  TrainSample s;
  s.image = image_to_tensor<float>(resized);
  s.image_h = h;
  s.image_w = w;
  const double sx = static_cast<double>(w) / image.w;
  const double sy = static_cast<double>(h) / image.h;
  for (const auto& g : gts) {
    Box b{g.x1 * sx, g.y1 * sy, g.x2 * sx, g.y2 * sy};
    if (flip) b = Box{w - b.x2, b.y1, w - b.x1, b.y2};
    if (b.width() >= 1.0 && b.height() >= 1.0) s.gts.push_back(b);
  }
  return s;
}

std::vector<AnchorGrid> head_anchors(const ZipNetwork<float>& net, int padded_h, int padded_w,
                                     int image_h, int image_w) {
  const AnchorSpec spec = net.config().anchor_spec();
  std::vector<AnchorGrid> out;
  for (int level : net.head_levels()) {
    const int stride = spec.strides[level - 1];
    out.push_back(generate_anchors(spec, level, padded_h / stride, padded_w / stride, image_h,
                                   image_w));
  }
  return out;
}

StepStats train_step(ZipNetwork<float>& net, const TrainSample& sample,
                     const AssignmentConfig& assign_cfg, const SgdOptions& sgd,
                     double clip_grad_norm, std::mt19937_64& rng) {
  const Shape s = sample.image.shape();
  const auto grids = head_anchors(net, s.h, s.w, sample.image_h, sample.image_w);
  const auto targets = assign(grids, sample.gts, assign_cfg, rng);

  auto params = net.parameters();
  for (auto* p : params) p->value.zero_grad();
  const LevelOutputs<float> levels = net.forward_backbone(sample.image, BnMode::kTrain);
  const auto heads = net.forward_heads(levels);
  RpnLoss<float> loss =
      rpn_loss(heads, targets, net.config().num_classes, 0, net.config().cls_weight,
               net.config().reg_weight);

  StepStats st;
  st.lr = sgd.lr;
  st.total = loss.total.item();
  for (std::size_t i = 0; i < heads.size(); ++i) {
    st.levels.push_back(heads[i].level);
    st.cls.push_back(loss.cls[i]);
    st.reg.push_back(loss.reg[i]);
    st.num_pos.push_back(targets[i].num_pos);
    st.num_sampled.push_back(static_cast<int>(targets[i].size()));
  }
  auto dump = [&st]() {
    std::string d;
    for (std::size_t i = 0; i < st.levels.size(); ++i) {
      d += fmt::format(" level{}: cls={} reg={} pos={} sampled={};", st.levels[i], st.cls[i],
                       st.reg[i], st.num_pos[i], st.num_sampled[i]);
    }
    return d;
  };
  if (!std::isfinite(st.total)) {
    throw NumericError(fmt::format("non-finite loss {};{}", st.total, dump()));
  }
  loss.total.backward();

  double sq = 0.0;
  for (auto* p : params) {
    if (!p->value.has_grad()) p->value.zero_grad();
    for (float g : p->value.grad()) sq += static_cast<double>(g) * g;
  }
  st.grad_norm = std::sqrt(sq);
  if (!std::isfinite(st.grad_norm)) {
    throw NumericError(fmt::format("non-finite gradient norm;{}", dump()));
  }
  if (clip_grad_norm > 0.0 && st.grad_norm > clip_grad_norm) {
    const float k = static_cast<float>(clip_grad_norm / st.grad_norm);
    for (auto* p : params) {
      for (float& g : p->value.grad()) g *= k;
    }
  }
  sgd_step<float>(params, sgd);
  return st;
}

Trainer::Trainer(ZipNetwork<float>& net, const Dataset& data, const TrainConfig& cfg,
                 const AssignmentConfig& assign_cfg, const TrainScaleConfig& scale_cfg,
                 std::uint64_t seed)
    : net_(net),
      data_(data),
      cfg_(cfg),
      assign_cfg_(assign_cfg),
      scale_cfg_(scale_cfg),
      rng_(seed) {
  cfg_.validate();
  assign_cfg_.validate();
  if (data_.images.empty()) throw ConfigError("training split has no images");
  order_.resize(data_.images.size());
  std::iota(order_.begin(), order_.end(), 0);
  cursor_ = order_.size();
  cache_.resize(data_.images.size());
}

std::size_t Trainer::next_index() {
  if (cursor_ >= order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }
  return order_[cursor_++];
}

StepStats Trainer::step() {
  const std::size_t idx = next_index();
  if (cache_[idx].pixels.empty()) cache_[idx] = data_.load_image(idx);
  const Image& image = cache_[idx];
  const BoxList& gts = data_.images[idx].gts;
  const double factor = cfg_.dynamic_scale
                            ? dynamic_train_scale(image.h, image.w, gts, scale_cfg_, rng_)
                            : 1.0;
  const bool flip = cfg_.flip && std::uniform_int_distribution<int>(0, 1)(rng_) == 1;
  const TrainSample sample = make_sample(image, gts, factor, flip);
  SgdOptions sgd{halving_schedule(cfg_.lr, step_, cfg_.steps), cfg_.momentum, cfg_.weight_decay};
  StepStats st;
  try {
    st = train_step(net_, sample, assign_cfg_, sgd, cfg_.clip_grad_norm, rng_);
  } catch (const NumericError& e) {
    throw NumericError(fmt::format("step {} (image {}): {}", step_, data_.images[idx].id, e.what()));
  }
  st.step = step_++;
  return st;
}

void Trainer::run(const std::function<void(const StepStats&)>& on_step) {
  while (step_ < cfg_.steps) {
    const StepStats st = step();
    if (on_step) on_step(st);
    if (cfg_.log_every > 0 && (st.step + 1) % cfg_.log_every == 0) {
      spdlog::info("step {}/{} lr {:.5f} loss {:.4f} |g| {:.3f}", st.step + 1, cfg_.steps, st.lr,
                   st.total, st.grad_norm);
    }
  }
}

}  // namespace zipnet
