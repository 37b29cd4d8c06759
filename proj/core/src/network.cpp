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

#include "zipnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "zipnet/errors.hpp"
#include "zipnet/ops.hpp"

namespace zipnet {

void ZipConfig::validate() const {
  auto positive = [](int v, const char* key) {
    if (v < 1) throw ConfigError(fmt::format("{} must be >= 1, got {}", key, v));
  };
  positive(stem_channels, "stem_channels");
  positive(level_channels[0], "level1_channels");
  positive(level_channels[1], "level2_channels");
  positive(level_channels[2], "level3_channels");
  positive(blocks_per_stage, "blocks_per_stage");
  positive(rpn_channels, "rpn_channels");
  if (num_classes < 2) throw ConfigError(fmt::format("num_classes must be >= 2, got {}", num_classes));
  if (use_mad && topology != Topology::kZip) {
    throw ConfigError("use_mad requires topology=zip (the gate needs the zoom-in stream)");
  }
  if (use_mad && lambda != 2) {
    throw ConfigError(fmt::format(
        "lambda must be 2 for the proposal network (two merged streams), got {}", lambda));
  }
  if (anchor_ratios.empty()) throw ConfigError("anchor_ratios must not be empty");
  for (double r : anchor_ratios) {
    if (!(r > 0.0)) throw ConfigError(fmt::format("anchor_ratios entries must be > 0, got {}", r));
  }
  const AnchorSpec spec = anchor_spec();
  if (spec.total_templates() == 0) throw ConfigError("anchor_scales: no anchors configured");
}

AnchorSpec ZipConfig::anchor_spec() const {
  AnchorSpec spec;
  spec.scales = anchor_scales;
  spec.ratios = anchor_ratios;
  if (placement == AnchorPlacement::kTop) {
    std::vector<double> all;
    for (const auto& s : anchor_scales) all.insert(all.end(), s.begin(), s.end());
    spec.scales = {std::vector<double>{}, std::vector<double>{}, all};
  }
  return spec;
}

template <typename T>
RpnHead<T>::RpnHead(int level_, int in_channels, int trunk_channels, int per_cell_,
                    int num_classes, std::mt19937_64& rng)
    : level(level_),
      per_cell(per_cell_),
      trunk(fmt::format("rpn{}.trunk", level_), in_channels, trunk_channels, 3, 1, rng),
      cls(fmt::format("rpn{}.cls", level_), trunk_channels, per_cell_ * num_classes, 1, 1, rng,
          0.0, 0.01),
      reg(fmt::format("rpn{}.reg", level_), trunk_channels, per_cell_ * 4, 1, 1, rng, 0.0, 0.01) {}

template <typename T>
HeadOutput<T> RpnHead<T>::operator()(const Tensor<T>& y) const {
  Tensor<T> t = relu(trunk(y));
  return {level, per_cell, cls(t), reg(t)};
}

template <typename T>
void RpnHead<T>::collect(std::vector<Parameter<T>*>& out) {
  trunk.collect(out);
  cls.collect(out);
  reg.collect(out);
}

template <typename T>
ZipNetwork<T>::ZipNetwork(const ZipConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& ch = config_.level_channels;
  const int stem = config_.stem_channels;
  stem_.reserve(3);
  stem_.emplace_back("stem.0", 3, stem, 2, rng);
  stem_.emplace_back("stem.1", stem, stem, 2, rng);
  stem_.emplace_back("stem.2", stem, ch[0], 2, rng);
  for (int m = 0; m < kNumLevels; ++m) {
    stages_[m].reserve(config_.blocks_per_stage);
    for (int b = 0; b < config_.blocks_per_stage; ++b) {
      const int cin = (b == 0 && m > 0) ? ch[m - 1] : ch[m];
      stages_[m].emplace_back(fmt::format("stage{}.{}", m + 1, b), cin, ch[m], 1, rng);
    }
  }
  if (config_.topology == Topology::kZip) {
    for (int i = 1; i >= 0; --i) {
      const int above = ch[i + 1];
      up_conv_[i] = Conv<T>(fmt::format("zoomin{}.up", i + 1), above, ch[i], 3, 1, rng);
      lateral_[i] = Conv<T>(fmt::format("zoomin{}.lateral", i + 1), ch[i], ch[i], 1, 1, rng);
      mirrored_[i].reserve(config_.blocks_per_stage);
      for (int b = 0; b < config_.blocks_per_stage; ++b) {
        mirrored_[i].emplace_back(fmt::format("zoomin{}.{}", i + 1, b), ch[i], ch[i], 1, rng);
      }
    }
    if (config_.use_mad) {
      mad_.reserve(2);
      for (int m = 1; m <= 2; ++m) {
        mad_.emplace_back(m, ch[2], ch[m - 1], config_.lambda, rng, config_.mad_bias_init);
      }
    }
  }
  const AnchorSpec spec = config_.anchor_spec();
  for (int m = 1; m <= kNumLevels; ++m) {
    if (!spec.level_active(m)) continue;
    const bool merged = config_.topology == Topology::kZip && m < kNumLevels;
    const int in = merged ? 2 * ch[m - 1] : ch[m - 1];
    heads_.emplace_back(m, in, config_.rpn_channels, spec.per_cell(m), config_.num_classes, rng);
  }
}

template <typename T>
LevelOutputs<T> ZipNetwork<T>::forward_backbone(const Tensor<T>& image, BnMode mode) {
  const Shape s = image.shape();
  if (s.c != 3) throw DimensionError(fmt::format("image must have 3 channels, got {}", s.c));
  if (s.h % 32 != 0 || s.w % 32 != 0 || s.h == 0 || s.w == 0) {
    throw DimensionError(fmt::format("image extent {}x{} is not a positive multiple of 32", s.h,
                                     s.w));
  }
  LevelOutputs<T> out;
  Tensor<T> x = image;
  for (auto& block : stem_) x = block(x, mode);
  for (int m = 0; m < kNumLevels; ++m) {
    if (m > 0) x = max_pool2d(x, 2, 2);
    for (auto& block : stages_[m]) x = block(x, mode);
    out.f[m] = x;
  }
  if (config_.topology == Topology::kZoomOut) {
    out.y = out.f;
    return out;
  }
  Tensor<T> above = out.f[2];
  for (int i = 1; i >= 0; --i) {
    Tensor<T> merged = add(up_conv_[i](bilinear_upsample_x2(above)), lateral_[i](out.f[i]));
    for (auto& block : mirrored_[i]) merged = block(merged, mode);
    out.h[i] = merged;
    above = merged;
  }
  for (int i = 0; i < 2; ++i) {
    Tensor<T> stacked = concat_channels(out.f[i], out.h[i]);
    if (config_.use_mad) {
      MadVector<T> mu = mad_generate(out.f[2], i + 1);
      out.y[i] = mad_apply(stacked, mu);
      out.mu[i] = std::move(mu);
    } else {
      out.y[i] = stacked;
    }
  }
  out.y[2] = out.f[2];
  return out;
}

template <typename T>
MadVector<T> ZipNetwork<T>::mad_generate(const Tensor<T>& f3, int level) const {
  if (mad_.empty()) throw ConfigError("network has no MAD unit (use_mad=false)");
  if (level < 1 || level > 2) {
    throw ConfigError(fmt::format("MAD gates levels 1 and 2 only, requested {}", level));
  }
  if (mad_override_) {
    const Shape fs = f3.shape();
    return {Tensor<T>::full({fs.n, mad_[level - 1].length(), 1, 1},
                            static_cast<T>(*mad_override_)),
            level, config_.lambda};
  }
  return mad_[level - 1].generate(f3);
}

template <typename T>
std::vector<HeadOutput<T>> ZipNetwork<T>::forward_heads(const LevelOutputs<T>& levels) const {
  std::vector<HeadOutput<T>> out;
  out.reserve(heads_.size());
  for (const auto& head : heads_) out.push_back(head(levels.y[head.level - 1]));
  return out;
}

template <typename T>
std::vector<int> ZipNetwork<T>::head_levels() const {
  std::vector<int> out;
  for (const auto& head : heads_) out.push_back(head.level);
  return out;
}

template <typename T>
std::vector<Parameter<T>*> ZipNetwork<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& b : stem_) b.collect(out);
  for (auto& stage : stages_) {
    for (auto& b : stage) b.collect(out);
  }
  if (config_.topology == Topology::kZip) {
    for (int i = 1; i >= 0; --i) {
      up_conv_[i].collect(out);
      lateral_[i].collect(out);
      for (auto& b : mirrored_[i]) b.collect(out);
    }
  }
  for (auto& m : mad_) m.collect(out);
  for (auto& h : heads_) h.collect(out);
  return out;
}

namespace {

template <typename T>
NamedTensor to_record(const std::string& name, const Shape& shape, std::span<const T> values) {
  NamedTensor r{name, shape, std::vector<float>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i) r.values[i] = static_cast<float>(values[i]);
  return r;
}

}  // namespace

template <typename T>
std::vector<NamedTensor> ZipNetwork<T>::state() const {
  auto* self = const_cast<ZipNetwork<T>*>(this);
  std::vector<NamedTensor> out;
  for (Parameter<T>* p : self->parameters()) {
    out.push_back(to_record<T>(p->name, p->value.shape(), p->value.data()));
  }
  auto add_bn = [&out](const ConvBnRelu<T>& b) {
    const int c = static_cast<int>(b.state.running_mean.size());
    out.push_back(to_record<double>(b.name + ".bn.running_mean", {1, c, 1, 1},
                                    b.state.running_mean));
    out.push_back(to_record<double>(b.name + ".bn.running_var", {1, c, 1, 1},
                                    b.state.running_var));
  };
  for (const auto& b : stem_) add_bn(b);
  for (const auto& stage : stages_) {
    for (const auto& b : stage) add_bn(b);
  }
  for (const auto& stack : mirrored_) {
    for (const auto& b : stack) add_bn(b);
  }
  return out;
}

template <typename T>
void ZipNetwork<T>::load_state(const std::vector<NamedTensor>& records) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  auto find = [&](const std::string& name, const Shape& shape) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw FormatError("checkpoint: missing record '" + name + "' required by the config");
    }
    if (!(it->second->shape == shape)) {
      throw FormatError(fmt::format("checkpoint: record '{}' has shape {}, config expects {}",
                                    name, it->second->shape.str(), shape.str()));
    }
    return *it->second;
  };
  for (Parameter<T>* p : parameters()) {
    const auto& r = find(p->name, p->value.shape());
    auto data = p->value.data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(r.values[i]);
    std::fill(p->momentum.begin(), p->momentum.end(), T(0));
  }
  auto load_bn = [&](ConvBnRelu<T>& b) {
    const int c = static_cast<int>(b.state.running_mean.size());
    const auto& mean = find(b.name + ".bn.running_mean", {1, c, 1, 1});
    const auto& var = find(b.name + ".bn.running_var", {1, c, 1, 1});
    for (int i = 0; i < c; ++i) {
      b.state.running_mean[i] = mean.values[i];
      b.state.running_var[i] = var.values[i];
    }
  };
  for (auto& b : stem_) load_bn(b);
  for (auto& stage : stages_) {
    for (auto& b : stage) load_bn(b);
  }
  for (auto& stack : mirrored_) {
    for (auto& b : stack) load_bn(b);
  }
}

template <typename T>
RpnLoss<T> rpn_loss(const std::vector<HeadOutput<T>>& heads,
                    const std::vector<LevelTargets>& targets, int num_classes, int image,
                    double cls_weight, double reg_weight) {
  if (heads.size() != targets.size()) {
    throw DimensionError(fmt::format("rpn_loss: {} heads but {} target sets", heads.size(),
                                     targets.size()));
  }
  RpnLoss<T> out;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const auto& head = heads[i];
    const auto& t = targets[i];
    if (t.size() == 0) {
      spdlog::warn("rpn_loss: level {} has no sampled anchors; contributes 0", head.level);
      out.per_level.push_back(Tensor<T>::scalar(T(0)));
      out.cls.push_back(0.0);
      out.reg.push_back(0.0);
      continue;
    }
    Tensor<T> logits = gather_anchors(head.cls, image, t.anchors, head.per_cell, num_classes);
    Tensor<T> cls = softmax_cross_entropy(logits, t.labels);
    std::vector<Tensor<T>> terms{scale(cls, cls_weight)};
    double reg_value = 0.0;
    if (t.num_pos > 0) {
      Tensor<T> pred = gather_anchors(head.reg, image, t.anchors, head.per_cell, 4);
      std::vector<T> target(t.size() * 4);
      std::vector<std::uint8_t> mask(t.size());
      for (std::size_t k = 0; k < t.size(); ++k) {
        mask[k] = t.labels[k] == kPositive ? 1 : 0;
        for (int r = 0; r < 4; ++r) target[k * 4 + r] = static_cast<T>(t.offsets[k][r]);
      }
      Tensor<T> target_t({static_cast<int>(t.size()), 4, 1, 1}, std::move(target));
      Tensor<T> reg = scale(l2_regression(pred, target_t, mask), 1.0 / t.num_pos);
      reg_value = reg.item();
      terms.push_back(scale(reg, reg_weight));
    }
    out.cls.push_back(cls.item());
    out.reg.push_back(reg_value);
    out.per_level.push_back(sum_scalars(terms));
  }
  out.total = sum_scalars(out.per_level);
  return out;
}

template <typename T>
Tensor<T> roi_pool(const Tensor<T>& features, const BoxList& rois, int stride, int out_h,
                   int out_w, std::vector<int>* degenerate) {
  const Shape fs = features.shape();
  if (out_h < 1 || out_w < 1 || stride < 1) {
    throw DimensionError(fmt::format("roi_pool: output {}x{} and stride {} must be positive",
                                     out_h, out_w, stride));
  }
  const int nroi = static_cast<int>(rois.size());
  Shape os{nroi, fs.c, out_h, out_w};
  std::vector<T> out(os.numel());
  auto argmax = std::make_shared<std::vector<std::size_t>>(os.numel());
  const T* in = features.data().data();
  for (int r = 0; r < nroi; ++r) {
    const Box& b = rois[r];
    int x0 = std::clamp(static_cast<int>(std::floor(b.x1 / stride)), 0, fs.w - 1);
    int y0 = std::clamp(static_cast<int>(std::floor(b.y1 / stride)), 0, fs.h - 1);
    int x1 = std::clamp(static_cast<int>(std::ceil(b.x2 / stride)), 0, fs.w);
    int y1 = std::clamp(static_cast<int>(std::ceil(b.y2 / stride)), 0, fs.h);
    if (x1 <= x0 || y1 <= y0 || !(b.x2 > b.x1) || !(b.y2 > b.y1)) {
      x1 = std::max(x1, x0 + 1);
      y1 = std::max(y1, y0 + 1);
      if (degenerate) degenerate->push_back(r);
    }
    const int rh = y1 - y0;
    const int rw = x1 - x0;
    for (int c = 0; c < fs.c; ++c) {
      const std::size_t base = static_cast<std::size_t>(c) * fs.plane();
      for (int ph = 0; ph < out_h; ++ph) {
        const int hs = y0 + (ph * rh) / out_h;
        const int he = y0 + ((ph + 1) * rh + out_h - 1) / out_h;
        for (int pw = 0; pw < out_w; ++pw) {
          const int ws = x0 + (pw * rw) / out_w;
          const int we = x0 + ((pw + 1) * rw + out_w - 1) / out_w;
          std::size_t best = base + static_cast<std::size_t>(hs) * fs.w + ws;
          for (int yy = hs; yy < he; ++yy) {
            for (int xx = ws; xx < we; ++xx) {
              const std::size_t idx = base + static_cast<std::size_t>(yy) * fs.w + xx;
              if (in[idx] > in[best]) best = idx;
            }
          }
          const std::size_t o = ((static_cast<std::size_t>(r) * fs.c + c) * out_h + ph) * out_w + pw;
          out[o] = in[best];
          (*argmax)[o] = best;
        }
      }
    }
  }
  auto fi = features.impl();
  return Tensor<T>::make_result(os, std::move(out), {features}, [=](std::span<const T> g) {
    T* gf = fi->grad_target();
    if (!gf) return;
    for (std::size_t i = 0; i < g.size(); ++i) gf[(*argmax)[i]] += g[i];
  });
}

int route_roi_level(const Box& roi, const AnchorSpec& spec) {
  const double side = std::sqrt(std::max(roi.area(), 0.0));
  std::vector<int> active;
  for (int m = 1; m <= kNumLevels; ++m) {
    if (spec.level_active(m)) active.push_back(m);
  }
  for (std::size_t i = 0; i + 1 < active.size(); ++i) {
    const auto& lo = spec.scales[active[i] - 1];
    const auto& hi = spec.scales[active[i + 1] - 1];
    const double boundary = std::sqrt(*std::max_element(lo.begin(), lo.end()) *
                                      *std::min_element(hi.begin(), hi.end()));
    if (side < boundary) return active[i];
  }
  return active.empty() ? kNumLevels : active.back();
}

template struct RpnHead<float>;
template struct RpnHead<double>;
template class ZipNetwork<float>;
template class ZipNetwork<double>;
template RpnLoss<float> rpn_loss(const std::vector<HeadOutput<float>>&,
                                 const std::vector<LevelTargets>&, int, int, double, double);
template RpnLoss<double> rpn_loss(const std::vector<HeadOutput<double>>&,
                                  const std::vector<LevelTargets>&, int, int, double, double);
template Tensor<float> roi_pool(const Tensor<float>&, const BoxList&, int, int, int,
                                std::vector<int>*);
template Tensor<double> roi_pool(const Tensor<double>&, const BoxList&, int, int, int,
                                 std::vector<int>*);

}  // namespace zipnet
