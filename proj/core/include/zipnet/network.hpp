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
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zipnet/anchors.hpp"
#include "zipnet/assign.hpp"
#include "zipnet/checkpoint.hpp"
#include "zipnet/layers.hpp"
#include "zipnet/mad.hpp"

namespace zipnet {

enum class Topology {
  kZoomOut,  // down-sampling path only
  kZip,      // down-sampling path plus mirrored up-sampling path
};

enum class AnchorPlacement {
  kSplit,  // each level owns its own scales
  kTop,    // every template on the level-3 map
};

struct ZipConfig {
  int stem_channels = 16;
  std::array<int, kNumLevels> level_channels{32, 64, 128};
  int blocks_per_stage = 2;
  int rpn_channels = 32;
  int lambda = 2;
  int num_classes = 3;  // negative / gray / positive
  Topology topology = Topology::kZip;
  bool use_mad = true;
  AnchorPlacement placement = AnchorPlacement::kSplit;
  std::vector<double> anchor_ratios{0.25, 0.5, 1.0, 2.0, 4.0};
  std::array<std::vector<double>, kNumLevels> anchor_scales{
      std::vector<double>{16, 32}, std::vector<double>{64, 128}, std::vector<double>{256, 512}};
  double cls_weight = 1.0;
  double reg_weight = 1.0;
  double mad_bias_init = 0.1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  AnchorSpec anchor_spec() const;
};

/// Feature maps of one forward pass. f[m - 1] is F^(m); h[0], h[1] are
/// H^(1), H^(2) (zip topology only); y[m - 1] is the map the level-m head
/// reads: [F, H] gated by the MAD vector for m = 1, 2 and F^(3) itself for
/// m = 3.
template <typename T>
struct LevelOutputs {
  std::array<Tensor<T>, kNumLevels> f;
  std::array<Tensor<T>, 2> h;
  std::array<Tensor<T>, kNumLevels> y;
  std::array<std::optional<MadVector<T>>, 2> mu;
};

/// Dense outputs of one level's RPN head.
template <typename T>
struct HeadOutput {
  int level = 0;
  int per_cell = 0;
  Tensor<T> cls;  // (n, per_cell * num_classes, h, w)
  Tensor<T> reg;  // (n, per_cell * 4, h, w)
};

/// Conv trunk plus sibling 1x1 classification and regression convolutions.
template <typename T>
struct RpnHead {
  RpnHead() = default;
  RpnHead(int level, int in_channels, int trunk_channels, int per_cell, int num_classes,
          std::mt19937_64& rng);

  HeadOutput<T> operator()(const Tensor<T>& y) const;
  void collect(std::vector<Parameter<T>*>& out);

  int level = 0;
  int per_cell = 0;
  Conv<T> trunk;
  Conv<T> cls;
  Conv<T> reg;
};

/// The zoom-out-and-in proposal network.
///
/// The stem brings the image to stride 8 with three stride-2 convolutions;
/// three stages of conv-BN-ReLU blocks separated by 2x2 max pooling give
/// F^(1..3) at strides 8, 16 and 32. With the zip topology, H^(2) is the
/// mirrored block stack applied to conv(upsample(F^(3))) + lateral(F^(2)),
/// and H^(1) likewise from H^(2) and F^(1).
template <typename T>
class ZipNetwork {
 public:
  ZipNetwork(const ZipConfig& config, std::uint64_t seed);
  ZipNetwork(const ZipNetwork&) = delete;
  ZipNetwork& operator=(const ZipNetwork&) = delete;

  const ZipConfig& config() const { return config_; }

  /// Image tensor (n, 3, H, W) with H and W multiples of 32.
  LevelOutputs<T> forward_backbone(const Tensor<T>& image, BnMode mode);
  std::vector<HeadOutput<T>> forward_heads(const LevelOutputs<T>& levels) const;

  /// MAD vector for level 1 or 2 from the level-3 map. Throws ConfigError
  /// when the network has no MAD unit or the level is not gated.
  MadVector<T> mad_generate(const Tensor<T>& f3, int level) const;

  /// Replaces every MAD vector with a constant (for ablations); nullopt
  /// restores the learned vectors.
  void set_mad_override(std::optional<double> value) { mad_override_ = value; }

  /// Levels that carry anchors, ascending.
  std::vector<int> head_levels() const;
  std::vector<Parameter<T>*> parameters();

  /// Parameters followed by batch-norm running statistics.
  std::vector<NamedTensor> state() const;
  /// Throws FormatError naming the record on missing names or shape mismatch.
  void load_state(const std::vector<NamedTensor>& records);

 private:
  ZipConfig config_;
  std::vector<ConvBnRelu<T>> stem_;
  std::array<std::vector<ConvBnRelu<T>>, kNumLevels> stages_;
  // zoom-in path, indexed by target level 1, 2 -> 0, 1
  std::array<Conv<T>, 2> up_conv_;
  std::array<Conv<T>, 2> lateral_;
  std::array<std::vector<ConvBnRelu<T>>, 2> mirrored_;
  std::vector<MadHead<T>> mad_;
  std::vector<RpnHead<T>> heads_;
  std::optional<double> mad_override_;
};

/// Loss terms of one image.
template <typename T>
struct RpnLoss {
  std::vector<Tensor<T>> per_level;  // weighted cls + reg, one per head
  std::vector<double> cls;
  std::vector<double> reg;
  Tensor<T> total;
};

/// Summed multi-level RPN loss for image `image` of the batch.
///
/// Per level: mean cross-entropy over the sampled anchors plus the squared
/// offset error summed over positives and divided by their count. A level
/// without samples contributes 0 and logs a warning.
template <typename T>
RpnLoss<T> rpn_loss(const std::vector<HeadOutput<T>>& heads,
                    const std::vector<LevelTargets>& targets, int num_classes, int image = 0,
                    double cls_weight = 1.0, double reg_weight = 1.0);

/// Max-pools each RoI of image 0 onto an out_h x out_w grid of a feature map
/// with the given stride. Output shape (rois, c, out_h, out_w). Zero-area
/// RoIs and RoIs whose projection is empty are widened to at least one cell
/// and their index is appended to `degenerate` when given.
template <typename T>
Tensor<T> roi_pool(const Tensor<T>& features, const BoxList& rois, int stride, int out_h = 7,
                   int out_w = 7, std::vector<int>* degenerate = nullptr);

/// Level whose scale range contains sqrt(area): boundaries sit at the
/// geometric mean of adjacent levels' extreme scales.
int route_roi_level(const Box& roi, const AnchorSpec& spec);

}  // namespace zipnet
