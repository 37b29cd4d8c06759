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

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "zipnet/assign.hpp"
#include "zipnet/image.hpp"
#include "zipnet/network.hpp"
#include "zipnet/optim.hpp"
#include "zipnet/synth.hpp"

namespace zipnet {

struct TrainConfig {
  long steps = 5000;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  bool dynamic_scale = true;
  bool flip = true;
  double clip_grad_norm = 10.0;  // 0 disables
  int log_every = 250;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Network input built from one annotated image.
struct TrainSample {
  Tensor<float> image;  // (1, 3, H', W'), H' and W' multiples of 32
  int image_h = 0;      // extent of real pixels inside the padded tensor
  int image_w = 0;
  BoxList gts;
};

/// Resizes by `factor` (extents rounded, at least 1 px), optionally mirrors
/// horizontally, and scales / mirrors the boxes to match. Boxes that shrink
/// below one pixel are dropped.
TrainSample make_sample(const Image& image, const BoxList& gts, double factor, bool flip);

/// Anchor grids of every head level for a padded input of padded_h x padded_w
/// holding an image_h x image_w picture.
std::vector<AnchorGrid> head_anchors(const ZipNetwork<float>& net, int padded_h, int padded_w,
                                     int image_h, int image_w);

struct StepStats {
  long step = 0;
  double lr = 0.0;
  double total = 0.0;
  std::vector<int> levels;
  std::vector<double> cls;
  std::vector<double> reg;
  std::vector<int> num_pos;
  std::vector<int> num_sampled;
  double grad_norm = 0.0;
};

/// Forward, backward and one SGD step on a single sample. A non-finite loss
/// or gradient throws NumericError carrying the per-level loss terms, with
/// the parameters left untouched.
StepStats train_step(ZipNetwork<float>& net, const TrainSample& sample,
                     const AssignmentConfig& assign_cfg, const SgdOptions& sgd,
                     double clip_grad_norm, std::mt19937_64& rng);

/// Epoch-shuffled single-image SGD over a dataset.
class Trainer {
 public:
  Trainer(ZipNetwork<float>& net, const Dataset& data, const TrainConfig& cfg,
          const AssignmentConfig& assign_cfg, const TrainScaleConfig& scale_cfg,
          std::uint64_t seed);

  StepStats step();
  /// Runs the remaining steps; `on_step` sees every step's statistics.
  void run(const std::function<void(const StepStats&)>& on_step = {});
  long steps_done() const { return step_; }

 private:
  std::size_t next_index();

  ZipNetwork<float>& net_;
  const Dataset& data_;
  TrainConfig cfg_;
  AssignmentConfig assign_cfg_;
  TrainScaleConfig scale_cfg_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  long step_ = 0;
  std::vector<Image> cache_;
};

}  // namespace zipnet
