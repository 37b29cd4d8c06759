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

#include <vector>

#include "zipnet/image.hpp"
#include "zipnet/network.hpp"
#include "zipnet/proposals.hpp"
#include "zipnet/synth.hpp"

namespace zipnet {

/// Resize factor that brings the longer image side to `scale`.
double scale_factor(int image_h, int image_w, int scale);

/// Dense per-level predictions of one forward pass (batch-statistics
/// normalization, no graph).
struct ForwardPredictions {
  std::vector<AnchorGrid> anchors;
  std::vector<LevelPrediction> levels;  // levels[i].anchors points into anchors[i]
  int image_h = 0;
  int image_w = 0;
};

/// Forward at one test scale. Throws ConfigError for scales below 32.
ForwardPredictions predict(ZipNetwork<float>& net, const Image& image, int scale);

/// Per-level lists at one scale, mapped back to original coordinates.
LevelBoxes propose_single_scale(ZipNetwork<float>& net, const Image& image, int scale,
                                const ProposalConfig& cfg);

/// Union over scales of the per-level lists, each level sorted by score.
LevelBoxes multi_scale_propose(ZipNetwork<float>& net, const Image& image,
                               const std::vector<int>& scales, const ProposalConfig& cfg);

/// Raw per-level proposals for every image of a dataset.
std::vector<LevelBoxes> propose_dataset(ZipNetwork<float>& net, const Dataset& data,
                                        const ProposalConfig& cfg);

/// Calibrates biases and thresholds on `cal`, then emits one record per
/// image of `eval`.
std::vector<ProposalRecord> propose_and_finalize(ZipNetwork<float>& net, const Dataset& cal,
                                                 const Dataset& eval, const ProposalConfig& cfg,
                                                 ProposalCalibration* calibration = nullptr);

}  // namespace zipnet
