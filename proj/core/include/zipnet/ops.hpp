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
#include <span>
#include <vector>

#include "zipnet/tensor.hpp"

namespace zipnet {

// Differentiable primitives over (n, c, h, w) tensors. Forward values are
// stored in T; reductions (sums, means, dot products) accumulate in double.

/// Cross-correlation with kernel (c_out, c_in, k, k) and bias (1, c_out, 1, 1).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int pad);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Parameter<T>& kernel, const Parameter<T>& bias,
                 int stride, int pad) {
  return conv2d(x, kernel.value, bias.value, stride, pad);
}

/// Window maximum, no padding. Ties go to the first element in row-major
/// order; backward routes the gradient to that element.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int k, int stride);

/// Per-channel spatial maximum, shape (n, c, 1, 1).
template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& x);

/// Doubles height and width with half-pixel (align-corners false) bilinear
/// interpolation.
template <typename T>
Tensor<T> bilinear_upsample_x2(const Tensor<T>& x);

/// kTrain normalizes by batch statistics and updates the running ones;
/// kEval uses the running statistics; kBatch normalizes by batch statistics
/// and leaves the running ones alone.
enum class BnMode { kTrain, kEval, kBatch };

/// Per-channel running statistics of a batch-norm layer.
struct BatchNormState {
  explicit BatchNormState(int channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}

  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.9;
  double eps = 1e-5;
};

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState& state, BnMode mode);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Multiplies every element by a constant.
template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor);

/// Channel-wise concatenation [a, b]; batch and spatial extents must agree.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Sum of single-element tensors.
template <typename T>
Tensor<T> sum_scalars(const std::vector<Tensor<T>>& terms);

/// Sum of all elements as a single-element tensor.
template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);

/// Mean over rows of -log softmax(logits)[label]; logits have shape
/// (rows, classes, 1, 1).
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

/// Sum over rows with mask[row] != 0 of the squared residual norm; pred and
/// target have shape (rows, dims, 1, 1). The target takes no gradient.
template <typename T>
Tensor<T> l2_regression(const Tensor<T>& pred, const Tensor<T>& target,
                        std::span<const std::uint8_t> mask);

/// Gathers per-anchor channel groups of a dense head output.
///
/// Anchor index a on an (h, w) grid with `per_cell` templates refers to cell
/// a / per_cell and template a % per_cell; the gathered row holds channels
/// [template * group, (template + 1) * group) at that cell of image `image`.
/// Output shape is (anchors.size(), group, 1, 1).
template <typename T>
Tensor<T> gather_anchors(const Tensor<T>& x, int image, std::span<const int> anchors,
                         int per_cell, int group);

/// Softmax over channel groups: for each cell and template, the `group`
/// logits become probabilities. Forward only.
template <typename T>
std::vector<double> grouped_softmax(const Tensor<T>& x, int image, int per_cell, int group,
                                    int cls);

}  // namespace zipnet
