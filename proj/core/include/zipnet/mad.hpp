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

#include <random>
#include <string>
#include <vector>

#include "zipnet/layers.hpp"
#include "zipnet/tensor.hpp"

namespace zipnet {

/// Per-image channel gating vector of one level, shape (n, lambda * C, 1, 1).
/// It is recomputed from every input; no value is cached across images.
template <typename T>
struct MadVector {
  Tensor<T> values;
  int level = 0;
  int lambda = 2;

  int length() const { return values.shape().c; }
};

/// Map attention decision head for one level: three 3x3 convolutions on
/// the top-level features, each with lambda * C^(m) output channels, ReLU
/// between them, and a global max pool collapsing space to 1x1.
///
/// The output is not squashed, so gates may go negative.
template <typename T>
class MadHead {
 public:
  MadHead() = default;
  MadHead(int level, int top_channels, int level_channels, int lambda, std::mt19937_64& rng,
          double bias_init = 0.1);

  /// Throws ConfigError when `f3` does not carry top_channels() channels.
  MadVector<T> generate(const Tensor<T>& f3) const;

  void collect(std::vector<Parameter<T>*>& out);
  int level() const { return level_; }
  int lambda() const { return lambda_; }
  int top_channels() const { return top_channels_; }
  int length() const { return length_; }

 private:
  int level_ = 0;
  int lambda_ = 2;
  int top_channels_ = 0;
  int length_ = 0;
  std::vector<Conv<T>> convs_;
};

/// Scales channel j of every image by mu[image, j]. x has shape
/// (n, L, h, w) and mu (n, L, 1, 1). Backward gives
///   dL/dmu_j = <dL/dy_j, x_j>,   dL/dx_j = mu_j * dL/dy_j.
template <typename T>
Tensor<T> mad_apply(const Tensor<T>& x, const Tensor<T>& mu);

template <typename T>
Tensor<T> mad_apply(const Tensor<T>& x, const MadVector<T>& mu) {
  return mad_apply(x, mu.values);
}

/// Sign of <upstream_j, x_j> per (image, channel), row-major. A positive
/// entry means a gradient step lowers mu_j, a negative one raises it.
template <typename T>
std::vector<int> mad_adapter_probe(const Tensor<T>& x, const Tensor<T>& upstream_grad);

}  // namespace zipnet
