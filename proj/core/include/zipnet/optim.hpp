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

#include <span>

#include "zipnet/tensor.hpp"

namespace zipnet {

struct SgdOptions {
  double lr = 1e-4;
  double momentum = 0.9;
  double weight_decay = 0.0005;
};

/// One momentum-SGD update over `params`, then zeroes their gradients:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
/// Throws NumericError naming the first parameter without a gradient.
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, const SgdOptions& options);

/// Step learning-rate schedule halving the base rate after every quarter of
/// `total_steps`.
double halving_schedule(double base_lr, long step, long total_steps);

}  // namespace zipnet
