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
#include <string>
#include <vector>

#include "zipnet/tensor.hpp"

namespace zipnet {

struct GradcheckOptions {
  double eps = 1e-3;
  // Coordinates probed per input; 0 probes every element.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
  // Central differences at eps and eps / 2 that disagree by more than
  // kink_tol * max(1, |d|) mean the stencil straddles a kink (ReLU, max);
  // such coordinates are re-measured with eps * kink_shrink.
  double kink_tol = 1e-6;
  double kink_shrink = 1e-3;
};

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t kink_coords = 0;  // measured with the shrunken step
  std::string worst;  // "input[i] element j: analytic a, numeric n"
};

/// Compares reverse-mode gradients of the scalar `loss` with respect to
/// each tensor in `inputs` against central differences. The error of one
/// coordinate is |a - n| / max(|a|, |n|, 1). Throws NumericError on
/// non-finite losses or gradients.
GradcheckResult gradcheck(const std::function<Tensor<double>()>& loss,
                          std::vector<Tensor<double>> inputs,
                          const GradcheckOptions& options = {});

}  // namespace zipnet
