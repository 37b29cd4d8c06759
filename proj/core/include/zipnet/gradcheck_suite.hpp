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
#include <string>
#include <vector>

#include "zipnet/gradcheck.hpp"
#include "zipnet/network.hpp"

namespace zipnet {

struct NamedGradcheck {
  std::string name;
  GradcheckResult result;
};

/// Finite-difference checks of every differentiable primitive on small
/// random inputs (double precision).
std::vector<NamedGradcheck> gradcheck_primitives(std::uint64_t seed, double eps = 1e-3);

/// Checks the gated head path of a double-precision network: the level
/// maps of one forward pass over a random 1 x 3 x size x size image become
/// leaves, and the summed RPN loss of
///   mad_apply([F^(m), H^(m)], mad_generate(F^(3), m)) -> heads -> loss
/// is checked against F^(3), the merged streams, and the MAD and RPN head
/// parameters. Throws ConfigError when the config has no MAD unit.
NamedGradcheck gradcheck_mad_path(const ZipConfig& config, std::uint64_t seed, int size = 64,
                                  std::size_t coords_per_tensor = 48, double eps = 1e-3);

/// Checks the summed RPN loss of the whole network (image and every
/// parameter) on a random 1 x 3 x size x size image with fixed targets.
/// Only `coords_per_tensor` coordinates are probed per tensor (0: all).
/// The loss is piecewise smooth (ReLU, max pooling), so a large eps crosses
/// kinks; the default step keeps crossings rare.
NamedGradcheck gradcheck_network(const ZipConfig& config, std::uint64_t seed, int size = 64,
                                 std::size_t coords_per_tensor = 6, double eps = 1e-6);

}  // namespace zipnet
