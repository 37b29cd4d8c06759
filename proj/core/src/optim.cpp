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

#include "zipnet/optim.hpp"

#include <algorithm>

#include "zipnet/errors.hpp"

namespace zipnet {

template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, const SgdOptions& options) {
  for (const Parameter<T>* p : params) {
    if (!p->value.has_grad()) {
      throw NumericError("sgd_step: parameter '" + p->name + "' has no gradient");
    }
  }
  for (Parameter<T>* p : params) {
    auto data = p->value.data();
    auto grad = p->value.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double v = options.momentum * p->momentum[i] + grad[i] +
                       options.weight_decay * static_cast<double>(data[i]);
      p->momentum[i] = static_cast<T>(v);
      data[i] = static_cast<T>(data[i] - options.lr * v);
    }
    std::fill(grad.begin(), grad.end(), T(0));
  }
}

double halving_schedule(double base_lr, long step, long total_steps) {
  const long quarter = std::max(1L, total_steps / 4);
  const long drops = std::min(3L, step / quarter);
  return base_lr / static_cast<double>(1L << drops);
}

template void sgd_step(std::span<Parameter<float>* const>, const SgdOptions&);
template void sgd_step(std::span<Parameter<double>* const>, const SgdOptions&);

}  // namespace zipnet
