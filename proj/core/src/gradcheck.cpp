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

#include "zipnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "zipnet/errors.hpp"

namespace zipnet {

namespace {

double finite_loss(const std::function<Tensor<double>()>& loss) {
  NoGradGuard guard;
  const double v = loss().item();
  if (!std::isfinite(v)) throw NumericError("gradcheck: non-finite loss value");
  return v;
}

}  // namespace

GradcheckResult gradcheck(const std::function<Tensor<double>()>& loss,
                          std::vector<Tensor<double>> inputs, const GradcheckOptions& options) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  Tensor<double> out = loss();
  if (!std::isfinite(out.item())) throw NumericError("gradcheck: non-finite loss value");
  out.backward();

  std::mt19937_64 rng(options.seed);
  GradcheckResult result;
  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    auto& t = inputs[idx];
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    for (double a : analytic) {
      if (!std::isfinite(a)) throw NumericError("gradcheck: non-finite analytic gradient");
    }

    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input > 0 && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }

    auto data = t.data();
    for (std::size_t j : coords) {
      const double saved = data[j];
      auto central = [&](double h) {
        data[j] = saved + h;
        const double up = finite_loss(loss);
        data[j] = saved - h;
        const double down = finite_loss(loss);
        data[j] = saved;
        return (up - down) / (2.0 * h);
      };
      double numeric = central(options.eps);
      if (options.kink_tol > 0.0) {
        const double half = central(0.5 * options.eps);
        if (std::abs(numeric - half) > options.kink_tol * std::max(1.0, std::abs(numeric))) {
          numeric = central(options.eps * options.kink_shrink);
          ++result.kink_coords;
        }
      }
      const double a = analytic[j];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
      ++result.coords_checked;
      if (err > result.max_rel_error || result.worst.empty()) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        if (err >= result.max_rel_error) {
          result.worst = fmt::format("input[{}] element {}: analytic {:.10g}, numeric {:.10g}",
                                     idx, j, a, numeric);
        }
      }
    }
  }
  return result;
}

}  // namespace zipnet
