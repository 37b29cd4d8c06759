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

#include "zipnet/ops.hpp"
#include "zipnet/tensor.hpp"

namespace zipnet {

/// Gaussian kernel of shape (cout, cin, k, k) with the given std; a std of 0
/// selects sqrt(2 / fan_in).
template <typename T>
Tensor<T> gaussian_kernel(int cout, int cin, int k, double std, std::mt19937_64& rng);

template <typename T>
struct Conv {
  Conv() = default;
  Conv(const std::string& name, int cin, int cout, int k, int stride, std::mt19937_64& rng,
       double bias_init = 0.0, double init_std = 0.0);

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, kernel, bias, stride, pad); }
  void collect(std::vector<Parameter<T>*>& out) {
    out.push_back(&kernel);
    out.push_back(&bias);
  }

  Parameter<T> kernel;
  Parameter<T> bias;
  int stride = 1;
  int pad = 0;
};

/// 3x3 convolution, batch norm, ReLU.
template <typename T>
struct ConvBnRelu {
  ConvBnRelu() = default;
  ConvBnRelu(const std::string& name, int cin, int cout, int stride, std::mt19937_64& rng);

  Tensor<T> operator()(const Tensor<T>& x, BnMode mode);
  void collect(std::vector<Parameter<T>*>& out) {
    conv.collect(out);
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  std::string name;
  Conv<T> conv;
  Parameter<T> gamma;
  Parameter<T> beta;
  BatchNormState state;
};

}  // namespace zipnet
