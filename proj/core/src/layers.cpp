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

#include "zipnet/layers.hpp"

#include <cmath>

namespace zipnet {

template <typename T>
Tensor<T> gaussian_kernel(int cout, int cin, int k, double std, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(cin) * k * k;
  std::normal_distribution<double> dist(0.0, std > 0.0 ? std : std::sqrt(2.0 / fan_in));
  Tensor<T> t({cout, cin, k, k});
  for (T& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Conv<T>::Conv(const std::string& name, int cin, int cout, int k, int stride_,
              std::mt19937_64& rng, double bias_init, double init_std)
    : kernel(name + ".weight", gaussian_kernel<T>(cout, cin, k, init_std, rng)),
      bias(name + ".bias", Tensor<T>::full({1, cout, 1, 1}, static_cast<T>(bias_init))),
      stride(stride_),
      pad(k / 2) {}

template <typename T>
ConvBnRelu<T>::ConvBnRelu(const std::string& name_, int cin, int cout, int stride,
                          std::mt19937_64& rng)
    : name(name_),
      conv(name_ + ".conv", cin, cout, 3, stride, rng),
      gamma(name_ + ".bn.gamma", Tensor<T>::full({1, cout, 1, 1}, T(1))),
      beta(name_ + ".bn.beta", Tensor<T>::full({1, cout, 1, 1}, T(0))),
      state(cout) {}

template <typename T>
Tensor<T> ConvBnRelu<T>::operator()(const Tensor<T>& x, BnMode mode) {
  return relu(batch_norm(conv(x), gamma.value, beta.value, state, mode));
}

template Tensor<float> gaussian_kernel(int, int, int, double, std::mt19937_64&);
template Tensor<double> gaussian_kernel(int, int, int, double, std::mt19937_64&);
template struct Conv<float>;
template struct Conv<double>;
template struct ConvBnRelu<float>;
template struct ConvBnRelu<double>;

}  // namespace zipnet
