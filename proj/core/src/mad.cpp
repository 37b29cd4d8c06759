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

#include "zipnet/mad.hpp"

#include <fmt/format.h>

#include "zipnet/errors.hpp"
#include "zipnet/ops.hpp"

namespace zipnet {

template <typename T>
MadHead<T>::MadHead(int level, int top_channels, int level_channels, int lambda,
                    std::mt19937_64& rng, double bias_init)
    : level_(level),
      lambda_(lambda),
      top_channels_(top_channels),
      length_(lambda * level_channels) {
  if (lambda < 1 || level_channels < 1 || top_channels < 1) {
    throw ConfigError(fmt::format("MAD head: lambda {} and channels {}/{} must be positive",
                                  lambda, level_channels, top_channels));
  }
  const std::string prefix = fmt::format("mad{}", level);
  convs_.reserve(3);
  convs_.emplace_back(prefix + ".conv1", top_channels, length_, 3, 1, rng, bias_init);
  convs_.emplace_back(prefix + ".conv2", length_, length_, 3, 1, rng, bias_init);
  convs_.emplace_back(prefix + ".conv3", length_, length_, 3, 1, rng, bias_init);
}

template <typename T>
MadVector<T> MadHead<T>::generate(const Tensor<T>& f3) const {
  if (f3.shape().c != top_channels_) {
    throw ConfigError(fmt::format("MAD head for level {} expects {} top-level channels, got {}",
                                  level_, top_channels_, f3.shape().c));
  }
  Tensor<T> h = relu(convs_[0](f3));
  h = relu(convs_[1](h));
  h = convs_[2](h);
  return {global_max_pool(h), level_, lambda_};
}

template <typename T>
void MadHead<T>::collect(std::vector<Parameter<T>*>& out) {
  for (auto& c : convs_) c.collect(out);
}

template <typename T>
Tensor<T> mad_apply(const Tensor<T>& x, const Tensor<T>& mu) {
  const Shape xs = x.shape();
  const Shape ms = mu.shape();
  if (ms.n != xs.n || ms.c != xs.c || ms.h != 1 || ms.w != 1) {
    throw DimensionError(fmt::format("mad_apply: vector shape {} does not gate maps {}",
                                     ms.str(), xs.str()));
  }
  const std::size_t plane = xs.plane();
  std::vector<T> out(xs.numel());
  const T* in = x.data().data();
  const T* m = mu.data().data();
  for (std::size_t j = 0; j < static_cast<std::size_t>(xs.n) * xs.c; ++j) {
    for (std::size_t d = 0; d < plane; ++d) out[j * plane + d] = m[j] * in[j * plane + d];
  }
  auto xi = x.impl();
  auto mi = mu.impl();
  return Tensor<T>::make_result(xs, std::move(out), {x, mu}, [=](std::span<const T> g) {
    T* gx = xi->grad_target();
    T* gm = mi->grad_target();
    const std::size_t rows = static_cast<std::size_t>(xs.n) * xs.c;
    for (std::size_t j = 0; j < rows; ++j) {
      const T* gj = g.data() + j * plane;
      if (gm) {
        const T* xj = xi->data.data() + j * plane;
        double dot = 0.0;
        for (std::size_t d = 0; d < plane; ++d) dot += static_cast<double>(gj[d]) * xj[d];
        gm[j] += static_cast<T>(dot);
      }
      if (gx) {
        const T mj = mi->data[j];
        for (std::size_t d = 0; d < plane; ++d) gx[j * plane + d] += mj * gj[d];
      }
    }
  });
}

template <typename T>
std::vector<int> mad_adapter_probe(const Tensor<T>& x, const Tensor<T>& upstream_grad) {
  if (!(x.shape() == upstream_grad.shape())) {
    throw DimensionError(fmt::format("mad_adapter_probe: maps {} and gradient {} differ",
                                     x.shape().str(), upstream_grad.shape().str()));
  }
  const Shape xs = x.shape();
  const std::size_t plane = xs.plane();
  std::vector<int> signs(static_cast<std::size_t>(xs.n) * xs.c);
  for (std::size_t j = 0; j < signs.size(); ++j) {
    double dot = 0.0;
    for (std::size_t d = 0; d < plane; ++d) {
      dot += static_cast<double>(x.data()[j * plane + d]) * upstream_grad.data()[j * plane + d];
    }
    signs[j] = (dot > 0.0) - (dot < 0.0);
  }
  return signs;
}

template class MadHead<float>;
template class MadHead<double>;
template Tensor<float> mad_apply(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> mad_apply(const Tensor<double>&, const Tensor<double>&);
template std::vector<int> mad_adapter_probe(const Tensor<float>&, const Tensor<float>&);
template std::vector<int> mad_adapter_probe(const Tensor<double>&, const Tensor<double>&);

}  // namespace zipnet
