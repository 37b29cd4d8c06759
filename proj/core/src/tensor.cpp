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

#include "zipnet/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include <fmt/format.h>

#include "zipnet/errors.hpp"

namespace zipnet {

namespace {
thread_local bool grad_mode_enabled = true;
}  // namespace

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) { grad_mode_enabled = on; }

std::string Shape::str() const { return fmt::format("({}, {}, {}, {})", n, c, h, w); }

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw DimensionError("negative extent in shape " + shape.str());
  }
  impl_->shape = shape;
  impl_->data.assign(shape.numel(), T(0));
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (values.size() != shape.numel()) {
    throw DimensionError(fmt::format("data length {} does not match shape {}",
                                     values.size(), shape.str()));
  }
  impl_->shape = shape;
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  return Tensor(shape, std::vector<T>(shape.numel(), value), requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + shape().str());
  }
  return impl_->data[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  impl_->grad.assign(impl_->data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  Tensor out;
  out.impl_ = std::make_shared<Impl>();
  out.impl_->shape = impl_->shape;
  out.impl_->data = impl_->data;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out = detach();
  out.impl_->grad = impl_->grad;
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values,
                                 std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor out(shape, std::move(values));
  if (!GradMode::enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto node = std::make_shared<detail::GradNode<T>>();
  node->inputs.reserve(inputs.size());
  for (auto& t : inputs) node->inputs.push_back(t.impl_);
  node->backward = std::move(backward);
  out.impl_->node = std::move(node);
  out.impl_->requires_grad = true;
  return out;
}

template <typename T>
void Tensor<T>::backward() {
  if (numel() != 1) {
    throw DimensionError("backward() needs a single-element tensor, got " + shape().str());
  }
  // Iterative post-order DFS gives a topological order of the graph.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (node->node && next < node->node->inputs.size()) {
      Impl* child = node->node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  impl_->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* t = *it;
    if (!t->node || t->grad.empty()) continue;
    t->node->backward(std::span<const T>(t->grad));
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace zipnet
