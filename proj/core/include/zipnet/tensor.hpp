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

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace zipnet {

/// Extent of a dense (batch, channel, height, width) array.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct TensorImpl;

template <typename T>
struct GradNode {
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  // Receives the output gradient and accumulates into the inputs.
  std::function<void(std::span<const T>)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty when absent
  bool requires_grad = false;
  std::shared_ptr<GradNode<T>> node;

  // Gradient buffer of a backward target, or nullptr when the tensor does
  // not take gradients.
  T* grad_target() {
    if (!requires_grad) return nullptr;
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad.data();
  }
};

}  // namespace detail

/// Thread-local switch for graph recording. Forward passes run under a
/// NoGradGuard build no backward graph.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense 4-D array with an optional gradient buffer. Copies share storage;
/// use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using Impl = detail::TensorImpl<T>;
  using BackwardFn = std::function<void(std::span<const T>)>;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value) { return full({1, 1, 1, 1}, value); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  std::span<T> grad() { return impl_->grad; }
  std::span<const T> grad() const { return impl_->grad; }
  bool has_grad() const { return !impl_->grad.empty(); }

  T& at(int n, int c, int h, int w) { return impl_->data[offset(n, c, h, w)]; }
  T at(int n, int c, int h, int w) const { return impl_->data[offset(n, c, h, w)]; }
  T grad_at(int n, int c, int h, int w) const { return impl_->grad[offset(n, c, h, w)]; }
  /// Value of a single-element tensor.
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  /// Reverse-mode sweep from this single-element tensor. Gradients are
  /// accumulated into every reachable tensor with requires_grad set.
  void backward();
  /// Fills an existing or fresh gradient buffer with zeros.
  void zero_grad();
  /// Drops the gradient buffer.
  void clear_grad() { impl_->grad.clear(); }

  Tensor detach() const;
  Tensor clone() const;

  /// Builds the result of a differentiable op. The backward closure is kept
  /// only when grad mode is on and some input requires a gradient.
  static Tensor make_result(Shape shape, std::vector<T> values,
                            std::vector<Tensor> inputs, BackwardFn backward);

  Impl* impl() const { return impl_.get(); }

 private:
  std::size_t offset(int n, int c, int h, int w) const {
    const Shape& s = impl_->shape;
    return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
  }

  std::shared_ptr<Impl> impl_;
};

/// A trainable tensor plus its momentum buffer.
template <typename T>
struct Parameter {
  Parameter() = default;
  Parameter(std::string param_name, Tensor<T> initial)
      : name(std::move(param_name)),
        value(std::move(initial)),
        momentum(value.numel(), T(0)) {
    value.set_requires_grad(true);
  }

  std::string name;
  Tensor<T> value;
  std::vector<T> momentum;
};

}  // namespace zipnet
