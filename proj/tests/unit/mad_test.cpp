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

#include <random>

#include "doctest.h"

#include "oracles.hpp"
#include "zipnet/errors.hpp"
#include "zipnet/gradcheck.hpp"
#include "zipnet/mad.hpp"
#include "zipnet/ops.hpp"
#include "zipnet/optim.hpp"

using namespace zipnet;
using D = double;

namespace {

std::vector<D> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::vector<D> v(n);
  for (auto& x : v) x = std::normal_distribution<D>()(rng);
  return v;
}

}  // namespace

TEST_CASE("mad_generate with zero kernels returns the bias") {
  std::mt19937_64 rng(1);
  MadHead<D> head(1, 8, 4, 2, rng, 0.1);
  std::vector<Parameter<D>*> ps;
  head.collect(ps);
  REQUIRE(ps.size() == 6);
  for (auto* p : ps)
    for (auto& v : p->value.data()) v = 0.0;
  auto* last_bias = ps[5];
  for (std::size_t i = 0; i < last_bias->value.numel(); ++i) last_bias->value.data()[i] = 0.01 * i;
  auto f3 = oracle::random_tensor<D>({1, 8, 3, 3}, rng);
  auto mu = head.generate(f3);
  CHECK(mu.length() == 8);
  for (int j = 0; j < 8; ++j) CHECK(mu.values.at(0, j, 0, 0) == doctest::Approx(0.01 * j));
}

TEST_CASE("mad_generate length and spatial independence") {
  std::mt19937_64 rng(2);
  // desk level 1: C = 32, lambda = 2, top level 128 channels
  MadHead<float> head(1, 128, 32, 2, rng);
  auto small = oracle::random_tensor<float>({1, 128, 2, 2}, rng);
  auto large = oracle::random_tensor<float>({1, 128, 7, 5}, rng);
  CHECK(head.generate(small).length() == 64);
  CHECK(head.generate(large).values.shape() == Shape{1, 64, 1, 1});

  MadHead<float> wide(2, 128, 64, 4, rng);
  CHECK(wide.generate(small).length() == 256);

  auto wrong = oracle::random_tensor<float>({1, 64, 2, 2}, rng);
  CHECK_THROWS_AS(head.generate(wrong), ConfigError);
}

TEST_CASE("mad_apply identity, annihilation and length mismatch") {
  std::mt19937_64 rng(3);
  auto x = oracle::random_tensor<D>({2, 4, 3, 3}, rng);
  x.set_requires_grad(true);
  auto ones = Tensor<D>::full({2, 4, 1, 1}, 1.0);
  auto y = mad_apply(x, ones);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

  auto zeros = Tensor<D>::full({2, 4, 1, 1}, 0.0);
  auto z = mad_apply(x, zeros);
  for (D v : z.data()) CHECK(v == 0.0);
  oracle::weighted_sum(z, random_vec(z.numel(), rng)).backward();
  for (D g : x.grad()) CHECK(g == 0.0);

  CHECK_THROWS_AS(mad_apply(x, Tensor<D>::full({2, 5, 1, 1}, 1.0)), DimensionError);
}

TEST_CASE("mad_apply gradients are the dot product and the scaled upstream") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Shape s{2, 6, 3, 4};
    auto x = oracle::random_tensor<D>(s, rng);
    auto mu = oracle::random_tensor<D>({2, 6, 1, 1}, rng);
    x.set_requires_grad(true);
    mu.set_requires_grad(true);
    const auto g = random_vec(s.numel(), rng);
    oracle::weighted_sum(mad_apply(x, mu), g).backward();
    for (int n = 0; n < 2; ++n)
      for (int j = 0; j < 6; ++j) {
        double dot = 0.0;
        for (int d = 0; d < 12; ++d) {
          const std::size_t idx = (static_cast<std::size_t>(n) * 6 + j) * 12 + d;
          dot += g[idx] * x.data()[idx];
          CHECK(x.grad()[idx] == doctest::Approx(mu.at(n, j, 0, 0) * g[idx]).epsilon(1e-12));
        }
        CHECK(mu.grad_at(n, j, 0, 0) == doctest::Approx(dot).epsilon(1e-12));
      }
    auto r = gradcheck([&] { return oracle::weighted_sum(mad_apply(x, mu), g); }, {x, mu});
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("mad_apply is linear in each argument") {
  std::mt19937_64 rng(5);
  auto x1 = oracle::random_tensor<D>({1, 3, 2, 2}, rng);
  auto x2 = oracle::random_tensor<D>({1, 3, 2, 2}, rng);
  auto mu = oracle::random_tensor<D>({1, 3, 1, 1}, rng);
  auto mu2 = oracle::random_tensor<D>({1, 3, 1, 1}, rng);
  auto lhs = mad_apply(add(scale(x1, 2.0), x2), mu);
  auto rhs = add(scale(mad_apply(x1, mu), 2.0), mad_apply(x2, mu));
  for (std::size_t i = 0; i < lhs.numel(); ++i) CHECK(lhs.data()[i] == doctest::Approx(rhs.data()[i]));
  auto lm = mad_apply(x1, add(mu, scale(mu2, -0.5)));
  auto rm = add(mad_apply(x1, mu), scale(mad_apply(x1, mu2), -0.5));
  for (std::size_t i = 0; i < lm.numel(); ++i) CHECK(lm.data()[i] == doctest::Approx(rm.data()[i]));
}

TEST_CASE("scaling the two streams scales the gate gradients") {
  std::mt19937_64 rng(6);
  const int c = 4;
  auto f = oracle::random_tensor<D>({1, c, 3, 3}, rng);
  auto h = oracle::random_tensor<D>({1, c, 3, 3}, rng);
  const auto g = random_vec(2 * c * 9, rng);
  auto grads = [&](double a, double b) {
    auto mu = oracle::random_tensor<D>({1, 2 * c, 1, 1}, rng);
    mu.set_requires_grad(true);
    oracle::weighted_sum(mad_apply(concat_channels(scale(f, a), scale(h, b)), mu), g).backward();
    return std::vector<D>(mu.grad().begin(), mu.grad().end());
  };
  const auto base = grads(1.0, 1.0);
  const auto scaled = grads(3.0, -0.5);
  for (int j = 0; j < c; ++j) CHECK(scaled[j] == doctest::Approx(3.0 * base[j]));
  for (int j = c; j < 2 * c; ++j) CHECK(scaled[j] == doctest::Approx(-0.5 * base[j]));
}

TEST_CASE("gating is per image") {
  std::mt19937_64 rng(7);
  MadHead<D> head(2, 6, 3, 2, rng);
  auto a = oracle::random_tensor<D>({1, 6, 3, 3}, rng);
  auto b = oracle::random_tensor<D>({1, 6, 3, 3}, rng);
  std::vector<D> v(a.data().begin(), a.data().end());
  v.insert(v.end(), b.data().begin(), b.data().end());
  Tensor<D> batch({2, 6, 3, 3}, v);
  std::vector<D> w(b.data().begin(), b.data().end());
  w.insert(w.end(), a.data().begin(), a.data().end());
  Tensor<D> swapped({2, 6, 3, 3}, w);
  auto m1 = head.generate(batch).values;
  auto m2 = head.generate(swapped).values;
  for (int j = 0; j < 6; ++j) {
    CHECK(m1.at(0, j, 0, 0) == m2.at(1, j, 0, 0));
    CHECK(m1.at(1, j, 0, 0) == m2.at(0, j, 0, 0));
  }
}

TEST_CASE("adapter probe signs and gate movement") {
  std::mt19937_64 rng(8);
  const int c = 50;
  auto x = oracle::random_tensor<D>({1, c, 2, 3}, rng);
  auto g = oracle::random_tensor<D>({1, c, 2, 3}, rng);
  // first channel parallel, second antiparallel
  for (int d = 0; d < 6; ++d) {
    g.data()[d] = 2.0 * x.data()[d];
    g.data()[6 + d] = -0.5 * x.data()[6 + d];
  }
  const auto signs = mad_adapter_probe(x, g);
  REQUIRE(signs.size() == static_cast<std::size_t>(c));
  for (int j = 0; j < c; ++j) {
    double dot = 0.0;
    for (int d = 0; d < 6; ++d) dot += x.data()[j * 6 + d] * g.data()[j * 6 + d];
    CHECK(signs[j] == (dot > 0) - (dot < 0));
  }
  CHECK(signs[0] == 1);
  CHECK(signs[1] == -1);

  Parameter<D> mu("mu", Tensor<D>::full({1, c, 1, 1}, 0.5));
  oracle::weighted_sum(mad_apply(x, mu.value), {g.data().begin(), g.data().end()}).backward();
  std::vector<Parameter<D>*> ps{&mu};
  sgd_step<D>(ps, {.lr = 0.01, .momentum = 0.0, .weight_decay = 0.0});
  for (int j = 0; j < c; ++j) {
    if (signs[j] > 0) CHECK(mu.value.data()[j] < 0.5);
    if (signs[j] < 0) CHECK(mu.value.data()[j] > 0.5);
  }
}
