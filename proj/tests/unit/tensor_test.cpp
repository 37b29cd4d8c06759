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

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"

#include "oracles.hpp"
#include "zipnet/checkpoint.hpp"
#include "zipnet/errors.hpp"
#include "zipnet/gradcheck.hpp"
#include "zipnet/gradcheck_suite.hpp"
#include "zipnet/ops.hpp"
#include "zipnet/optim.hpp"

using namespace zipnet;
using D = double;

namespace {

std::vector<D> to_vec(const Tensor<D>& t) { return {t.data().begin(), t.data().end()}; }

Tensor<D> zeros(Shape s) { return Tensor<D>::full(s, 0.0); }

}  // namespace

TEST_CASE("conv2d identity and bias-only cases") {
  std::mt19937_64 rng(1);
  auto x = oracle::random_tensor<D>({2, 1, 5, 4}, rng);
  auto k = Tensor<D>::full({1, 1, 1, 1}, 1.0);
  auto y = conv2d(x, k, zeros({1, 1, 1, 1}), 1, 0);
  CHECK(y.shape() == x.shape());
  CHECK(to_vec(y) == to_vec(x));

  auto z = zeros({1, 3, 6, 6});
  auto k3 = oracle::random_tensor<D>({4, 3, 3, 3}, rng);
  Tensor<D> b({1, 4, 1, 1}, {0.5, -1.0, 2.0, 0.0});
  auto out = conv2d(z, k3, b, 2, 1);
  CHECK(out.shape() == Shape{1, 4, 3, 3});
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(out.at(0, c, i, j) == b.data()[c]);
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  std::mt19937_64 rng(2);
  struct Case {
    Shape x, k;
    int stride, pad;
  };
  const Case cases[] = {{{1, 3, 5, 5}, {2, 3, 3, 3}, 1, 0}, {{2, 3, 7, 6}, {4, 3, 3, 3}, 2, 1},
                        {{1, 5, 4, 4}, {3, 5, 1, 1}, 1, 0}, {{1, 2, 9, 9}, {2, 2, 3, 3}, 1, 1},
                        {{3, 4, 8, 5}, {6, 4, 3, 3}, 2, 0}};
  for (const auto& c : cases) {
    auto x = oracle::random_tensor<D>(c.x, rng);
    auto k = oracle::random_tensor<D>(c.k, rng);
    auto b = oracle::random_tensor<D>({1, c.k.n, 1, 1}, rng);
    auto y = conv2d(x, k, b, c.stride, c.pad);
    Shape os;
    const auto ref = oracle::conv2d(to_vec(x), c.x, to_vec(k), c.k, to_vec(b), c.stride, c.pad, &os);
    REQUIRE(y.shape() == os);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-9));
  }

  // float path against the same oracle, 1e-6 absolute
  auto xf = oracle::random_tensor<float>({1, 3, 5, 5}, rng);
  auto kf = oracle::random_tensor<float>({2, 3, 3, 3}, rng);
  auto bf = Tensor<float>::full({1, 2, 1, 1}, 0.25f);
  auto yf = conv2d(xf, kf, bf, 1, 0);
  Shape os;
  const auto ref = oracle::conv2d({xf.data().begin(), xf.data().end()}, {1, 3, 5, 5},
                                  {kf.data().begin(), kf.data().end()}, {2, 3, 3, 3},
                                  {0.25, 0.25}, 1, 0, &os);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(yf.data()[i] - ref[i]) < 1e-5);
}

TEST_CASE("conv2d rejects mismatched channels") {
  auto x = zeros({1, 3, 4, 4});
  auto k = zeros({2, 4, 3, 3});
  CHECK_THROWS_AS(conv2d(x, k, zeros({1, 2, 1, 1}), 1, 1), DimensionError);
}

TEST_CASE("max_pool2d") {
  auto c = Tensor<D>::full({1, 2, 4, 4}, 3.0);
  auto y = max_pool2d(c, 2, 2);
  for (D v : y.data()) CHECK(v == 3.0);

  Tensor<D> x({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(max_pool2d(x, 2, 2).item() == 4.0);

  std::mt19937_64 rng(3);
  auto r = oracle::random_tensor<D>({2, 3, 4, 4}, rng);
  std::vector<int> arg;
  const auto ref = oracle::max_pool(to_vec(r), r.shape(), 2, 2, &arg);
  auto p = max_pool2d(r, 2, 2);
  CHECK(to_vec(p) == ref);

  CHECK_THROWS_AS(max_pool2d(zeros({1, 1, 2, 2}), 3, 1), DimensionError);
}

TEST_CASE("max_pool2d backward deposits only at argmax positions") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = oracle::random_tensor<D>({1, 2, 6, 6}, rng);
    // overlapping windows and ties both exercised
    if (trial % 2) for (auto& v : x.data()) v = std::round(v);
    x.set_requires_grad(true);
    const int k = 2 + trial % 2, stride = 2 - trial % 2;
    auto y = max_pool2d(x, k, stride);
    std::vector<D> g(y.numel());
    for (auto& v : g) v = std::uniform_real_distribution<D>(-1, 1)(rng);
    oracle::weighted_sum(y, g).backward();

    std::vector<int> arg;
    oracle::max_pool(to_vec(x), x.shape(), k, stride, &arg);
    std::vector<D> expect(x.numel(), 0.0);
    for (std::size_t i = 0; i < arg.size(); ++i) expect[arg[i]] += g[i];
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(expect[i]));
    CHECK(std::accumulate(x.grad().begin(), x.grad().end(), 0.0) ==
          doctest::Approx(std::accumulate(g.begin(), g.end(), 0.0)));
  }
}

TEST_CASE("global_max_pool") {
  std::mt19937_64 rng(5);
  auto one = oracle::random_tensor<D>({2, 3, 1, 1}, rng);
  CHECK(to_vec(global_max_pool(one)) == to_vec(one));
  CHECK(global_max_pool(Tensor<D>::full({1, 1, 3, 5}, -2.5)).item() == -2.5);

  auto r = oracle::random_tensor<D>({2, 4, 5, 3}, rng);
  auto y = global_max_pool(r);
  CHECK(y.shape() == Shape{2, 4, 1, 1});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 4; ++c) {
      D m = -1e300;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j) m = std::max(m, r.at(n, c, i, j));
      CHECK(y.at(n, c, 0, 0) == m);
    }
}

TEST_CASE("bilinear_upsample_x2") {
  auto c = Tensor<D>::full({1, 2, 3, 4}, 1.75);
  auto y = bilinear_upsample_x2(c);
  CHECK(y.shape() == Shape{1, 2, 6, 8});
  for (D v : y.data()) CHECK(v == 1.75);

  auto single = Tensor<D>::full({1, 1, 1, 1}, -3.0);
  auto up = bilinear_upsample_x2(single);
  for (D v : up.data()) CHECK(v == -3.0);

  std::mt19937_64 rng(6);
  auto r = oracle::random_tensor<D>({1, 1, 3, 3}, rng);
  auto u = bilinear_upsample_x2(r);
  const auto m = oracle::upsample_matrix(3);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      D ref = 0.0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) ref += m[i][a] * m[j][b] * r.at(0, 0, a, b);
      CHECK(u.at(0, 0, i, j) == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("bilinear_upsample_x2 is linear") {
  std::mt19937_64 rng(7);
  auto x = oracle::random_tensor<D>({2, 3, 4, 5}, rng);
  auto y = oracle::random_tensor<D>({2, 3, 4, 5}, rng);
  const D a = 0.7, b = -1.3;
  auto lhs = bilinear_upsample_x2(add(scale(x, a), scale(y, b)));
  auto rhs = add(scale(bilinear_upsample_x2(x), a), scale(bilinear_upsample_x2(y), b));
  for (std::size_t i = 0; i < lhs.numel(); ++i)
    CHECK(lhs.data()[i] == doctest::Approx(rhs.data()[i]).epsilon(1e-12));
}

TEST_CASE("batch_norm") {
  std::mt19937_64 rng(8);
  auto ones = Tensor<D>::full({1, 2, 1, 1}, 1.0);
  auto zero = zeros({1, 2, 1, 1});

  // standardize a batch by hand, then bn should leave it (almost) alone
  auto x = oracle::random_tensor<D>({4, 2, 3, 3}, rng);
  for (int c = 0; c < 2; ++c) {
    double mean = 0, var = 0;
    const int cnt = 4 * 9;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i) mean += x.at(n, c, i / 3, i % 3);
    mean /= cnt;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i) var += std::pow(x.at(n, c, i / 3, i % 3) - mean, 2);
    var /= cnt;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 9; ++i)
        x.at(n, c, i / 3, i % 3) = (x.at(n, c, i / 3, i % 3) - mean) / std::sqrt(var);
  }
  BatchNormState st(2);
  auto y = batch_norm(x, ones, zero, st, BnMode::kTrain);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-4));

  BatchNormState st2(2);
  Tensor<D> beta({1, 2, 1, 1}, {0.3, -0.4});
  auto yb = batch_norm(oracle::random_tensor<D>({2, 2, 3, 3}, rng), zero, beta, st2, BnMode::kTrain);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 9; ++i) {
      CHECK(yb.at(n, 0, i / 3, i % 3) == doctest::Approx(0.3));
      CHECK(yb.at(n, 1, i / 3, i % 3) == doctest::Approx(-0.4));
    }

  // random batch: per-channel statistics of the output
  BatchNormState st3(3);
  auto r = oracle::random_tensor<D>({5, 3, 4, 4}, rng, 3.0);
  for (auto& v : r.data()) v += 2.0;
  auto out = batch_norm(r, Tensor<D>::full({1, 3, 1, 1}, 1.0), zeros({1, 3, 1, 1}), st3, BnMode::kTrain);
  for (int c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (int n = 0; n < 5; ++n)
      for (int i = 0; i < 16; ++i) m += out.at(n, c, i / 4, i % 4);
    m /= 80;
    for (int n = 0; n < 5; ++n)
      for (int i = 0; i < 16; ++i) v += std::pow(out.at(n, c, i / 4, i % 4) - m, 2);
    v /= 80;
    CHECK(std::abs(m) < 1e-9);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
  // running statistics moved toward the batch statistics
  CHECK(st3.running_mean[0] != 0.0);

  // eval before any training step uses mean 0, var 1
  BatchNormState fresh(2);
  auto e = batch_norm(x, ones, zero, fresh, BnMode::kEval);
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(e.data()[i] == doctest::Approx(x.data()[i] / std::sqrt(1.0 + 1e-5)));
}

TEST_CASE("losses") {
  SUBCASE("uniform logits give ln K") {
    for (int k : {2, 3, 5}) {
      auto logits = Tensor<D>::full({4, k, 1, 1}, 0.37);
      std::vector<int> labels{0, 1, k - 1, 0};
      CHECK(softmax_cross_entropy(logits, labels).item() == doctest::Approx(std::log(k)));
    }
  }
  SUBCASE("label outside range") {
    auto logits = zeros({2, 3, 1, 1});
    std::vector<int> labels{0, 3};
    CHECK_THROWS_AS(softmax_cross_entropy(logits, labels), IndexError);
  }
  SUBCASE("zero residual") {
    std::mt19937_64 rng(9);
    auto p = oracle::random_tensor<D>({5, 4, 1, 1}, rng);
    std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
    CHECK(l2_regression(p, p.clone(), mask).item() == 0.0);
  }
  SUBCASE("masked rows only") {
    Tensor<D> p({2, 4, 1, 1}, {1, 0, 0, 0, 5, 5, 5, 5});
    auto t = zeros({2, 4, 1, 1});
    std::vector<std::uint8_t> mask{1, 0};
    CHECK(l2_regression(p, t, mask).item() == 1.0);
  }
  SUBCASE("finite differences") {
    std::mt19937_64 rng(10);
    auto logits = oracle::random_tensor<D>({6, 3, 1, 1}, rng);
    std::vector<int> labels{0, 2, 1, 1, 0, 2};
    auto r = gradcheck([&] { return softmax_cross_entropy(logits, labels); }, {logits});
    CHECK(r.max_rel_error <= 1e-4);
    auto p = oracle::random_tensor<D>({4, 4, 1, 1}, rng);
    auto t = oracle::random_tensor<D>({4, 4, 1, 1}, rng);
    std::vector<std::uint8_t> mask{1, 1, 0, 1};
    auto r2 = gradcheck([&] { return l2_regression(p, t, mask); }, {p});
    CHECK(r2.max_rel_error <= 1e-4);
  }
}

TEST_CASE("sgd_step") {
  SUBCASE("fixed point") {
    Parameter<D> p("w", Tensor<D>({1, 1, 1, 3}, {1, 2, 3}));
    p.value.zero_grad();
    std::vector<Parameter<D>*> ps{&p};
    sgd_step<D>(ps, {.lr = 0.1, .momentum = 0.9, .weight_decay = 0.0});
    CHECK(to_vec(p.value) == std::vector<D>{1, 2, 3});
  }
  SUBCASE("plain gradient descent") {
    Parameter<D> p("w", Tensor<D>({1, 1, 1, 2}, {1.0, -2.0}));
    p.value.zero_grad();
    p.value.grad()[0] = 0.25;
    p.value.grad()[1] = -0.5;
    std::vector<Parameter<D>*> ps{&p};
    sgd_step<D>(ps, {.lr = 1.0, .momentum = 0.0, .weight_decay = 0.0});
    CHECK(p.value.data()[0] == 0.75);
    CHECK(p.value.data()[1] == -1.5);
    CHECK(p.value.grad()[0] == 0.0);
  }
  SUBCASE("two momentum steps") {
    Parameter<D> p("w", Tensor<D>({1, 1, 1, 1}, std::vector<D>{2.0}));
    std::vector<Parameter<D>*> ps{&p};
    const SgdOptions o{.lr = 0.1, .momentum = 0.9, .weight_decay = 0.01};
    double w = 2.0, v = 0.0;
    for (double g : {0.5, -0.3}) {
      p.value.zero_grad();
      p.value.grad()[0] = g;
      sgd_step<D>(ps, o);
      v = 0.9 * v + g + 0.01 * w;
      w = w - 0.1 * v;
      CHECK(p.value.data()[0] == doctest::Approx(w).epsilon(1e-14));
      CHECK(p.momentum[0] == doctest::Approx(v).epsilon(1e-14));
    }
  }
  SUBCASE("missing gradient names the parameter") {
    Parameter<D> p("stage2.conv.kernel", zeros({1, 1, 1, 1}));
    std::vector<Parameter<D>*> ps{&p};
    try {
      sgd_step<D>(ps, {});
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("stage2.conv.kernel") != std::string::npos);
    }
  }
  CHECK(halving_schedule(0.01, 0, 100) == 0.01);
  CHECK(halving_schedule(0.01, 25, 100) == 0.005);
  CHECK(halving_schedule(0.01, 99, 100) == doctest::Approx(0.00125));
}

TEST_CASE("gradcheck") {
  std::mt19937_64 rng(11);
  auto x = oracle::random_tensor<D>({1, 2, 3, 3}, rng);
  std::vector<D> w(x.numel());
  for (auto& v : w) v = std::normal_distribution<D>()(rng);
  auto r = gradcheck([&] { return oracle::weighted_sum(scale(x, 3.0), w); }, {x});
  CHECK(r.max_rel_error <= 1e-8);
  CHECK(r.coords_checked == x.numel());

  auto k = oracle::random_tensor<D>({2, 2, 3, 3}, rng);
  auto b = oracle::random_tensor<D>({1, 2, 1, 1}, rng);
  auto r2 = gradcheck(
      [&] { return oracle::weighted_sum(relu(conv2d(relu(conv2d(x, k, b, 1, 1)), k, b, 1, 1)), w); },
      {x, k, b});
  CHECK(r2.max_rel_error <= 1e-4);

  auto bad = Tensor<D>({1, 1, 1, 1}, std::vector<D>{0.0});
  CHECK_THROWS_AS(gradcheck([&] { return scale(bad, std::numeric_limits<D>::infinity()); }, {bad}),
                  NumericError);
}

TEST_CASE("every primitive passes finite differences") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    for (const auto& c : gradcheck_primitives(seed)) {
      INFO(c.name << " seed " << seed << ": " << c.result.worst);
      CHECK(c.result.max_rel_error <= 1e-4);
    }
  }
}

TEST_CASE("checkpoint round trip and malformed input") {
  std::vector<NamedTensor> recs{{"a", {1, 2, 1, 1}, {1.5f, -2.0f}},
                                {"stage1.bn.gamma", {1, 3, 1, 1}, {0.f, 1.f, 2.f}}};
  std::stringstream ss;
  write_checkpoint(ss, recs);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "ZIPC");
  auto back = read_checkpoint(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[1].name == "stage1.bn.gamma");
  CHECK(back[1].shape == Shape{1, 3, 1, 1});
  CHECK(back[0].values == recs[0].values);

  std::stringstream trunc(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(trunc), FormatError);
  std::stringstream magic("ZIPX" + bytes.substr(4));
  CHECK_THROWS_AS(read_checkpoint(magic), FormatError);
}
