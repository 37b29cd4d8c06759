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

#include "zipnet/gradcheck_suite.hpp"

#include <random>

#include "zipnet/errors.hpp"
#include "zipnet/mad.hpp"
#include "zipnet/ops.hpp"

namespace zipnet {

namespace {

using D = double;

Tensor<D> random_tensor(Shape s, std::mt19937_64& rng, bool grad = true) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<D> v(s.numel());
  for (auto& x : v) x = n(rng);
  return Tensor<D>(s, std::move(v), grad);
}

// <x, w> for a fixed weight array; turns any map into a scalar loss.
Tensor<D> readout(const Tensor<D>& x, const std::vector<D>& w) {
  double s = 0.0;
  const auto d = x.data();
  for (std::size_t i = 0; i < d.size(); ++i) s += d[i] * w[i];
  auto xi = x.impl();
  return Tensor<D>::make_result({1, 1, 1, 1}, {s}, {x}, [xi, w](std::span<const D> g) {
    if (D* gx = xi->grad_target()) {
      for (std::size_t i = 0; i < w.size(); ++i) gx[i] += g[0] * w[i];
    }
  });
}

std::vector<D> weights_for(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<D> w(n);
  for (auto& v : w) v = d(rng);
  return w;
}

// Random weighted readout of `op(inputs)`; the weights are drawn once.
template <typename Op>
NamedGradcheck check(const std::string& name, Op op, std::vector<Tensor<D>> inputs,
                     std::mt19937_64& rng, double eps) {
  std::vector<D> w;
  {
    NoGradGuard guard;
    w = weights_for(op().numel(), rng);
  }
  GradcheckOptions opts;
  opts.eps = eps;
  return {name, gradcheck([&] { return readout(op(), w); }, std::move(inputs), opts)};
}

}  // namespace

std::vector<NamedGradcheck> gradcheck_primitives(std::uint64_t seed, double eps) {
  std::mt19937_64 rng(seed);
  std::vector<NamedGradcheck> out;
  GradcheckOptions opts;
  opts.eps = eps;

  auto x = random_tensor({2, 3, 6, 6}, rng);
  auto k3 = random_tensor({4, 3, 3, 3}, rng);
  auto k1 = random_tensor({4, 3, 1, 1}, rng);
  auto b = random_tensor({1, 4, 1, 1}, rng);
  out.push_back(check("conv2d 3x3 stride 1", [&] { return conv2d(x, k3, b, 1, 1); }, {x, k3, b}, rng, eps));
  out.push_back(check("conv2d 3x3 stride 2", [&] { return conv2d(x, k3, b, 2, 1); }, {x, k3, b}, rng, eps));
  out.push_back(check("conv2d 1x1", [&] { return conv2d(x, k1, b, 1, 0); }, {x, k1, b}, rng, eps));
  {
    auto k2 = random_tensor({2, 4, 3, 3}, rng);
    auto b2 = random_tensor({1, 2, 1, 1}, rng);
    out.push_back(check("conv2d+relu stack",
                        [&] { return relu(conv2d(relu(conv2d(x, k3, b, 1, 1)), k2, b2, 1, 1)); },
                        {x, k3, b, k2, b2}, rng, eps));
  }
  out.push_back(check("max_pool2d", [&] { return max_pool2d(x, 2, 2); }, {x}, rng, eps));
  out.push_back(check("global_max_pool", [&] { return global_max_pool(x); }, {x}, rng, eps));
  out.push_back(check("bilinear_upsample_x2", [&] { return bilinear_upsample_x2(x); }, {x}, rng, eps));
  {
    auto gamma = random_tensor({1, 3, 1, 1}, rng);
    auto beta = random_tensor({1, 3, 1, 1}, rng);
    BatchNormState state(3);
    out.push_back(check("batch_norm train",
                        [&] { return batch_norm(x, gamma, beta, state, BnMode::kTrain); },
                        {x, gamma, beta}, rng, eps));
    out.push_back(check("batch_norm eval",
                        [&] { return batch_norm(x, gamma, beta, state, BnMode::kEval); },
                        {x, gamma, beta}, rng, eps));
  }
  out.push_back(check("relu", [&] { return relu(x); }, {x}, rng, eps));
  auto x2 = random_tensor({2, 3, 6, 6}, rng);
  out.push_back(check("add", [&] { return add(x, x2); }, {x, x2}, rng, eps));
  out.push_back(check("scale", [&] { return scale(x, -0.7); }, {x}, rng, eps));
  auto x3 = random_tensor({2, 2, 6, 6}, rng);
  out.push_back(check("concat_channels", [&] { return concat_channels(x, x3); }, {x, x3}, rng, eps));
  auto mu = random_tensor({2, 3, 1, 1}, rng);
  out.push_back(check("mad_apply", [&] { return mad_apply(x, mu); }, {x, mu}, rng, eps));
  {
    std::mt19937_64 head_rng(seed + 1);
    MadHead<D> head(1, 3, 2, 2, head_rng);
    std::vector<Parameter<D>*> params;
    head.collect(params);
    std::vector<Tensor<D>> inputs{x};
    for (auto* p : params) inputs.push_back(p->value);
    out.push_back(check("mad_generate", [&] { return head.generate(x).values; }, inputs, rng, eps));
    auto streams = random_tensor({2, 4, 5, 5}, rng);
    inputs.push_back(streams);
    out.push_back(check("mad_generate+mad_apply",
                        [&] { return mad_apply(streams, head.generate(x)); }, inputs, rng, eps));
  }
  {
    auto logits = random_tensor({7, 3, 1, 1}, rng);
    const std::vector<int> labels{0, 1, 2, 2, 1, 0, 2};
    out.push_back({"softmax_cross_entropy",
                   gradcheck([&] { return softmax_cross_entropy(logits, labels); }, {logits}, opts)});
    auto pred = random_tensor({5, 4, 1, 1}, rng);
    auto target = random_tensor({5, 4, 1, 1}, rng, false);
    const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
    out.push_back({"l2_regression",
                   gradcheck([&] { return l2_regression(pred, target, mask); }, {pred}, opts)});
  }
  {
    auto head = random_tensor({1, 6, 3, 3}, rng);
    const std::vector<int> anchors{0, 5, 7, 17, 3};
    out.push_back(check("gather_anchors", [&] { return gather_anchors(head, 0, anchors, 2, 3); },
                        {head}, rng, eps));
  }
  {
    auto fmap = random_tensor({1, 2, 8, 8}, rng);
    const BoxList rois{{0, 0, 64, 64}, {8, 16, 40, 56}, {20, 4, 28, 10}};
    out.push_back(check("roi_pool", [&] { return roi_pool(fmap, rois, 8, 2, 2); }, {fmap}, rng, eps));
  }
  return out;
}

namespace {

struct Fixture {
  Tensor<D> image;
  std::vector<LevelTargets> targets;
};

Fixture make_fixture(ZipNetwork<D>& net, std::uint64_t seed, int size) {
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  Fixture f;
  f.image = random_tensor({1, 3, size, size}, rng);
  // One small and one large object so every level draws samples.
  const BoxList gts{{0.10 * size, 0.15 * size, 0.35 * size, 0.40 * size},
                    {0.30 * size, 0.25 * size, 0.95 * size, 0.90 * size}};
  const AnchorSpec spec = net.config().anchor_spec();
  std::vector<AnchorGrid> grids;
  for (int level : net.head_levels()) {
    const int stride = spec.strides[level - 1];
    grids.push_back(generate_anchors(spec, level, size / stride, size / stride, size, size));
  }
  f.targets = assign(grids, gts, AssignmentConfig{}, rng);
  return f;
}

}  // namespace

NamedGradcheck gradcheck_mad_path(const ZipConfig& config, std::uint64_t seed, int size,
                                  std::size_t coords_per_tensor, double eps) {
  if (!config.use_mad) throw ConfigError("gradcheck_mad_path: config has no MAD unit");
  ZipNetwork<D> net(config, seed);
  const Fixture fx = make_fixture(net, seed, size);
  LevelOutputs<D> base;
  {
    NoGradGuard guard;
    base = net.forward_backbone(fx.image, BnMode::kTrain);
  }
  Tensor<D> f3 = base.f[2].detach();
  std::array<Tensor<D>, 2> streams{concat_channels(base.f[0], base.h[0]).detach(),
                                   concat_channels(base.f[1], base.h[1]).detach()};
  std::vector<Tensor<D>> inputs{f3, streams[0], streams[1]};
  std::vector<Parameter<D>*> all = net.parameters();
  for (auto* p : all) {
    // MAD and RPN head parameters only; the backbone is not on this path.
    if (p->name.rfind("mad", 0) == 0 || p->name.rfind("rpn", 0) == 0) inputs.push_back(p->value);
  }
  GradcheckOptions opts;
  opts.eps = eps;
  opts.max_coords_per_input = coords_per_tensor;
  opts.seed = seed;
  auto loss = [&] {
    LevelOutputs<D> lv;
    for (int i = 0; i < 2; ++i) lv.y[i] = mad_apply(streams[i], net.mad_generate(f3, i + 1));
    lv.y[2] = f3;
    return rpn_loss(net.forward_heads(lv), fx.targets, config.num_classes).total;
  };
  return {"MAD path rpn loss", gradcheck(loss, std::move(inputs), opts)};
}

NamedGradcheck gradcheck_network(const ZipConfig& config, std::uint64_t seed, int size,
                                 std::size_t coords_per_tensor, double eps) {
  ZipNetwork<D> net(config, seed);
  const Fixture fx = make_fixture(net, seed, size);
  std::vector<Tensor<D>> inputs{fx.image};
  for (auto* p : net.parameters()) inputs.push_back(p->value);
  GradcheckOptions opts;
  opts.eps = eps;
  opts.max_coords_per_input = coords_per_tensor;
  opts.seed = seed;
  auto loss = [&] {
    const auto levels = net.forward_backbone(fx.image, BnMode::kTrain);
    return rpn_loss(net.forward_heads(levels), fx.targets, config.num_classes).total;
  };
  return {"whole network rpn loss", gradcheck(loss, std::move(inputs), opts)};
}

}  // namespace zipnet
