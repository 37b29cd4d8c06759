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

#include "zipnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>
#include <fmt/format.h>

#include "zipnet/errors.hpp"

namespace zipnet {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

// Unfolds one image (c, h, w) into a (c*k*k, oh*ow) patch matrix.
template <typename T>
void im2col(const T* img, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
            T* col) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + (static_cast<std::size_t>(ch * k + ki) * k + kj) * cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ki;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = img + (static_cast<std::size_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kj;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
            T* img) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + (static_cast<std::size_t>(ch * k + ki) * k + kj) * cols;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          T* dst = img + (static_cast<std::size_t>(ch) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ks = kernel.shape();
  require(stride >= 1 && pad >= 0,
          fmt::format("conv2d: stride {} must be >= 1 and pad {} >= 0", stride, pad));
  require(ks.h == ks.w, fmt::format("conv2d: kernel must be square, got {}", ks.str()));
  require(ks.c == xs.c, fmt::format("conv2d: input channels (axis 1) {} != kernel in-channels "
                                    "(axis 1) {}",
                                    xs.c, ks.c));
  require(bias.numel() == static_cast<std::size_t>(ks.n),
          fmt::format("conv2d: bias length {} != kernel out-channels (axis 0) {}", bias.numel(),
                      ks.n));
  const int k = ks.h;
  const int oh = (xs.h + 2 * pad - k) / stride + 1;
  const int ow = (xs.w + 2 * pad - k) / stride + 1;
  require(xs.h + 2 * pad >= k && xs.w + 2 * pad >= k,
          fmt::format("conv2d: kernel {} larger than padded input {}", k, xs.str()));

  const int cout = ks.n;
  const int kdim = xs.c * k * k;
  const int cols = oh * ow;
  const bool direct = (k == 1 && stride == 1 && pad == 0);
  Shape os{xs.n, cout, oh, ow};
  std::vector<T> out(os.numel());

  // Patch matrices are kept for the weight gradient.
  auto patches = std::make_shared<std::vector<T>>();
  if (!direct) patches->resize(static_cast<std::size_t>(xs.n) * kdim * cols);

  ConstMatMap<T> wmat(kernel.data().data(), cout, kdim);
  const T* b = bias.data().data();
  for (int n = 0; n < xs.n; ++n) {
    const T* img = x.data().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
    const T* col = img;
    if (!direct) {
      T* dst = patches->data() + static_cast<std::size_t>(n) * kdim * cols;
      im2col(img, xs.c, xs.h, xs.w, k, stride, pad, oh, ow, dst);
      col = dst;
    }
    MatMap<T> omat(out.data() + static_cast<std::size_t>(n) * cout * cols, cout, cols);
    omat.noalias() = wmat * ConstMatMap<T>(col, kdim, cols);
    for (int co = 0; co < cout; ++co) omat.row(co).array() += b[co];
  }

  auto xi = x.impl();
  auto ki = kernel.impl();
  auto bi = bias.impl();
  return Tensor<T>::make_result(
      os, std::move(out), {x, kernel, bias},
      [=](std::span<const T> g) {
        T* gx = xi->grad_target();
        T* gk = ki->grad_target();
        T* gb = bi->grad_target();
        ConstMatMap<T> w(ki->data.data(), cout, kdim);
        std::vector<T> dcol;
        if (gx && !direct) dcol.resize(static_cast<std::size_t>(kdim) * cols);
        for (int n = 0; n < xs.n; ++n) {
          ConstMatMap<T> gmat(g.data() + static_cast<std::size_t>(n) * cout * cols, cout, cols);
          const T* col = direct ? xi->data.data() + static_cast<std::size_t>(n) * kdim * cols
                                : patches->data() + static_cast<std::size_t>(n) * kdim * cols;
          if (gk) {
            MatMap<T> gw(gk, cout, kdim);
            gw.noalias() += gmat * ConstMatMap<T>(col, kdim, cols).transpose();
          }
          if (gb) {
            for (int co = 0; co < cout; ++co) {
              double s = 0.0;
              const T* gr = g.data() + (static_cast<std::size_t>(n) * cout + co) * cols;
              for (int p = 0; p < cols; ++p) s += gr[p];
              gb[co] += static_cast<T>(s);
            }
          }
          if (gx) {
            T* gimg = gx + static_cast<std::size_t>(n) * xs.c * xs.plane();
            if (direct) {
              MatMap<T> gi(gimg, kdim, cols);
              gi.noalias() += w.transpose() * gmat;
            } else {
              MatMap<T> dc(dcol.data(), kdim, cols);
              dc.noalias() = w.transpose() * gmat;
              col2im(dcol.data(), xs.c, xs.h, xs.w, k, stride, pad, oh, ow, gimg);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int k, int stride) {
  const Shape xs = x.shape();
  require(k >= 1 && stride >= 1, fmt::format("max_pool2d: k {} and stride {} must be >= 1", k, stride));
  require(xs.h >= k && xs.w >= k,
          fmt::format("max_pool2d: window {} larger than input {}", k, xs.str()));
  const int oh = (xs.h - k) / stride + 1;
  const int ow = (xs.w - k) / stride + 1;
  Shape os{xs.n, xs.c, oh, ow};
  std::vector<T> out(os.numel());
  auto argmax = std::make_shared<std::vector<std::size_t>>(os.numel());
  const T* in = x.data().data();
  std::size_t o = 0;
  for (int nc = 0; nc < xs.n * xs.c; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * xs.plane();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + static_cast<std::size_t>(oy * stride) * xs.w + ox * stride;
        for (int dy = 0; dy < k; ++dy) {
          for (int dx = 0; dx < k; ++dx) {
            const std::size_t idx =
                base + static_cast<std::size_t>(oy * stride + dy) * xs.w + ox * stride + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        out[o] = in[best];
        (*argmax)[o] = best;
      }
    }
  }
  auto xi = x.impl();
  return Tensor<T>::make_result(os, std::move(out), {x}, [=](std::span<const T> g) {
    T* gx = xi->grad_target();
    if (!gx) return;
    for (std::size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
  });
}

template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& x) {
  const Shape xs = x.shape();
  require(xs.h >= 1 && xs.w >= 1, "global_max_pool: empty spatial extent " + xs.str());
  Shape os{xs.n, xs.c, 1, 1};
  std::vector<T> out(os.numel());
  auto argmax = std::make_shared<std::vector<std::size_t>>(os.numel());
  const T* in = x.data().data();
  for (int nc = 0; nc < xs.n * xs.c; ++nc) {
    const std::size_t base = static_cast<std::size_t>(nc) * xs.plane();
    std::size_t best = base;
    for (std::size_t p = 1; p < xs.plane(); ++p) {
      if (in[base + p] > in[best]) best = base + p;
    }
    out[nc] = in[best];
    (*argmax)[nc] = best;
  }
  auto xi = x.impl();
  return Tensor<T>::make_result(os, std::move(out), {x}, [=](std::span<const T> g) {
    T* gx = xi->grad_target();
    if (!gx) return;
    for (std::size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
  });
}

namespace {

// Source taps of one output coordinate for half-pixel x2 upsampling.
struct Tap {
  int i0;
  int i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> upsample_taps(int in) {
  std::vector<Tap> taps(2 * in);
  for (int o = 0; o < 2 * in; ++o) {
    double src = (o + 0.5) / 2.0 - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample_x2(const Tensor<T>& x) {
  const Shape xs = x.shape();
  require(xs.h >= 1 && xs.w >= 1, "bilinear_upsample_x2: empty spatial extent " + xs.str());
  Shape os{xs.n, xs.c, 2 * xs.h, 2 * xs.w};
  const auto ty = upsample_taps(xs.h);
  const auto tx = upsample_taps(xs.w);
  std::vector<T> out(os.numel());
  const T* in = x.data().data();
  for (int nc = 0; nc < xs.n * xs.c; ++nc) {
    const T* src = in + static_cast<std::size_t>(nc) * xs.plane();
    T* dst = out.data() + static_cast<std::size_t>(nc) * os.plane();
    for (int oy = 0; oy < os.h; ++oy) {
      const Tap& vy = ty[oy];
      const T* r0 = src + static_cast<std::size_t>(vy.i0) * xs.w;
      const T* r1 = src + static_cast<std::size_t>(vy.i1) * xs.w;
      for (int ox = 0; ox < os.w; ++ox) {
        const Tap& vx = tx[ox];
        const double top = (1.0 - vx.w1) * r0[vx.i0] + vx.w1 * r0[vx.i1];
        const double bot = (1.0 - vx.w1) * r1[vx.i0] + vx.w1 * r1[vx.i1];
        dst[static_cast<std::size_t>(oy) * os.w + ox] =
            static_cast<T>((1.0 - vy.w1) * top + vy.w1 * bot);
      }
    }
  }
  auto xi = x.impl();
  return Tensor<T>::make_result(os, std::move(out), {x}, [=](std::span<const T> g) {
    T* gx = xi->grad_target();
    if (!gx) return;
    for (int nc = 0; nc < xs.n * xs.c; ++nc) {
      T* dst = gx + static_cast<std::size_t>(nc) * xs.plane();
      const T* src = g.data() + static_cast<std::size_t>(nc) * os.plane();
      for (int oy = 0; oy < os.h; ++oy) {
        const Tap& vy = ty[oy];
        for (int ox = 0; ox < os.w; ++ox) {
          const Tap& vx = tx[ox];
          const double v = src[static_cast<std::size_t>(oy) * os.w + ox];
          dst[static_cast<std::size_t>(vy.i0) * xs.w + vx.i0] +=
              static_cast<T>(v * (1.0 - vy.w1) * (1.0 - vx.w1));
          dst[static_cast<std::size_t>(vy.i0) * xs.w + vx.i1] +=
              static_cast<T>(v * (1.0 - vy.w1) * vx.w1);
          dst[static_cast<std::size_t>(vy.i1) * xs.w + vx.i0] +=
              static_cast<T>(v * vy.w1 * (1.0 - vx.w1));
          dst[static_cast<std::size_t>(vy.i1) * xs.w + vx.i1] +=
              static_cast<T>(v * vy.w1 * vx.w1);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState& state, BnMode mode) {
  const Shape xs = x.shape();
  const int c = xs.c;
  require(gamma.numel() == static_cast<std::size_t>(c) && beta.numel() == static_cast<std::size_t>(c),
          fmt::format("batch_norm: gamma/beta length {}/{} != channels (axis 1) {}", gamma.numel(),
                      beta.numel(), c));
  require(state.running_mean.size() == static_cast<std::size_t>(c),
          fmt::format("batch_norm: state tracks {} channels, input has {}",
                      state.running_mean.size(), c));
  const std::size_t plane = xs.plane();
  const double count = static_cast<double>(xs.n) * plane;
  std::vector<double> mean(c), invstd(c);
  const T* in = x.data().data();
  if (mode != BnMode::kEval) {
    for (int ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const T* p = in + (static_cast<std::size_t>(n) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double m = s / count;
      double v = 0.0;
      for (int n = 0; n < xs.n; ++n) {
        const T* p = in + (static_cast<std::size_t>(n) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
      }
      v /= count;
      mean[ch] = m;
      invstd[ch] = 1.0 / std::sqrt(v + state.eps);
      if (mode != BnMode::kTrain) continue;
      state.running_mean[ch] = state.momentum * state.running_mean[ch] + (1.0 - state.momentum) * m;
      state.running_var[ch] = state.momentum * state.running_var[ch] + (1.0 - state.momentum) * v;
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[ch] = state.running_mean[ch];
      invstd[ch] = 1.0 / std::sqrt(state.running_var[ch] + state.eps);
    }
  }
  std::vector<T> out(xs.numel());
  auto xhat = std::make_shared<std::vector<T>>(xs.numel());
  const T* gm = gamma.data().data();
  const T* bt = beta.data().data();
  for (int n = 0; n < xs.n; ++n) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(n) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double h = (in[base + i] - mean[ch]) * invstd[ch];
        (*xhat)[base + i] = static_cast<T>(h);
        out[base + i] = static_cast<T>(gm[ch] * h + bt[ch]);
      }
    }
  }
  auto xi = x.impl();
  auto gi = gamma.impl();
  auto bi = beta.impl();
  return Tensor<T>::make_result(
      xs, std::move(out), {x, gamma, beta}, [=](std::span<const T> g) {
        T* gx = xi->grad_target();
        T* gg = gi->grad_target();
        T* gb = bi->grad_target();
        for (int ch = 0; ch < c; ++ch) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (int n = 0; n < xs.n; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sum_g += g[base + i];
              sum_gx += static_cast<double>(g[base + i]) * (*xhat)[base + i];
            }
          }
          if (gg) gg[ch] += static_cast<T>(sum_gx);
          if (gb) gb[ch] += static_cast<T>(sum_g);
          if (!gx) continue;
          const double scale_c = gi->data[ch] * invstd[ch];
          for (int n = 0; n < xs.n; ++n) {
            const std::size_t base = (static_cast<std::size_t>(n) * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              double d = g[base + i];
              if (mode == BnMode::kTrain) {
                d -= (sum_g + (*xhat)[base + i] * sum_gx) / count;
              }
              gx[base + i] += static_cast<T>(scale_c * d);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const T* in = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
  auto xi = x.impl();
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [=](std::span<const T> g) {
    T* gx = xi->grad_target();
    if (!gx) return;
    const T* v = xi->data.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (v[i] > T(0)) gx[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(),
          fmt::format("add: shapes {} and {} differ", a.shape().str(), b.shape().str()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto ai = a.impl();
  auto bi = b.impl();
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [=](std::span<const T> g) {
    if (T* ga = ai->grad_target()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (T* gb = bi->grad_target()) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(x.data()[i] * factor);
  auto xi = x.impl();
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [=](std::span<const T> g) {
    T* gx = xi->grad_target();
    if (!gx) return;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += static_cast<T>(g[i] * factor);
  });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  require(as.n == bs.n && as.h == bs.h && as.w == bs.w,
          fmt::format("concat_channels: shapes {} and {} differ outside axis 1", as.str(),
                      bs.str()));
  Shape os{as.n, as.c + bs.c, as.h, as.w};
  const std::size_t ablock = static_cast<std::size_t>(as.c) * as.plane();
  const std::size_t bblock = static_cast<std::size_t>(bs.c) * bs.plane();
  std::vector<T> out(os.numel());
  for (int n = 0; n < as.n; ++n) {
    std::copy_n(a.data().data() + n * ablock, ablock, out.data() + n * (ablock + bblock));
    std::copy_n(b.data().data() + n * bblock, bblock, out.data() + n * (ablock + bblock) + ablock);
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return Tensor<T>::make_result(os, std::move(out), {a, b}, [=](std::span<const T> g) {
    T* ga = ai->grad_target();
    T* gb = bi->grad_target();
    for (int n = 0; n < as.n; ++n) {
      const T* src = g.data() + n * (ablock + bblock);
      if (ga) {
        for (std::size_t i = 0; i < ablock; ++i) ga[n * ablock + i] += src[i];
      }
      if (gb) {
        for (std::size_t i = 0; i < bblock; ++i) gb[n * bblock + i] += src[ablock + i];
      }
    }
  });
}

template <typename T>
Tensor<T> sum_scalars(const std::vector<Tensor<T>>& terms) {
  double s = 0.0;
  for (const auto& t : terms) s += t.item();
  std::vector<typename Tensor<T>::Impl*> impls;
  for (const auto& t : terms) impls.push_back(t.impl());
  std::vector<Tensor<T>> inputs(terms.begin(), terms.end());
  return Tensor<T>::make_result({1, 1, 1, 1}, {static_cast<T>(s)}, inputs,
                                [impls](std::span<const T> g) {
                                  for (auto* t : impls) {
                                    if (T* gt = t->grad_target()) gt[0] += g[0];
                                  }
                                });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  double s = 0.0;
  for (T v : x.data()) s += v;
  auto xi = x.impl();
  return Tensor<T>::make_result({1, 1, 1, 1}, {static_cast<T>(s)}, {x},
                                [=](std::span<const T> g) {
                                  T* gx = xi->grad_target();
                                  if (!gx) return;
                                  for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g[0];
                                });
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  const Shape ls = logits.shape();
  require(ls.h == 1 && ls.w == 1,
          "softmax_cross_entropy: logits must have shape (rows, classes, 1, 1), got " + ls.str());
  require(labels.size() == static_cast<std::size_t>(ls.n),
          fmt::format("softmax_cross_entropy: {} labels for {} rows", labels.size(), ls.n));
  require(ls.n > 0, "softmax_cross_entropy: no rows");
  const int k = ls.c;
  auto probs = std::make_shared<std::vector<double>>(ls.numel());
  std::vector<int> lab(labels.begin(), labels.end());
  double loss = 0.0;
  const T* z = logits.data().data();
  for (int r = 0; r < ls.n; ++r) {
    if (lab[r] < 0 || lab[r] >= k) {
      throw IndexError(fmt::format("softmax_cross_entropy: label {} at row {} outside [0, {})",
                                   lab[r], r, k));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(z[r * k + j]));
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += std::exp(z[r * k + j] - mx);
    for (int j = 0; j < k; ++j) (*probs)[r * k + j] = std::exp(z[r * k + j] - mx) / s;
    loss += -(z[r * k + lab[r]] - mx - std::log(s));
  }
  const int rows = ls.n;
  auto li = logits.impl();
  return Tensor<T>::make_result(
      {1, 1, 1, 1}, {static_cast<T>(loss / rows)}, {logits}, [=](std::span<const T> g) {
        T* gl = li->grad_target();
        if (!gl) return;
        const double s = g[0] / rows;
        for (int r = 0; r < rows; ++r) {
          for (int j = 0; j < k; ++j) {
            const double onehot = (j == lab[r]) ? 1.0 : 0.0;
            gl[r * k + j] += static_cast<T>(s * ((*probs)[r * k + j] - onehot));
          }
        }
      });
}

template <typename T>
Tensor<T> l2_regression(const Tensor<T>& pred, const Tensor<T>& target,
                        std::span<const std::uint8_t> mask) {
  const Shape ps = pred.shape();
  require(ps == target.shape(), fmt::format("l2_regression: pred {} and target {} differ",
                                            ps.str(), target.shape().str()));
  require(mask.size() == static_cast<std::size_t>(ps.n),
          fmt::format("l2_regression: mask length {} != rows {}", mask.size(), ps.n));
  const std::size_t dims = static_cast<std::size_t>(ps.c) * ps.plane();
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  // Residuals are kept by value: the target is not a graph input and may be
  // gone by the time backward runs.
  std::vector<T> resid(ps.numel(), T(0));
  double loss = 0.0;
  for (int r = 0; r < ps.n; ++r) {
    if (!m[r]) continue;
    for (std::size_t d = 0; d < dims; ++d) {
      const std::size_t i = r * dims + d;
      const double e = static_cast<double>(pred.data()[i]) - target.data()[i];
      resid[i] = static_cast<T>(e);
      loss += e * e;
    }
  }
  auto pi = pred.impl();
  return Tensor<T>::make_result(
      {1, 1, 1, 1}, {static_cast<T>(loss)}, {pred},
      [pi, resid = std::move(resid)](std::span<const T> g) {
        T* gp = pi->grad_target();
        if (!gp) return;
        for (std::size_t i = 0; i < resid.size(); ++i) {
          gp[i] += static_cast<T>(2.0 * g[0] * resid[i]);
        }
      });
}

template <typename T>
Tensor<T> gather_anchors(const Tensor<T>& x, int image, std::span<const int> anchors,
                         int per_cell, int group) {
  const Shape xs = x.shape();
  require(xs.c == per_cell * group,
          fmt::format("gather_anchors: channels (axis 1) {} != {} templates x {} group", xs.c,
                      per_cell, group));
  require(image >= 0 && image < xs.n,
          fmt::format("gather_anchors: image {} outside batch of {}", image, xs.n));
  const std::size_t plane = xs.plane();
  const std::size_t total = plane * per_cell;
  auto offsets = std::make_shared<std::vector<std::size_t>>();
  offsets->reserve(anchors.size() * group);
  for (int a : anchors) {
    if (a < 0 || static_cast<std::size_t>(a) >= total) {
      throw IndexError(fmt::format("gather_anchors: anchor {} outside [0, {})", a, total));
    }
    const std::size_t cell = static_cast<std::size_t>(a) / per_cell;
    const int tmpl = a % per_cell;
    for (int gch = 0; gch < group; ++gch) {
      offsets->push_back((static_cast<std::size_t>(image) * xs.c + tmpl * group + gch) * plane +
                         cell);
    }
  }
  std::vector<T> out(offsets->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[(*offsets)[i]];
  auto xi = x.impl();
  return Tensor<T>::make_result({static_cast<int>(anchors.size()), group, 1, 1}, std::move(out),
                                {x}, [=](std::span<const T> g) {
                                  T* gx = xi->grad_target();
                                  if (!gx) return;
                                  for (std::size_t i = 0; i < g.size(); ++i) {
                                    gx[(*offsets)[i]] += g[i];
                                  }
                                });
}

template <typename T>
std::vector<double> grouped_softmax(const Tensor<T>& x, int image, int per_cell, int group,
                                    int cls) {
  const Shape xs = x.shape();
  require(xs.c == per_cell * group,
          fmt::format("grouped_softmax: channels (axis 1) {} != {} x {}", xs.c, per_cell, group));
  const std::size_t plane = xs.plane();
  std::vector<double> out(plane * per_cell);
  const T* base = x.data().data() + static_cast<std::size_t>(image) * xs.c * plane;
  std::vector<double> z(group);
  for (std::size_t cell = 0; cell < plane; ++cell) {
    for (int t = 0; t < per_cell; ++t) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < group; ++j) {
        z[j] = base[static_cast<std::size_t>(t * group + j) * plane + cell];
        mx = std::max(mx, z[j]);
      }
      double s = 0.0;
      for (int j = 0; j < group; ++j) s += std::exp(z[j] - mx);
      out[cell * per_cell + t] = std::exp(z[cls] - mx) / s;
    }
  }
  return out;
}

#define ZIPNET_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);   \
  template Tensor<T> max_pool2d(const Tensor<T>&, int, int);                                   \
  template Tensor<T> global_max_pool(const Tensor<T>&);                                        \
  template Tensor<T> bilinear_upsample_x2(const Tensor<T>&);                                   \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                BatchNormState&, BnMode);                                      \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, double);                                          \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> sum_scalars(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> sum_all(const Tensor<T>&);                                                \
  template Tensor<T> softmax_cross_entropy(const Tensor<T>&, std::span<const int>);            \
  template Tensor<T> l2_regression(const Tensor<T>&, const Tensor<T>&,                         \
                                   std::span<const std::uint8_t>);                             \
  template Tensor<T> gather_anchors(const Tensor<T>&, int, std::span<const int>, int, int);    \
  template std::vector<double> grouped_softmax(const Tensor<T>&, int, int, int, int);

ZIPNET_INSTANTIATE_OPS(float)
ZIPNET_INSTANTIATE_OPS(double)

}  // namespace zipnet
