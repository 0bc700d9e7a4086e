/* Copyright 2026 The DPC Search Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef DPC_OPS_HPP_
#define DPC_OPS_HPP_

// Tensor primitives used by Dense Prediction Cells and the backbone. Each
// backward closure computes the exact vector-Jacobian product of its forward
// map and accumulates into parent gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dpc/errors.hpp"
#include "dpc/search_space.hpp"
#include "dpc/tensor.hpp"

namespace dpc {

template <class T>
struct ConvParams {
  BasicTensor<T> weight;
  BasicTensor<T> bias;  // may be undefined (depthwise stage)
};

// Per-pixel integer class map of shape (n, h, w).
struct LabelMap {
  int n = 1;
  int h = 1;
  int w = 1;
  std::vector<std::int32_t> values;

  std::size_t size() const { return static_cast<std::size_t>(n) * h * w; }
};

inline constexpr std::int32_t kIgnoreLabel = 255;

namespace detail {

inline std::string shapes(const Shape& a, const Shape& b) {
  return a.str() + " vs " + b.str();
}

}  // namespace detail

template <class T>
BasicTensor<T> conv1x1(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                       const BasicTensor<T>& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != 1 || ws.w != 1)
    throw ShapeError("conv1x1: weight " + ws.str() + " incompatible with input " +
                     xs.str());
  const int co = ws.n, ci = xs.c;
  if (bias.defined() && bias.numel() != static_cast<std::size_t>(co))
    throw ShapeError("conv1x1: bias " + bias.shape().str() +
                     " does not match weight " + ws.str());
  const std::size_t plane = xs.plane();
  BasicTensor<T> out = make_output<T>({xs.n, co, xs.h, xs.w}, {&x, &weight, &bias});
  const T* xd = x.data().data();
  const T* wd = weight.data().data();
  T* od = out.data().data();
  for (int n = 0; n < xs.n; ++n) {
    for (int o = 0; o < co; ++o) {
      T* op = od + (static_cast<std::size_t>(n) * co + o) * plane;
      const T b = bias.defined() ? bias.data()[o] : T(0);
      std::fill(op, op + plane, b);
      for (int c = 0; c < ci; ++c) {
        const T wv = wd[o * ci + c];
        const T* xp = xd + (static_cast<std::size_t>(n) * ci + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) op[p] += wv * xp[p];
      }
    }
  }
  if (out.requires_grad()) {
    auto xn = x.node(), wn = weight.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    out.node()->backward = [xn, wn, bn, co, ci, plane, xs](Node<T>& self) {
      const T* dy = self.grad.data();
      if (xn->requires_grad) {
        T* dx = xn->ensure_grad().data();
        const T* wd = wn->data.data();
        for (int n = 0; n < xs.n; ++n)
          for (int c = 0; c < ci; ++c) {
            T* dxp = dx + (static_cast<std::size_t>(n) * ci + c) * plane;
            for (int o = 0; o < co; ++o) {
              const T wv = wd[o * ci + c];
              const T* dyp = dy + (static_cast<std::size_t>(n) * co + o) * plane;
              for (std::size_t p = 0; p < plane; ++p) dxp[p] += wv * dyp[p];
            }
          }
      }
      if (wn->requires_grad) {
        T* dw = wn->ensure_grad().data();
        const T* xd = xn->data.data();
        for (int n = 0; n < xs.n; ++n)
          for (int o = 0; o < co; ++o) {
            const T* dyp = dy + (static_cast<std::size_t>(n) * co + o) * plane;
            for (int c = 0; c < ci; ++c) {
              const T* xp = xd + (static_cast<std::size_t>(n) * ci + c) * plane;
              T acc = T(0);
              for (std::size_t p = 0; p < plane; ++p) acc += dyp[p] * xp[p];
              dw[o * ci + c] += acc;
            }
          }
      }
      if (bn && bn->requires_grad) {
        T* db = bn->ensure_grad().data();
        for (int n = 0; n < xs.n; ++n)
          for (int o = 0; o < co; ++o) {
            const T* dyp = dy + (static_cast<std::size_t>(n) * co + o) * plane;
            T acc = T(0);
            for (std::size_t p = 0; p < plane; ++p) acc += dyp[p];
            db[o] += acc;
          }
      }
    };
  }
  return out;
}

template <class T>
BasicTensor<T> conv1x1(const BasicTensor<T>& x, const ConvParams<T>& p) {
  return conv1x1(x, p.weight, p.bias);
}

// Same-size 3x3 depthwise correlation with taps spaced (rate_h, rate_w) apart
// and zero padding. Weight shape (c, 1, 3, 3), no bias.
template <class T>
BasicTensor<T> depthwise_atrous3x3(const BasicTensor<T>& x,
                                   const BasicTensor<T>& weight, int rate_h,
                                   int rate_w) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.n != xs.c || ws.c != 1 || ws.h != 3 || ws.w != 3)
    throw ShapeError("depthwise_atrous3x3: weight " + ws.str() +
                     " incompatible with input " + xs.str());
  if (rate_h < 1 || rate_w < 1)
    throw ArgumentError("depthwise_atrous3x3: rates must be >= 1");
  const int H = xs.h, W = xs.w;
  const std::size_t plane = xs.plane();
  BasicTensor<T> out = make_output<T>(xs, {&x, &weight});
  const T* xd = x.data().data();
  const T* wd = weight.data().data();
  T* od = out.data().data();

  // Visits every in-bounds (output, input) pair of tap (u, v) for one plane.
  auto for_tap = [H, W, rate_h, rate_w](int u, int v, auto&& fn) {
    const int dy = u * rate_h, dx = v * rate_w;
    const int i0 = std::max(0, -dy), i1 = std::min(H, H - dy);
    const int j0 = std::max(0, -dx), j1 = std::min(W, W - dx);
    for (int i = i0; i < i1; ++i) {
      const int row = i * W, src = (i + dy) * W + dx;
      fn(row, src, j0, j1);
    }
  };

  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * xs.c + c) * plane;
      const T* xp = xd + base;
      T* op = od + base;
      for (int u = -1; u <= 1; ++u)
        for (int v = -1; v <= 1; ++v) {
          const T wv = wd[c * 9 + (u + 1) * 3 + (v + 1)];
          for_tap(u, v, [&](int row, int src, int j0, int j1) {
            for (int j = j0; j < j1; ++j) op[row + j] += wv * xp[src + j];
          });
        }
    }
  if (out.requires_grad()) {
    auto xn = x.node(), wn = weight.node();
    out.node()->backward = [xn, wn, xs, plane, for_tap](Node<T>& self) {
      const T* dy = self.grad.data();
      const T* xd = xn->data.data();
      const T* wd = wn->data.data();
      T* dx = xn->requires_grad ? xn->ensure_grad().data() : nullptr;
      T* dw = wn->requires_grad ? wn->ensure_grad().data() : nullptr;
      for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c) {
          const std::size_t base =
              (static_cast<std::size_t>(n) * xs.c + c) * plane;
          for (int u = -1; u <= 1; ++u)
            for (int v = -1; v <= 1; ++v) {
              const int k = c * 9 + (u + 1) * 3 + (v + 1);
              const T wv = wd[k];
              T acc = T(0);
              for_tap(u, v, [&](int row, int src, int j0, int j1) {
                const T* g = dy + base + row;
                if (dx) {
                  T* d = dx + base + src;
                  for (int j = j0; j < j1; ++j) d[j] += wv * g[j];
                }
                if (dw) {
                  const T* xp = xd + base + src;
                  for (int j = j0; j < j1; ++j) acc += g[j] * xp[j];
                }
              });
              if (dw) dw[k] += acc;
            }
        }
    };
  }
  return out;
}

// 3x3 atrous separable convolution: depthwise atrous stage then a pointwise
// 1x1 conv. The bias lives on the pointwise stage only.
template <class T>
BasicTensor<T> atrous_sep_conv3x3(const BasicTensor<T>& x, int rate_h,
                                  int rate_w, const ConvParams<T>& depthwise,
                                  const ConvParams<T>& pointwise) {
  if (!is_legal_rate(rate_h) || !is_legal_rate(rate_w))
    throw ArgumentError("atrous_sep_conv3x3: illegal rate " +
                        std::to_string(rate_h) + "x" + std::to_string(rate_w));
  return conv1x1(depthwise_atrous3x3(x, depthwise.weight, rate_h, rate_w),
                 pointwise);
}

// Dense 3x3 convolution with padding 1 and the given stride. Weight shape
// (c_out, c_in, 3, 3). Used by the backbone only.
template <class T>
BasicTensor<T> conv3x3(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                       const BasicTensor<T>& bias, int stride) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != 3 || ws.w != 3)
    throw ShapeError("conv3x3: weight " + ws.str() + " incompatible with input " +
                     xs.str());
  if (stride < 1) throw ArgumentError("conv3x3: stride must be >= 1");
  const int co = ws.n, ci = xs.c, H = xs.h, W = xs.w;
  const int oh = (H - 1) / stride + 1, ow = (W - 1) / stride + 1;
  const std::size_t in_plane = xs.plane();
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  BasicTensor<T> out = make_output<T>({xs.n, co, oh, ow}, {&x, &weight, &bias});

  // Valid output range [lo, hi) for kernel offset k along an axis.
  auto range = [stride](int k, int in, int outn, int& lo, int& hi) {
    lo = 0;
    while (lo < outn && lo * stride + k - 1 < 0) ++lo;
    hi = outn;
    while (hi > lo && (hi - 1) * stride + k - 1 >= in) --hi;
  };

  const T* xd = x.data().data();
  const T* wd = weight.data().data();
  T* od = out.data().data();
  for (int n = 0; n < xs.n; ++n)
    for (int o = 0; o < co; ++o) {
      T* op = od + (static_cast<std::size_t>(n) * co + o) * out_plane;
      std::fill(op, op + out_plane, bias.defined() ? bias.data()[o] : T(0));
      for (int c = 0; c < ci; ++c) {
        const T* xp = xd + (static_cast<std::size_t>(n) * ci + c) * in_plane;
        for (int ky = 0; ky < 3; ++ky) {
          int y0, y1;
          range(ky, H, oh, y0, y1);
          for (int kx = 0; kx < 3; ++kx) {
            int x0, x1;
            range(kx, W, ow, x0, x1);
            const T wv = wd[((o * ci + c) * 3 + ky) * 3 + kx];
            for (int oy = y0; oy < y1; ++oy) {
              const T* row = xp + (oy * stride + ky - 1) * W + kx - 1;
              T* orow = op + oy * ow;
              for (int ox = x0; ox < x1; ++ox) orow[ox] += wv * row[ox * stride];
            }
          }
        }
      }
    }
  if (out.requires_grad()) {
    auto xn = x.node(), wn = weight.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    out.node()->backward = [=](Node<T>& self) {
      const T* dy = self.grad.data();
      const T* xd = xn->data.data();
      const T* wd = wn->data.data();
      T* dx = xn->requires_grad ? xn->ensure_grad().data() : nullptr;
      T* dw = wn->requires_grad ? wn->ensure_grad().data() : nullptr;
      for (int n = 0; n < xs.n; ++n)
        for (int o = 0; o < co; ++o) {
          const T* gp = dy + (static_cast<std::size_t>(n) * co + o) * out_plane;
          if (bn && bn->requires_grad) {
            T acc = T(0);
            for (std::size_t p = 0; p < out_plane; ++p) acc += gp[p];
            bn->ensure_grad()[o] += acc;
          }
          for (int c = 0; c < ci; ++c) {
            const std::size_t ib =
                (static_cast<std::size_t>(n) * ci + c) * in_plane;
            for (int ky = 0; ky < 3; ++ky) {
              int y0, y1;
              range(ky, H, oh, y0, y1);
              for (int kx = 0; kx < 3; ++kx) {
                int x0, x1;
                range(kx, W, ow, x0, x1);
                const int k = ((o * ci + c) * 3 + ky) * 3 + kx;
                const T wv = wd[k];
                T acc = T(0);
                for (int oy = y0; oy < y1; ++oy) {
                  const std::size_t roff = ib + (oy * stride + ky - 1) * W + kx - 1;
                  const T* grow = gp + oy * ow;
                  if (dx) {
                    T* drow = dx + roff;
                    for (int ox = x0; ox < x1; ++ox)
                      drow[ox * stride] += wv * grow[ox];
                  }
                  if (dw) {
                    const T* xrow = xd + roff;
                    for (int ox = x0; ox < x1; ++ox)
                      acc += grow[ox] * xrow[ox * stride];
                  }
                }
                if (dw) dw[k] += acc;
              }
            }
          }
        }
    };
  }
  return out;
}

// Cell boundaries along an axis of length `len` split into `cells`:
// [floor(k*len/cells), floor((k+1)*len/cells)).
inline std::vector<int> grid_bounds(int len, int cells) {
  std::vector<int> b(cells + 1);
  for (int k = 0; k <= cells; ++k)
    b[k] = static_cast<int>(static_cast<long long>(k) * len / cells);
  return b;
}

// Average over each cell of a grid_h x grid_w partition -> (n, c, gh, gw).
template <class T>
BasicTensor<T> grid_avg_pool(const BasicTensor<T>& x, int grid_h, int grid_w) {
  const Shape xs = x.shape();
  if (grid_h < 1 || grid_w < 1 || grid_h > xs.h || grid_w > xs.w)
    throw ArgumentError("grid_avg_pool: grid " + std::to_string(grid_h) + "x" +
                        std::to_string(grid_w) + " does not fit input " +
                        xs.str());
  const auto bh = grid_bounds(xs.h, grid_h), bw = grid_bounds(xs.w, grid_w);
  BasicTensor<T> out = make_output<T>({xs.n, xs.c, grid_h, grid_w}, {&x});
  const std::size_t plane = xs.plane();
  const T* xd = x.data().data();
  T* od = out.data().data();
  for (int m = 0; m < xs.n * xs.c; ++m) {
    const T* xp = xd + m * plane;
    T* op = od + static_cast<std::size_t>(m) * grid_h * grid_w;
    for (int gy = 0; gy < grid_h; ++gy)
      for (int gx = 0; gx < grid_w; ++gx) {
        T acc = T(0);
        for (int i = bh[gy]; i < bh[gy + 1]; ++i)
          for (int j = bw[gx]; j < bw[gx + 1]; ++j) acc += xp[i * xs.w + j];
        const int count = (bh[gy + 1] - bh[gy]) * (bw[gx + 1] - bw[gx]);
        op[gy * grid_w + gx] = acc / T(count);
      }
  }
  if (out.requires_grad()) {
    auto xn = x.node();
    out.node()->backward = [xn, xs, bh, bw, grid_h, grid_w, plane](Node<T>& self) {
      T* dx = xn->ensure_grad().data();
      const T* dy = self.grad.data();
      for (int m = 0; m < xs.n * xs.c; ++m)
        for (int gy = 0; gy < grid_h; ++gy)
          for (int gx = 0; gx < grid_w; ++gx) {
            const int count = (bh[gy + 1] - bh[gy]) * (bw[gx + 1] - bw[gx]);
            const T g = dy[static_cast<std::size_t>(m) * grid_h * grid_w +
                           gy * grid_w + gx] /
                        T(count);
            for (int i = bh[gy]; i < bh[gy + 1]; ++i)
              for (int j = bw[gx]; j < bw[gx + 1]; ++j)
                dx[m * plane + i * xs.w + j] += g;
          }
    };
  }
  return out;
}

namespace detail {

// Align-corners sampling along one axis: output index i reads source
// coordinate i*(in-1)/(out-1), split into a lower index and weight.
struct AxisSample {
  int lo;
  int hi;
  double frac;
};

inline std::vector<AxisSample> align_corners_axis(int in, int out) {
  std::vector<AxisSample> s(out);
  for (int i = 0; i < out; ++i) {
    const double src =
        out == 1 ? 0.0 : static_cast<double>(i) * (in - 1) / (out - 1);
    int lo = std::min(static_cast<int>(std::floor(src)), in - 1);
    const int hi = std::min(lo + 1, in - 1);
    s[i] = {lo, hi, src - lo};
  }
  return s;
}

}  // namespace detail

template <class T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& x, int out_h, int out_w) {
  const Shape xs = x.shape();
  if (out_h < 1 || out_w < 1)
    throw ShapeError("bilinear_resize: output dims must be >= 1");
  const auto sy = detail::align_corners_axis(xs.h, out_h);
  const auto sx = detail::align_corners_axis(xs.w, out_w);
  BasicTensor<T> out = make_output<T>({xs.n, xs.c, out_h, out_w}, {&x});
  const std::size_t in_plane = xs.plane();
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  const T* xd = x.data().data();
  T* od = out.data().data();
  for (int m = 0; m < xs.n * xs.c; ++m) {
    const T* xp = xd + m * in_plane;
    T* op = od + m * out_plane;
    for (int i = 0; i < out_h; ++i) {
      const T fy = T(sy[i].frac);
      const T* r0 = xp + sy[i].lo * xs.w;
      const T* r1 = xp + sy[i].hi * xs.w;
      for (int j = 0; j < out_w; ++j) {
        const T fx = T(sx[j].frac);
        const T top = r0[sx[j].lo] + fx * (r0[sx[j].hi] - r0[sx[j].lo]);
        const T bot = r1[sx[j].lo] + fx * (r1[sx[j].hi] - r1[sx[j].lo]);
        op[i * out_w + j] = top + fy * (bot - top);
      }
    }
  }
  if (out.requires_grad()) {
    auto xn = x.node();
    out.node()->backward = [xn, xs, sy, sx, out_h, out_w, in_plane,
                            out_plane](Node<T>& self) {
      T* dx = xn->ensure_grad().data();
      const T* dy = self.grad.data();
      for (int m = 0; m < xs.n * xs.c; ++m) {
        T* dp = dx + m * in_plane;
        const T* gp = dy + m * out_plane;
        for (int i = 0; i < out_h; ++i) {
          const T fy = T(sy[i].frac);
          T* r0 = dp + sy[i].lo * xs.w;
          T* r1 = dp + sy[i].hi * xs.w;
          for (int j = 0; j < out_w; ++j) {
            const T fx = T(sx[j].frac);
            const T g = gp[i * out_w + j];
            const T gt = g * (T(1) - fy), gb = g * fy;
            r0[sx[j].lo] += gt * (T(1) - fx);
            r0[sx[j].hi] += gt * fx;
            r1[sx[j].lo] += gb * (T(1) - fx);
            r1[sx[j].hi] += gb * fx;
          }
        }
      }
    };
  }
  return out;
}

// Grid average pooling, 1x1 projection, then bilinear resize back to the
// input's spatial size. Grid 1x1 is image-level pooling followed by a tile.
template <class T>
BasicTensor<T> avg_pyramid_pool(const BasicTensor<T>& x, int grid_h, int grid_w,
                                const ConvParams<T>& proj) {
  if (!is_legal_grid(grid_h) || !is_legal_grid(grid_w))
    throw ArgumentError("avg_pyramid_pool: illegal grid " +
                        std::to_string(grid_h) + "x" + std::to_string(grid_w));
  const Shape xs = x.shape();
  return bilinear_resize(conv1x1(grid_avg_pool(x, grid_h, grid_w), proj), xs.h,
                         xs.w);
}

template <class T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input list");
  const Shape s0 = xs.front().shape();
  int total = 0;
  for (const auto& t : xs) {
    const Shape s = t.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
      throw ShapeError("concat_channels: spatial mismatch " +
                       detail::shapes(s0, s));
    total += s.c;
  }
  BasicTensor<T> out = make_output<T>({s0.n, total, s0.h, s0.w}, xs);
  const std::size_t plane = s0.plane();
  T* od = out.data().data();
  for (int n = 0; n < s0.n; ++n) {
    std::size_t off = static_cast<std::size_t>(n) * total * plane;
    for (const auto& t : xs) {
      const std::size_t len = static_cast<std::size_t>(t.shape().c) * plane;
      const T* src = t.data().data() + n * len;
      std::copy(src, src + len, od + off);
      off += len;
    }
  }
  if (out.requires_grad()) {
    std::vector<std::shared_ptr<Node<T>>> nodes;
    for (const auto& t : xs) nodes.push_back(t.node());
    out.node()->backward = [nodes, s0, total, plane](Node<T>& self) {
      const T* dy = self.grad.data();
      for (int n = 0; n < s0.n; ++n) {
        std::size_t off = static_cast<std::size_t>(n) * total * plane;
        for (const auto& node : nodes) {
          const std::size_t len = static_cast<std::size_t>(node->shape.c) * plane;
          if (node->requires_grad) {
            T* d = node->ensure_grad().data() + n * len;
            for (std::size_t i = 0; i < len; ++i) d[i] += dy[off + i];
          }
          off += len;
        }
      }
    };
  }
  return out;
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> out = make_output<T>(x.shape(), {&x});
  const T* xd = x.data().data();
  T* od = out.data().data();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) od[i] = xd[i] > T(0) ? xd[i] : T(0);
  if (out.requires_grad()) {
    auto xn = x.node();
    out.node()->backward = [xn, n](Node<T>& self) {
      T* dx = xn->ensure_grad().data();
      const T* xd = xn->data.data();
      const T* dy = self.grad.data();
      for (std::size_t i = 0; i < n; ++i)
        if (xd[i] > T(0)) dx[i] += dy[i];
    };
  }
  return out;
}

// Mean softmax cross-entropy over pixels whose label is not `ignore_label`.
// Returns a (1,1,1,1) tensor; zero when every pixel is ignored.
template <class T>
BasicTensor<T> softmax_xent_loss(const BasicTensor<T>& logits,
                                 const LabelMap& labels,
                                 std::int32_t ignore_label = kIgnoreLabel) {
  const Shape s = logits.shape();
  if (labels.n != s.n || labels.h != s.h || labels.w != s.w ||
      labels.values.size() != labels.size())
    throw ShapeError("softmax_xent_loss: labels (" + std::to_string(labels.n) +
                     "," + std::to_string(labels.h) + "," +
                     std::to_string(labels.w) + ") do not match logits " +
                     s.str());
  const int k = s.c;
  const std::size_t plane = s.plane();
  std::size_t count = 0;
  for (std::int32_t l : labels.values) {
    if (l == ignore_label) continue;
    if (l < 0 || l >= k)
      throw DataError("softmax_xent_loss: label " + std::to_string(l) +
                      " outside [0, " + std::to_string(k) + ")");
    ++count;
  }
  BasicTensor<T> out = make_output<T>({1, 1, 1, 1}, {&logits});
  // Softmax probabilities, kept for the backward pass.
  std::vector<T> prob(logits.numel(), T(0));
  const T* xd = logits.data().data();
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    const T* base = xd + static_cast<std::size_t>(n) * k * plane;
    T* pb = prob.data() + static_cast<std::size_t>(n) * k * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const std::int32_t l = labels.values[n * plane + p];
      if (l == ignore_label) continue;
      T mx = base[p];
      for (int c = 1; c < k; ++c) mx = std::max(mx, base[c * plane + p]);
      T sum = T(0);
      for (int c = 0; c < k; ++c) {
        const T e = std::exp(base[c * plane + p] - mx);
        pb[c * plane + p] = e;
        sum += e;
      }
      for (int c = 0; c < k; ++c) pb[c * plane + p] /= sum;
      total += static_cast<double>(mx + std::log(sum) - base[l * plane + p]);
    }
  }
  out.data()[0] = count ? static_cast<T>(total / static_cast<double>(count)) : T(0);
  if (out.requires_grad()) {
    auto xn = logits.node();
    out.node()->backward = [xn, prob = std::move(prob), labels, s, k, plane,
                            count, ignore_label](Node<T>& self) {
      T* dx = xn->ensure_grad().data();
      const T scale =
          count ? self.grad[0] / static_cast<T>(count) : T(0);
      for (int n = 0; n < s.n; ++n) {
        const std::size_t nb = static_cast<std::size_t>(n) * k * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          const std::int32_t l = labels.values[n * plane + p];
          if (l == ignore_label) continue;
          for (int c = 0; c < k; ++c) {
            const T target = c == l ? T(1) : T(0);
            dx[nb + c * plane + p] += scale * (prob[nb + c * plane + p] - target);
          }
        }
      }
    };
  }
  return out;
}

}  // namespace dpc

#endif  // DPC_OPS_HPP_
