/* Copyright 2026 The lungsev Authors. All Rights Reserved.

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

#pragma once

// Differentiable building blocks. Each forward has a matching backward that
// takes the upstream gradient and returns exact input/parameter gradients.
// Accumulation order is fixed, so results are bit-stable run to run.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "lungsev/error.hpp"
#include "lungsev/toynet/tensor.hpp"

namespace lungsev::toynet {

using Triple = std::array<int, 3>;

struct ConvGeometry {
  Triple kernel{3, 3, 3};
  Triple stride{1, 1, 1};
  Triple padding{1, 1, 1};

  /// Stride-1 geometry that preserves spatial dims for an odd kernel.
  static ConvGeometry same(Triple kernel) { return {kernel, {1, 1, 1}, {kernel[0] / 2, kernel[1] / 2, kernel[2] / 2}}; }
  /// Non-overlapping kernel == stride, no padding.
  static ConvGeometry strided(Triple stride) { return {stride, stride, {0, 0, 0}}; }
};

namespace detail {

/// Output indices o in [0, n_out) with 0 <= o*s - p + k < n_in.
struct Range {
  std::int64_t lo;
  std::int64_t hi;
};

inline Range tap_range(int k, int s, int p, std::int64_t n_in, std::int64_t n_out) {
  // o*s >= p - k  and  o*s <= n_in - 1 + p - k
  const std::int64_t a = p - k;
  const std::int64_t b = n_in - 1 + p - k;
  std::int64_t lo = a <= 0 ? 0 : (a + s - 1) / s;
  std::int64_t hi = b < 0 ? -1 : b / s;
  lo = std::max<std::int64_t>(lo, 0);
  hi = std::min<std::int64_t>(hi, n_out - 1);
  return {lo, hi + 1};
}

inline std::int64_t conv_out(std::int64_t n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; }

inline void check_weight(const Tensor5& w, std::int64_t c_in_expected, const ConvGeometry& g, const char* op) {
  const auto& ws = w.shape();
  if (ws.c != c_in_expected || ws.z != g.kernel[0] || ws.y != g.kernel[1] || ws.x != g.kernel[2]) {
    throw InputError(std::string(op) + ": weight shape " + ws.str() + " incompatible with input channels " +
                     std::to_string(c_in_expected) + " and kernel");
  }
}

}  // namespace detail

// Convolution -----------------------------------------------------------------

/// Cross-correlation. Weight (Cout, Cin, kz, ky, kx); bias (1, Cout, 1, 1, 1).
inline Tensor5 conv3d_forward(const Tensor5& x, const Tensor5& w, const Tensor5* bias, const ConvGeometry& g) {
  const auto& xs = x.shape();
  detail::check_weight(w, xs.c, g, "conv3d");
  const std::int64_t cout = w.shape().n;
  if (bias != nullptr && bias->shape().count() != cout) throw InputError("conv3d: bias size mismatch");
  const Shape5 ys{xs.n, cout, detail::conv_out(xs.z, g.kernel[0], g.stride[0], g.padding[0]),
                  detail::conv_out(xs.y, g.kernel[1], g.stride[1], g.padding[1]),
                  detail::conv_out(xs.x, g.kernel[2], g.stride[2], g.padding[2])};
  if (ys.z < 1 || ys.y < 1 || ys.x < 1) throw InputError("conv3d: input " + xs.str() + " smaller than kernel");
  Tensor5 y(ys);
  const auto [sz, sy, sx] = g.stride;
  const auto [pz, py, px] = g.padding;
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t co = 0; co < cout; ++co) {
      double* out = &y.at(n, co, 0, 0, 0);
      if (bias != nullptr) std::fill(out, out + ys.spatial(), (*bias)[static_cast<std::size_t>(co)]);
      for (std::int64_t ci = 0; ci < xs.c; ++ci) {
        const double* in = &x.at(n, ci, 0, 0, 0);
        for (int kz = 0; kz < g.kernel[0]; ++kz) {
          const auto rz = detail::tap_range(kz, sz, pz, xs.z, ys.z);
          for (int ky = 0; ky < g.kernel[1]; ++ky) {
            const auto ry = detail::tap_range(ky, sy, py, xs.y, ys.y);
            for (int kx = 0; kx < g.kernel[2]; ++kx) {
              const auto rx = detail::tap_range(kx, sx, px, xs.x, ys.x);
              const double wv = w.at(co, ci, kz, ky, kx);
              for (std::int64_t oz = rz.lo; oz < rz.hi; ++oz) {
                const std::int64_t iz = oz * sz - pz + kz;
                for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
                  const std::int64_t iy = oy * sy - py + ky;
                  double* orow = out + (oz * ys.y + oy) * ys.x;
                  const std::int64_t ibase = (iz * xs.y + iy) * xs.x - px + kx;
                  for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += wv * in[ibase + ox * sx];
                }
              }
            }
          }
        }
      }
    }
  }
  debug_check_finite(y, "conv3d_forward");
  return y;
}

struct ConvGrads {
  Tensor5 dx;
  Tensor5 dw;
  Tensor5 db;
};

inline ConvGrads conv3d_backward(const Tensor5& x, const Tensor5& w, const Tensor5& dy, const ConvGeometry& g) {
  const auto& xs = x.shape();
  const auto& ys = dy.shape();
  detail::check_weight(w, xs.c, g, "conv3d_backward");
  if (ys.n != xs.n || ys.c != w.shape().n || ys.z != detail::conv_out(xs.z, g.kernel[0], g.stride[0], g.padding[0]) ||
      ys.y != detail::conv_out(xs.y, g.kernel[1], g.stride[1], g.padding[1]) ||
      ys.x != detail::conv_out(xs.x, g.kernel[2], g.stride[2], g.padding[2])) {
    throw InputError("conv3d_backward: gradient shape " + ys.str());
  }
  ConvGrads r{Tensor5(xs), Tensor5(w.shape()), Tensor5(Shape5{1, ys.c, 1, 1, 1})};
  const auto [sz, sy, sx] = g.stride;
  const auto [pz, py, px] = g.padding;
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t co = 0; co < ys.c; ++co) {
      const double* go = &dy.at(n, co, 0, 0, 0);
      double bsum = 0.0;
      for (std::int64_t i = 0; i < ys.spatial(); ++i) bsum += go[i];
      r.db[static_cast<std::size_t>(co)] += bsum;
      for (std::int64_t ci = 0; ci < xs.c; ++ci) {
        const double* in = &x.at(n, ci, 0, 0, 0);
        double* gin = &r.dx.at(n, ci, 0, 0, 0);
        for (int kz = 0; kz < g.kernel[0]; ++kz) {
          const auto rz = detail::tap_range(kz, sz, pz, xs.z, ys.z);
          for (int ky = 0; ky < g.kernel[1]; ++ky) {
            const auto ry = detail::tap_range(ky, sy, py, xs.y, ys.y);
            for (int kx = 0; kx < g.kernel[2]; ++kx) {
              const auto rx = detail::tap_range(kx, sx, px, xs.x, ys.x);
              const double wv = w.at(co, ci, kz, ky, kx);
              double wsum = 0.0;
              for (std::int64_t oz = rz.lo; oz < rz.hi; ++oz) {
                const std::int64_t iz = oz * sz - pz + kz;
                for (std::int64_t oy = ry.lo; oy < ry.hi; ++oy) {
                  const std::int64_t iy = oy * sy - py + ky;
                  const double* grow = go + (oz * ys.y + oy) * ys.x;
                  const std::int64_t base = (iz * xs.y + iy) * xs.x - px + kx;
                  for (std::int64_t ox = rx.lo; ox < rx.hi; ++ox) {
                    wsum += in[base + ox * sx] * grow[ox];
                    gin[base + ox * sx] += wv * grow[ox];
                  }
                }
              }
              r.dw.at(co, ci, kz, ky, kx) += wsum;
            }
          }
        }
      }
    }
  }
  return r;
}

// Transposed convolution --------------------------------------------------------

/// Adjoint of conv3d with respect to its input. Weight (Cin, Cout, kz, ky, kx),
/// i.e. the same tensor the forward conv it inverts would use. Output extent
/// (n-1)*s - 2p + k; with kernel == stride and no padding that is n*s.
inline Tensor5 transpose_conv3d_forward(const Tensor5& x, const Tensor5& w, const Tensor5* bias,
                                        const ConvGeometry& g) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (ws.n != xs.c || ws.z != g.kernel[0] || ws.y != g.kernel[1] || ws.x != g.kernel[2]) {
    throw InputError("transpose_conv3d: weight shape " + ws.str() + " incompatible with input " + xs.str());
  }
  const std::int64_t cout = ws.c;
  if (bias != nullptr && bias->shape().count() != cout) throw InputError("transpose_conv3d: bias size mismatch");
  const auto [sz, sy, sx] = g.stride;
  const auto [pz, py, px] = g.padding;
  const Shape5 ys{xs.n, cout, (xs.z - 1) * sz - 2 * pz + g.kernel[0], (xs.y - 1) * sy - 2 * py + g.kernel[1],
                  (xs.x - 1) * sx - 2 * px + g.kernel[2]};
  if (ys.z < 1 || ys.y < 1 || ys.x < 1) throw InputError("transpose_conv3d: empty output");
  Tensor5 y(ys);
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t co = 0; co < cout; ++co) {
      double* out = &y.at(n, co, 0, 0, 0);
      if (bias != nullptr) std::fill(out, out + ys.spatial(), (*bias)[static_cast<std::size_t>(co)]);
      for (std::int64_t ci = 0; ci < xs.c; ++ci) {
        const double* in = &x.at(n, ci, 0, 0, 0);
        for (int kz = 0; kz < g.kernel[0]; ++kz) {
          // input index i contributes to output i*s - p + k
          const auto rz = detail::tap_range(kz, sz, pz, ys.z, xs.z);
          for (int ky = 0; ky < g.kernel[1]; ++ky) {
            const auto ry = detail::tap_range(ky, sy, py, ys.y, xs.y);
            for (int kx = 0; kx < g.kernel[2]; ++kx) {
              const auto rx = detail::tap_range(kx, sx, px, ys.x, xs.x);
              const double wv = w.at(ci, co, kz, ky, kx);
              for (std::int64_t iz = rz.lo; iz < rz.hi; ++iz) {
                const std::int64_t oz = iz * sz - pz + kz;
                for (std::int64_t iy = ry.lo; iy < ry.hi; ++iy) {
                  const std::int64_t oy = iy * sy - py + ky;
                  const double* irow = in + (iz * xs.y + iy) * xs.x;
                  const std::int64_t obase = (oz * ys.y + oy) * ys.x - px + kx;
                  for (std::int64_t ix = rx.lo; ix < rx.hi; ++ix) out[obase + ix * sx] += wv * irow[ix];
                }
              }
            }
          }
        }
      }
    }
  }
  debug_check_finite(y, "transpose_conv3d_forward");
  return y;
}

inline ConvGrads transpose_conv3d_backward(const Tensor5& x, const Tensor5& w, const Tensor5& dy,
                                           const ConvGeometry& g) {
  const auto& xs = x.shape();
  const auto& ys = dy.shape();
  const auto& ws = w.shape();
  const auto up = [](std::int64_t n, int k, int st, int p) { return (n - 1) * st - 2 * p + k; };
  if (ws.n != xs.c || ys.c != ws.c || ys.n != xs.n || ys.z != up(xs.z, g.kernel[0], g.stride[0], g.padding[0]) ||
      ys.y != up(xs.y, g.kernel[1], g.stride[1], g.padding[1]) || ys.x != up(xs.x, g.kernel[2], g.stride[2], g.padding[2])) {
    throw InputError("transpose_conv3d_backward: shape mismatch");
  }
  ConvGrads r{Tensor5(xs), Tensor5(ws), Tensor5(Shape5{1, ys.c, 1, 1, 1})};
  const auto [sz, sy, sx] = g.stride;
  const auto [pz, py, px] = g.padding;
  for (std::int64_t n = 0; n < xs.n; ++n) {
    for (std::int64_t co = 0; co < ys.c; ++co) {
      const double* go = &dy.at(n, co, 0, 0, 0);
      double bsum = 0.0;
      for (std::int64_t i = 0; i < ys.spatial(); ++i) bsum += go[i];
      r.db[static_cast<std::size_t>(co)] += bsum;
    }
    for (std::int64_t ci = 0; ci < xs.c; ++ci) {
      const double* in = &x.at(n, ci, 0, 0, 0);
      double* gin = &r.dx.at(n, ci, 0, 0, 0);
      for (std::int64_t co = 0; co < ys.c; ++co) {
        const double* go = &dy.at(n, co, 0, 0, 0);
        for (int kz = 0; kz < g.kernel[0]; ++kz) {
          const auto rz = detail::tap_range(kz, sz, pz, ys.z, xs.z);
          for (int ky = 0; ky < g.kernel[1]; ++ky) {
            const auto ry = detail::tap_range(ky, sy, py, ys.y, xs.y);
            for (int kx = 0; kx < g.kernel[2]; ++kx) {
              const auto rx = detail::tap_range(kx, sx, px, ys.x, xs.x);
              const double wv = w.at(ci, co, kz, ky, kx);
              double wsum = 0.0;
              for (std::int64_t iz = rz.lo; iz < rz.hi; ++iz) {
                const std::int64_t oz = iz * sz - pz + kz;
                for (std::int64_t iy = ry.lo; iy < ry.hi; ++iy) {
                  const std::int64_t oy = iy * sy - py + ky;
                  const std::int64_t ibase = (iz * xs.y + iy) * xs.x;
                  const std::int64_t obase = (oz * ys.y + oy) * ys.x - px + kx;
                  for (std::int64_t ix = rx.lo; ix < rx.hi; ++ix) {
                    wsum += in[ibase + ix] * go[obase + ix * sx];
                    gin[ibase + ix] += wv * go[obase + ix * sx];
                  }
                }
              }
              r.dw.at(ci, co, kz, ky, kx) += wsum;
            }
          }
        }
      }
    }
  }
  return r;
}

// Normalization -----------------------------------------------------------------

/// Per-channel affine normalization with statistics over (batch, Z, Y, X).
struct NormCache {
  Tensor5 x_hat;
  std::vector<double> inv_std;
};

inline constexpr double kNormEps = 1e-5;

inline Tensor5 channel_norm_forward(const Tensor5& x, const Tensor5& gamma, const Tensor5& beta, NormCache& cache,
                                    double eps = kNormEps) {
  const auto& s = x.shape();
  if (gamma.shape().count() != s.c || beta.shape().count() != s.c) throw InputError("channel_norm: parameter size");
  Tensor5 y(s);
  cache.x_hat = Tensor5(s);
  cache.inv_std.assign(static_cast<std::size_t>(s.c), 0.0);
  const double m = static_cast<double>(s.n * s.spatial());
  for (std::int64_t c = 0; c < s.c; ++c) {
    double mean = 0.0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      const double* p = &x.at(n, c, 0, 0, 0);
      for (std::int64_t i = 0; i < s.spatial(); ++i) mean += p[i];
    }
    mean /= m;
    double var = 0.0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      const double* p = &x.at(n, c, 0, 0, 0);
      for (std::int64_t i = 0; i < s.spatial(); ++i) var += (p[i] - mean) * (p[i] - mean);
    }
    var /= m;
    const double inv = 1.0 / std::sqrt(var + eps);
    cache.inv_std[static_cast<std::size_t>(c)] = inv;
    const double gv = gamma[static_cast<std::size_t>(c)];
    const double bv = beta[static_cast<std::size_t>(c)];
    for (std::int64_t n = 0; n < s.n; ++n) {
      const double* p = &x.at(n, c, 0, 0, 0);
      double* h = &cache.x_hat.at(n, c, 0, 0, 0);
      double* o = &y.at(n, c, 0, 0, 0);
      for (std::int64_t i = 0; i < s.spatial(); ++i) {
        h[i] = (p[i] - mean) * inv;
        o[i] = gv * h[i] + bv;
      }
    }
  }
  return y;
}

struct NormGrads {
  Tensor5 dx;
  Tensor5 dgamma;
  Tensor5 dbeta;
};

inline NormGrads channel_norm_backward(const Tensor5& dy, const Tensor5& gamma, const NormCache& cache) {
  const auto& s = dy.shape();
  if (!(s == cache.x_hat.shape())) throw InputError("channel_norm_backward: shape mismatch");
  NormGrads r{Tensor5(s), Tensor5(gamma.shape()), Tensor5(gamma.shape())};
  const double m = static_cast<double>(s.n * s.spatial());
  for (std::int64_t c = 0; c < s.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      const double* g = &dy.at(n, c, 0, 0, 0);
      const double* h = &cache.x_hat.at(n, c, 0, 0, 0);
      for (std::int64_t i = 0; i < s.spatial(); ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * h[i];
      }
    }
    r.dbeta[static_cast<std::size_t>(c)] = sum_dy;
    r.dgamma[static_cast<std::size_t>(c)] = sum_dy_xhat;
    const double k = gamma[static_cast<std::size_t>(c)] * cache.inv_std[static_cast<std::size_t>(c)];
    for (std::int64_t n = 0; n < s.n; ++n) {
      const double* g = &dy.at(n, c, 0, 0, 0);
      const double* h = &cache.x_hat.at(n, c, 0, 0, 0);
      double* d = &r.dx.at(n, c, 0, 0, 0);
      for (std::int64_t i = 0; i < s.spatial(); ++i) d[i] = k * (g[i] - sum_dy / m - h[i] * sum_dy_xhat / m);
    }
  }
  return r;
}

// Activations -------------------------------------------------------------------

inline constexpr double kLeakySlope = 0.01;

inline Tensor5 leaky_relu_forward(const Tensor5& x, double slope = kLeakySlope) {
  Tensor5 y = x;
  for (auto& v : y.data()) v = v > 0.0 ? v : slope * v;
  return y;
}

inline Tensor5 leaky_relu_backward(const Tensor5& x, const Tensor5& dy, double slope = kLeakySlope) {
  if (!(x.shape() == dy.shape())) throw InputError("leaky_relu_backward: shape mismatch");
  Tensor5 dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : slope * dy[i];
  return dx;
}

/// Softmax across the channel axis at every voxel.
inline Tensor5 softmax_channels(const Tensor5& logits) {
  const auto& s = logits.shape();
  Tensor5 p(s);
  const std::int64_t vox = s.spatial();
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t i = 0; i < vox; ++i) {
      double mx = -INFINITY;
      for (std::int64_t c = 0; c < s.c; ++c) mx = std::max(mx, logits.ptr()[(n * s.c + c) * vox + i]);
      double sum = 0.0;
      for (std::int64_t c = 0; c < s.c; ++c) {
        const double e = std::exp(logits.ptr()[(n * s.c + c) * vox + i] - mx);
        p.ptr()[(n * s.c + c) * vox + i] = e;
        sum += e;
      }
      for (std::int64_t c = 0; c < s.c; ++c) p.ptr()[(n * s.c + c) * vox + i] /= sum;
    }
  }
  return p;
}

inline Tensor5 softmax_channels_backward(const Tensor5& probs, const Tensor5& dprobs) {
  const auto& s = probs.shape();
  if (!(s == dprobs.shape())) throw InputError("softmax_channels_backward: shape mismatch");
  Tensor5 dz(s);
  const std::int64_t vox = s.spatial();
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t i = 0; i < vox; ++i) {
      double inner = 0.0;
      for (std::int64_t c = 0; c < s.c; ++c) {
        const std::size_t k = static_cast<std::size_t>((n * s.c + c) * vox + i);
        inner += probs[k] * dprobs[k];
      }
      for (std::int64_t c = 0; c < s.c; ++c) {
        const std::size_t k = static_cast<std::size_t>((n * s.c + c) * vox + i);
        dz[k] = probs[k] * (dprobs[k] - inner);
      }
    }
  }
  return dz;
}

// Channel concatenation ---------------------------------------------------------

inline Tensor5 concat_channels(const Tensor5& a, const Tensor5& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.n != sb.n || sa.z != sb.z || sa.y != sb.y || sa.x != sb.x) {
    throw InputError("concat_channels: shapes " + sa.str() + " and " + sb.str() + " differ off the channel axis");
  }
  Tensor5 out(Shape5{sa.n, sa.c + sb.c, sa.z, sa.y, sa.x});
  const std::int64_t vox = sa.spatial();
  for (std::int64_t n = 0; n < sa.n; ++n) {
    std::copy_n(&a.at(n, 0, 0, 0, 0), sa.c * vox, &out.at(n, 0, 0, 0, 0));
    std::copy_n(&b.at(n, 0, 0, 0, 0), sb.c * vox, &out.at(n, sa.c, 0, 0, 0));
  }
  return out;
}

/// Inverse of concat_channels: first `c_first` channels, then the rest.
inline std::pair<Tensor5, Tensor5> split_channels(const Tensor5& t, std::int64_t c_first) {
  const auto& s = t.shape();
  if (c_first < 1 || c_first >= s.c) throw InputError("split_channels: bad split point");
  Tensor5 a(Shape5{s.n, c_first, s.z, s.y, s.x});
  Tensor5 b(Shape5{s.n, s.c - c_first, s.z, s.y, s.x});
  const std::int64_t vox = s.spatial();
  for (std::int64_t n = 0; n < s.n; ++n) {
    std::copy_n(&t.at(n, 0, 0, 0, 0), c_first * vox, &a.at(n, 0, 0, 0, 0));
    std::copy_n(&t.at(n, c_first, 0, 0, 0), (s.c - c_first) * vox, &b.at(n, 0, 0, 0, 0));
  }
  return {std::move(a), std::move(b)};
}

/// Single channel view copied out, shape (N, 1, Z, Y, X).
inline Tensor5 channel(const Tensor5& t, std::int64_t c) {
  const auto& s = t.shape();
  Tensor5 out(Shape5{s.n, 1, s.z, s.y, s.x});
  for (std::int64_t n = 0; n < s.n; ++n) std::copy_n(&t.at(n, c, 0, 0, 0), s.spatial(), &out.at(n, 0, 0, 0, 0));
  return out;
}

}  // namespace lungsev::toynet
