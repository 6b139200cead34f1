#pragma once

#include <algorithm>
#include <cmath>

#include "drfk/tensor.hpp"

// Dense spatial kernels on NCHW tensors. Everything here is a plain function
// of its inputs; the autodiff layer wires forwards to adjoints.

namespace drfk {

namespace detail {

inline int ceil_div(int x, int y) {  // y > 0
  return x >= 0 ? (x + y - 1) / y : -((-x) / y);
}
inline int floor_div(int x, int y) {  // y > 0
  return x >= 0 ? x / y : -((-x + y - 1) / y);
}

// Range of output positions p such that p*stride + k - pad lands in [0, in).
inline void conv_bounds(int k, int pad, int stride, int in, int out, int& lo,
                        int& hi) {
  lo = std::max(0, ceil_div(pad - k, stride));
  hi = std::min(out, floor_div(in - 1 + pad - k, stride) + 1);
}

}  // namespace detail

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}
inline int conv_transpose_out_dim(int in, int k, int stride, int pad) {
  return (in - 1) * stride + k - 2 * pad;
}

// y[n,o,p,q] = sum_{i,a,b} w[o,i,a,b] * x[n,i,p*s+a-pad, q*s+b-pad] + bias[o]
// (cross-correlation, zero padding). w: (Cout,Cin,Kh,Kw), bias: (1,Cout,1,1).
template <class T>
Tensor<T> conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w,
                     const Tensor<T>& bias, int stride, int pad) {
  require(stride >= 1 && pad >= 0, "conv2d: need stride >= 1 and pad >= 0");
  require(w.c() == x.c(), "conv2d: kernel expects ", w.c(),
          " input channels, tensor has ", x.c());
  require(bias.shape() == Shape{1, w.n(), 1, 1},
          "conv2d: bias shape must be (1,Cout,1,1), got ", bias.shape().str());
  require(w.all_finite() && bias.all_finite(),
          "conv2d: non-finite kernel or bias");
  const int ho = conv_out_dim(x.h(), w.h(), stride, pad);
  const int wo = conv_out_dim(x.w(), w.w(), stride, pad);
  require(ho >= 1 && wo >= 1, "conv2d: kernel ", w.h(), "x", w.w(),
          " does not fit input ", x.shape().str(), " with pad ", pad);

  Tensor<T> y(x.n(), w.n(), ho, wo);
  for (int n = 0; n < x.n(); ++n) {
    for (int o = 0; o < w.n(); ++o) {
      const T b = bias[o];
      for (int p = 0; p < ho; ++p) {
        T* yrow = y.row(n, o, p);
        for (int q = 0; q < wo; ++q) yrow[q] = b;
      }
      for (int i = 0; i < x.c(); ++i) {
        for (int a = 0; a < w.h(); ++a) {
          int plo, phi;
          detail::conv_bounds(a, pad, stride, x.h(), ho, plo, phi);
          for (int kb = 0; kb < w.w(); ++kb) {
            const T wv = w.at(o, i, a, kb);
            if (wv == T(0)) continue;
            int qlo, qhi;
            detail::conv_bounds(kb, pad, stride, x.w(), wo, qlo, qhi);
            for (int p = plo; p < phi; ++p) {
              const T* xrow = x.row(n, i, p * stride + a - pad);
              T* yrow = y.row(n, o, p);
              const int off = kb - pad;
              for (int q = qlo; q < qhi; ++q)
                yrow[q] += wv * xrow[q * stride + off];
            }
          }
        }
      }
    }
  }
  return y;
}

// Adjoint of the x -> conv2d(x, w, ...) map; target spatial dims are given
// explicitly because strided convs lose them. Also the core of the
// transposed convolution.
template <class T>
Tensor<T> conv2d_adjoint_input(const Tensor<T>& gy, const Tensor<T>& w,
                               int stride, int pad, int hx, int wx) {
  require(gy.c() == w.n(), "conv2d_adjoint_input: channel mismatch ", gy.c(),
          " vs kernel Cout ", w.n());
  Tensor<T> gx(gy.n(), w.c(), hx, wx);
  for (int n = 0; n < gy.n(); ++n) {
    for (int o = 0; o < w.n(); ++o) {
      for (int i = 0; i < w.c(); ++i) {
        for (int a = 0; a < w.h(); ++a) {
          int plo, phi;
          detail::conv_bounds(a, pad, stride, hx, gy.h(), plo, phi);
          for (int kb = 0; kb < w.w(); ++kb) {
            const T wv = w.at(o, i, a, kb);
            if (wv == T(0)) continue;
            int qlo, qhi;
            detail::conv_bounds(kb, pad, stride, wx, gy.w(), qlo, qhi);
            for (int p = plo; p < phi; ++p) {
              T* gxrow = gx.row(n, i, p * stride + a - pad);
              const T* gyrow = gy.row(n, o, p);
              const int off = kb - pad;
              for (int q = qlo; q < qhi; ++q)
                gxrow[q * stride + off] += wv * gyrow[q];
            }
          }
        }
      }
    }
  }
  return gx;
}

// gw[o,i,a,b] = sum_{n,p,q} out_role[n,o,p,q] * in_role[n,i,p*s+a-pad, ...].
// With (out_role=gy, in_role=x) this is the conv2d weight gradient; with
// (out_role=x, in_role=gy) it is the transposed-conv weight gradient.
template <class T>
Tensor<T> conv2d_grad_weight(const Tensor<T>& out_role,
                             const Tensor<T>& in_role, int stride, int pad,
                             int kh, int kw) {
  Tensor<T> gw(out_role.c(), in_role.c(), kh, kw);
  for (int o = 0; o < out_role.c(); ++o) {
    for (int i = 0; i < in_role.c(); ++i) {
      for (int a = 0; a < kh; ++a) {
        int plo, phi;
        detail::conv_bounds(a, pad, stride, in_role.h(), out_role.h(), plo,
                            phi);
        for (int kb = 0; kb < kw; ++kb) {
          int qlo, qhi;
          detail::conv_bounds(kb, pad, stride, in_role.w(), out_role.w(), qlo,
                              qhi);
          T acc = 0;
          for (int n = 0; n < out_role.n(); ++n) {
            for (int p = plo; p < phi; ++p) {
              const T* orow = out_role.row(n, o, p);
              const T* irow = in_role.row(n, i, p * stride + a - pad);
              const int off = kb - pad;
              for (int q = qlo; q < qhi; ++q)
                acc += orow[q] * irow[q * stride + off];
            }
          }
          gw.at(o, i, a, kb) = acc;
        }
      }
    }
  }
  return gw;
}

template <class T>
Tensor<T> conv2d_grad_bias(const Tensor<T>& gy) {
  Tensor<T> gb(1, gy.c(), 1, 1);
  for (int n = 0; n < gy.n(); ++n)
    for (int o = 0; o < gy.c(); ++o) {
      T acc = 0;
      for (int p = 0; p < gy.h(); ++p) {
        const T* row = gy.row(n, o, p);
        for (int q = 0; q < gy.w(); ++q) acc += row[q];
      }
      gb[o] += acc;
    }
  return gb;
}

// out spatial dims = (in - 1)*stride + K - 2*pad; the exact adjoint of
// conv2d with the same kernel, stride and pad, plus a bias over w.c().
template <class T>
Tensor<T> conv2d_transpose_fwd(const Tensor<T>& x, const Tensor<T>& w,
                               const Tensor<T>& bias, int stride, int pad) {
  require(stride >= 1 && pad >= 0,
          "conv2d_transpose: need stride >= 1 and pad >= 0");
  require(x.c() == w.n(), "conv2d_transpose: input channels ", x.c(),
          " must match kernel Cout ", w.n());
  require(bias.shape() == Shape{1, w.c(), 1, 1},
          "conv2d_transpose: bias shape must be (1,Cin,1,1), got ",
          bias.shape().str());
  require(w.all_finite() && bias.all_finite(),
          "conv2d_transpose: non-finite kernel or bias");
  const int ho = conv_transpose_out_dim(x.h(), w.h(), stride, pad);
  const int wo = conv_transpose_out_dim(x.w(), w.w(), stride, pad);
  require(ho >= 1 && wo >= 1, "conv2d_transpose: output dims degenerate for ",
          x.shape().str());
  Tensor<T> y = conv2d_adjoint_input(x, w, stride, pad, ho, wo);
  for (int n = 0; n < y.n(); ++n)
    for (int i = 0; i < y.c(); ++i) {
      const T b = bias[i];
      for (int p = 0; p < ho; ++p) {
        T* row = y.row(n, i, p);
        for (int q = 0; q < wo; ++q) row[q] += b;
      }
    }
  return y;
}

template <class T>
Tensor<T> relu_fwd(const Tensor<T>& x) {
  return map(x, [](T v) { return v > T(0) ? v : T(0); });
}

// Subgradient 0 at exactly 0.
template <class T>
Tensor<T> relu_bwd(const Tensor<T>& x, const Tensor<T>& gy) {
  return zip(x, gy, [](T xv, T gv) { return xv > T(0) ? gv : T(0); });
}

// 2x2 average pooling; the pyramid downsampler.
template <class T>
Tensor<T> avgpool2_fwd(const Tensor<T>& x) {
  require(x.h() % 2 == 0 && x.w() % 2 == 0,
          "downsample2: spatial dims must be even, got ", x.shape().str());
  Tensor<T> y(x.n(), x.c(), x.h() / 2, x.w() / 2);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int p = 0; p < y.h(); ++p) {
        const T* r0 = x.row(n, c, 2 * p);
        const T* r1 = x.row(n, c, 2 * p + 1);
        T* yr = y.row(n, c, p);
        for (int q = 0; q < y.w(); ++q)
          yr[q] = (r0[2 * q] + r0[2 * q + 1] + r1[2 * q] + r1[2 * q + 1]) / T(4);
      }
  return y;
}

template <class T>
Tensor<T> avgpool2_bwd(const Tensor<T>& gy) {
  Tensor<T> gx(gy.n(), gy.c(), gy.h() * 2, gy.w() * 2);
  for (int n = 0; n < gy.n(); ++n)
    for (int c = 0; c < gy.c(); ++c)
      for (int p = 0; p < gy.h(); ++p) {
        const T* gr = gy.row(n, c, p);
        T* r0 = gx.row(n, c, 2 * p);
        T* r1 = gx.row(n, c, 2 * p + 1);
        for (int q = 0; q < gy.w(); ++q) {
          const T v = gr[q] / T(4);
          r0[2 * q] = v;
          r0[2 * q + 1] = v;
          r1[2 * q] = v;
          r1[2 * q + 1] = v;
        }
      }
  return gx;
}

template <class T>
Tensor<T> upsample_nearest2_fwd(const Tensor<T>& x) {
  Tensor<T> y(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int p = 0; p < x.h(); ++p) {
        const T* xr = x.row(n, c, p);
        T* y0 = y.row(n, c, 2 * p);
        T* y1 = y.row(n, c, 2 * p + 1);
        for (int q = 0; q < x.w(); ++q) {
          y0[2 * q] = xr[q];
          y0[2 * q + 1] = xr[q];
          y1[2 * q] = xr[q];
          y1[2 * q + 1] = xr[q];
        }
      }
  return y;
}

template <class T>
Tensor<T> upsample_nearest2_bwd(const Tensor<T>& gy) {
  require(gy.h() % 2 == 0 && gy.w() % 2 == 0,
          "upsample_nearest2_bwd: dims must be even");
  Tensor<T> gx(gy.n(), gy.c(), gy.h() / 2, gy.w() / 2);
  for (int n = 0; n < gy.n(); ++n)
    for (int c = 0; c < gy.c(); ++c)
      for (int p = 0; p < gx.h(); ++p) {
        const T* g0 = gy.row(n, c, 2 * p);
        const T* g1 = gy.row(n, c, 2 * p + 1);
        T* xr = gx.row(n, c, p);
        for (int q = 0; q < gx.w(); ++q)
          xr[q] = g0[2 * q] + g0[2 * q + 1] + g1[2 * q] + g1[2 * q + 1];
      }
  return gx;
}

template <class T>
Tensor<T> concat_channels_fwd(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.n() == b.n() && a.h() == b.h() && a.w() == b.w(),
          "concat_channels: N,H,W must match, got ", a.shape().str(), " and ",
          b.shape().str());
  Tensor<T> y(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t plane = std::size_t(a.h()) * a.w();
  for (int n = 0; n < a.n(); ++n) {
    std::copy_n(a.data() + a.index(n, 0, 0, 0), plane * a.c(),
                y.data() + y.index(n, 0, 0, 0));
    std::copy_n(b.data() + b.index(n, 0, 0, 0), plane * b.c(),
                y.data() + y.index(n, a.c(), 0, 0));
  }
  return y;
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, int c0, int len) {
  require(c0 >= 0 && len >= 1 && c0 + len <= x.c(),
          "slice_channels: range [", c0, ",", c0 + len, ") out of ", x.c());
  Tensor<T> y(x.n(), len, x.h(), x.w());
  const std::size_t plane = std::size_t(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n)
    std::copy_n(x.data() + x.index(n, c0, 0, 0), plane * len,
                y.data() + y.index(n, 0, 0, 0));
  return y;
}

// 5-point Laplacian stencil [[0,1,0],[1,-4,1],[0,1,0]] with replicate
// padding, so constants map to exactly zero including at the borders.
template <class T>
Tensor<T> laplacian_fwd(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const int h = x.h(), w = x.w();
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int r = 0; r < h; ++r) {
        const T* up = x.row(n, c, r > 0 ? r - 1 : 0);
        const T* mid = x.row(n, c, r);
        const T* dn = x.row(n, c, r < h - 1 ? r + 1 : h - 1);
        T* yr = y.row(n, c, r);
        for (int q = 0; q < w; ++q) {
          const T left = mid[q > 0 ? q - 1 : 0];
          const T right = mid[q < w - 1 ? q + 1 : w - 1];
          yr[q] = up[q] + dn[q] + left + right - T(4) * mid[q];
        }
      }
  return y;
}

template <class T>
Tensor<T> laplacian_adjoint(const Tensor<T>& gy) {
  Tensor<T> gx(gy.shape());
  const int h = gy.h(), w = gy.w();
  for (int n = 0; n < gy.n(); ++n)
    for (int c = 0; c < gy.c(); ++c)
      for (int r = 0; r < h; ++r) {
        const T* gr = gy.row(n, c, r);
        for (int q = 0; q < w; ++q) {
          const T g = gr[q];
          gx.at(n, c, r > 0 ? r - 1 : 0, q) += g;
          gx.at(n, c, r < h - 1 ? r + 1 : h - 1, q) += g;
          gx.at(n, c, r, q > 0 ? q - 1 : 0) += g;
          gx.at(n, c, r, q < w - 1 ? q + 1 : w - 1) += g;
          gx.at(n, c, r, q) -= T(4) * g;
        }
      }
  return gx;
}

namespace detail {

// Mirror index without repeating the border sample; well defined for any
// offset via the period 2n-2.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

}  // namespace detail

template <class T>
Tensor<T> reflect_pad(const Tensor<T>& x, int top, int bottom, int left,
                      int right) {
  require(top >= 0 && bottom >= 0 && left >= 0 && right >= 0,
          "reflect_pad: negative padding");
  Tensor<T> y(x.n(), x.c(), x.h() + top + bottom, x.w() + left + right);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int r = 0; r < y.h(); ++r) {
        const T* xr = x.row(n, c, detail::reflect_index(r - top, x.h()));
        T* yr = y.row(n, c, r);
        for (int q = 0; q < y.w(); ++q)
          yr[q] = xr[detail::reflect_index(q - left, x.w())];
      }
  return y;
}

// Same 2-D tap grid applied to every channel, replicate border; used by the
// synthetic blur model.
template <class T>
Tensor<T> depthwise_conv_replicate(const Tensor<T>& x, const Tensor<T>& taps) {
  require(taps.n() == 1 && taps.c() == 1, "depthwise_conv_replicate: taps must"
          " be (1,1,kh,kw), got ", taps.shape().str());
  const int kh = taps.h(), kw = taps.w();
  const int ch = kh / 2, cw = kw / 2;
  Tensor<T> y(x.shape());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int r = 0; r < x.h(); ++r) {
        T* yr = y.row(n, c, r);
        for (int q = 0; q < x.w(); ++q) {
          T acc = 0;
          for (int a = 0; a < kh; ++a) {
            const int rr = std::clamp(r + a - ch, 0, x.h() - 1);
            const T* xr = x.row(n, c, rr);
            for (int b = 0; b < kw; ++b) {
              const int cc = std::clamp(q + b - cw, 0, x.w() - 1);
              acc += taps.at(0, 0, a, b) * xr[cc];
            }
          }
          yr[q] = acc;
        }
      }
  return y;
}

template <class T>
Tensor<T> flip_horizontal(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int r = 0; r < x.h(); ++r) {
        const T* xr = x.row(n, c, r);
        T* yr = y.row(n, c, r);
        for (int q = 0; q < x.w(); ++q) yr[q] = xr[x.w() - 1 - q];
      }
  return y;
}

template <class T>
Tensor<T> flip_vertical(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int r = 0; r < x.h(); ++r)
        std::copy_n(x.row(n, c, x.h() - 1 - r), x.w(), y.row(n, c, r));
  return y;
}

}  // namespace drfk
