#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "drfk/tensor.hpp"

// Real 2D FFT with half-width spectra. Forward is unnormalized, inverse
// carries the 1/(H*W); all arithmetic runs in double regardless of the
// tensor scalar type.

namespace drfk {

namespace detail {

using cplx = std::complex<double>;

// Twiddle table exp(-2*pi*i*k/n) for k < n/2; one cos/sin per entry, so
// butterflies never accumulate rotation error.
inline const std::vector<cplx>& twiddles(int n) {
  thread_local std::map<int, std::vector<cplx>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<cplx> tw(n / 2);
  for (int k = 0; k < n / 2; ++k) {
    const double ang = -6.283185307179586476925287 * k / n;
    tw[k] = cplx(std::cos(ang), std::sin(ang));
  }
  return cache.emplace(n, std::move(tw)).first->second;
}

// Iterative radix-2, unscaled in both directions.
inline void fft_pow2(std::vector<cplx>& a, bool invert) {
  const int n = int(a.size());
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto& tw = twiddles(n);
  for (int len = 2; len <= n; len <<= 1) {
    const int step = n / len;
    for (int i = 0; i < n; i += len) {
      for (int j = 0; j < len / 2; ++j) {
        cplx w = tw[std::size_t(j) * step];
        if (invert) w = std::conj(w);
        const cplx u = a[i + j];
        const cplx v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
}

struct BluesteinPlan {
  int m = 0;
  std::vector<cplx> chirp;  // exp(sign*pi*i*k^2/n), k < n
  std::vector<cplx> bhat;   // FFT of the zero-padded conjugate chirp
};

// k^2 mod 2n keeps the chirp angle small for exact evaluation.
inline const BluesteinPlan& bluestein_plan(int n, bool invert) {
  thread_local std::map<std::pair<int, bool>, BluesteinPlan> cache;
  const auto key = std::make_pair(n, invert);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  BluesteinPlan plan;
  int m = 1;
  while (m < 2 * n - 1) m <<= 1;
  plan.m = m;
  plan.chirp.resize(n);
  const double sign = invert ? 1.0 : -1.0;
  for (int k = 0; k < n; ++k) {
    const std::uint64_t sq = (std::uint64_t(k) * k) % (2ULL * n);
    const double ang = sign * 3.141592653589793238462643 * double(sq) / n;
    plan.chirp[k] = cplx(std::cos(ang), std::sin(ang));
  }
  std::vector<cplx> b(m, cplx(0, 0));
  for (int k = 0; k < n; ++k) {
    b[k] = std::conj(plan.chirp[k]);
    if (k > 0) b[m - k] = std::conj(plan.chirp[k]);
  }
  fft_pow2(b, false);
  plan.bhat = std::move(b);
  return cache.emplace(key, std::move(plan)).first->second;
}

// Chirp-z: an n-point DFT as an m-point cyclic convolution, m a power of 2.
inline void fft_bluestein(std::vector<cplx>& x, bool invert) {
  const int n = int(x.size());
  const auto& plan = bluestein_plan(n, invert);
  std::vector<cplx> a(plan.m, cplx(0, 0));
  for (int k = 0; k < n; ++k) a[k] = x[k] * plan.chirp[k];
  fft_pow2(a, false);
  for (int k = 0; k < plan.m; ++k) a[k] *= plan.bhat[k];
  fft_pow2(a, true);
  const double inv_m = 1.0 / plan.m;
  for (int k = 0; k < n; ++k) x[k] = a[k] * inv_m * plan.chirp[k];
}

// Unscaled complex DFT of any length; invert flips the exponent sign only.
inline void fft1d(std::vector<cplx>& a, bool invert) {
  const int n = int(a.size());
  if (n <= 1) return;
  if ((n & (n - 1)) == 0)
    fft_pow2(a, invert);
  else
    fft_bluestein(a, invert);
}

}  // namespace detail

// Literal O(N^2) evaluation of X[k] = sum_n x[n] e^{-2*pi*i*k*n/N};
// the oracle the fast paths are tested against.
inline std::vector<std::complex<double>> dft1d_naive(
    const std::vector<std::complex<double>>& x) {
  const int n = int(x.size());
  require(n >= 1, "dft1d_naive: empty input");
  std::vector<std::complex<double>> out(n);
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc(0, 0);
    for (int j = 0; j < n; ++j) {
      const std::uint64_t kj = (std::uint64_t(k) * std::uint64_t(j)) % n;
      const double ang = -6.283185307179586476925287 * double(kj) / n;
      acc += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline std::vector<std::complex<double>> dft1d_naive(
    const std::vector<double>& x) {
  std::vector<std::complex<double>> cx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) cx[i] = x[i];
  return dft1d_naive(cx);
}

inline int half_spectrum_width(int w) { return w / 2 + 1; }

// True when column v of a width-w spectrum has a distinct mirror column
// w - v; the stored half drops that mirror, so such bins carry weight 2 in
// energy and adjoint accounting.
inline bool spectrum_column_folded(int v, int w) {
  return v != 0 && 2 * v != w;
}

// Non-redundant output of a real 2D FFT: (N, C, H, floor(W/2)+1) real and
// imaginary planes plus the original width, which exact inversion needs.
template <class T>
struct HalfSpectrum {
  Tensor<T> re, im;
  int orig_w = 0;

  Shape shape() const { return re.shape(); }
  int n() const { return re.n(); }
  int c() const { return re.c(); }
  int h() const { return re.h(); }
  int wf() const { return re.w(); }

  void check() const {
    require(!re.empty() && re.shape() == im.shape(),
            "HalfSpectrum: real/imag planes must share a shape");
    require(orig_w >= 1 && re.w() == half_spectrum_width(orig_w),
            "HalfSpectrum: stored width ", re.w(),
            " inconsistent with original width ", orig_w);
  }
};

// Unnormalized forward transform, per channel per batch element; rows first,
// then the surviving half-width columns.
template <class T>
HalfSpectrum<T> rfft2(const Tensor<T>& x) {
  const int h = x.h(), w = x.w(), wf = half_spectrum_width(w);
  HalfSpectrum<T> s{Tensor<T>(x.n(), x.c(), h, wf),
                    Tensor<T>(x.n(), x.c(), h, wf), w};
  std::vector<detail::cplx> rowbuf(w), colbuf(h);
  std::vector<detail::cplx> plane(std::size_t(h) * wf);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      for (int r = 0; r < h; ++r) {
        const T* xr = x.row(n, c, r);
        for (int q = 0; q < w; ++q) rowbuf[q] = detail::cplx(double(xr[q]), 0);
        detail::fft1d(rowbuf, false);
        for (int v = 0; v < wf; ++v) plane[std::size_t(r) * wf + v] = rowbuf[v];
      }
      for (int v = 0; v < wf; ++v) {
        for (int r = 0; r < h; ++r) colbuf[r] = plane[std::size_t(r) * wf + v];
        detail::fft1d(colbuf, false);
        for (int r = 0; r < h; ++r) {
          s.re.at(n, c, r, v) = T(colbuf[r].real());
          s.im.at(n, c, r, v) = T(colbuf[r].imag());
        }
      }
    }
  return s;
}

// Inverse transform scaled by 1/(H*W). Columns are inverted first; each row
// is then completed through conjugate symmetry G[r, W-v] = conj(G[r, v])
// before the final row inversion. Output keeps only the real part.
template <class T>
Tensor<T> irfft2(const HalfSpectrum<T>& s) {
  s.check();
  const int h = s.h(), w = s.orig_w, wf = s.wf();
  Tensor<T> out(s.n(), s.c(), h, w);
  std::vector<detail::cplx> rowbuf(w), colbuf(h);
  std::vector<detail::cplx> plane(std::size_t(h) * wf);
  const double scale = 1.0 / (double(h) * double(w));
  for (int n = 0; n < s.n(); ++n)
    for (int c = 0; c < s.c(); ++c) {
      for (int v = 0; v < wf; ++v) {
        for (int r = 0; r < h; ++r)
          colbuf[r] = detail::cplx(double(s.re.at(n, c, r, v)),
                                   double(s.im.at(n, c, r, v)));
        detail::fft1d(colbuf, true);
        for (int r = 0; r < h; ++r) plane[std::size_t(r) * wf + v] = colbuf[r];
      }
      for (int r = 0; r < h; ++r) {
        for (int v = 0; v < wf; ++v) rowbuf[v] = plane[std::size_t(r) * wf + v];
        for (int v = wf; v < w; ++v)
          rowbuf[v] = std::conj(plane[std::size_t(r) * wf + (w - v)]);
        detail::fft1d(rowbuf, true);
        T* orow = out.row(n, c, r);
        for (int q = 0; q < w; ++q) orow[q] = T(rowbuf[q].real() * scale);
      }
    }
  return out;
}

// Multiply folded (weight-2) columns of both planes by f; factors 2 and 0.5
// convert between the plain and weighted spectrum inner products.
template <class T>
void scale_folded_columns(HalfSpectrum<T>& s, T f) {
  for (int n = 0; n < s.n(); ++n)
    for (int c = 0; c < s.c(); ++c)
      for (int r = 0; r < s.h(); ++r) {
        T* re = s.re.row(n, c, r);
        T* im = s.im.row(n, c, r);
        for (int v = 0; v < s.wf(); ++v)
          if (spectrum_column_folded(v, s.orig_w)) {
            re[v] *= f;
            im[v] *= f;
          }
      }
}

// sum over bins of weight * (re*re' + im*im'), weight 2 on folded columns.
// This is the inner product under which the adjoint pair below is exact.
template <class T>
double weighted_spectrum_dot(const HalfSpectrum<T>& a,
                             const HalfSpectrum<T>& b) {
  require(a.shape() == b.shape() && a.orig_w == b.orig_w,
          "weighted_spectrum_dot: spectra must match, got ", a.shape().str(),
          "/", a.orig_w, " vs ", b.shape().str(), "/", b.orig_w);
  double acc = 0;
  for (int n = 0; n < a.n(); ++n)
    for (int c = 0; c < a.c(); ++c)
      for (int r = 0; r < a.h(); ++r) {
        const T* ar = a.re.row(n, c, r);
        const T* ai = a.im.row(n, c, r);
        const T* br = b.re.row(n, c, r);
        const T* bi = b.im.row(n, c, r);
        for (int v = 0; v < a.wf(); ++v) {
          const double d = double(ar[v]) * br[v] + double(ai[v]) * bi[v];
          acc += spectrum_column_folded(v, a.orig_w) ? 2.0 * d : d;
        }
      }
  return acc;
}

// Adjoint of rfft2 under the weighted spectrum inner product. Identity:
// mirroring a folded bin back to its twin adds an equal real contribution,
// so <rfft2(x), s>_weighted = <x, H*W*irfft2(s)>.
template <class T>
Tensor<T> rfft2_adjoint(const HalfSpectrum<T>& grad_s) {
  Tensor<T> g = irfft2(grad_s);
  const T hw = T(grad_s.h()) * T(grad_s.orig_w);
  for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= hw;
  return g;
}

// Adjoint of irfft2 under the same convention: <irfft2(s), y> =
// <s, rfft2(y)/(H*W)>_weighted.
template <class T>
HalfSpectrum<T> irfft2_adjoint(const Tensor<T>& grad_y) {
  HalfSpectrum<T> s = rfft2(grad_y);
  const T inv = T(1) / (T(grad_y.h()) * T(grad_y.w()));
  for (std::size_t i = 0; i < s.re.numel(); ++i) {
    s.re[i] *= inv;
    s.im[i] *= inv;
  }
  return s;
}

}  // namespace drfk
