#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "drfk/fft.hpp"
#include "drfk/network.hpp"

// Quality metrics, analytical cost accounting, and frequency-domain
// diagnostics (image spectra, per-stream feature spectra, radial band
// energies).

namespace drfk {

// ---- PSNR / SSIM ----

template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
  require(a.shape() == b.shape(), "psnr: shape mismatch ", a.shape().str(),
          " vs ", b.shape().str());
  require(peak > 0, "psnr: peak must be positive");
  double mse = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    mse += d * d;
  }
  mse /= double(a.numel());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace detail {

inline std::vector<double> ssim_window() {
  // 11-tap Gaussian, sigma 1.5, normalized
  std::vector<double> w(11);
  double s = 0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    w[std::size_t(i)] = std::exp(-d * d / (2 * 1.5 * 1.5));
    s += w[std::size_t(i)];
  }
  for (double& v : w) v /= s;
  return w;
}

// Valid-mode separable filtering of one (H,W) plane with an 11-tap window.
inline std::vector<double> ssim_filter(const std::vector<double>& p, int h,
                                       int w, const std::vector<double>& win) {
  const int k = int(win.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(std::size_t(h) * ow);
  for (int r = 0; r < h; ++r)
    for (int q = 0; q < ow; ++q) {
      double acc = 0;
      for (int t = 0; t < k; ++t) acc += win[std::size_t(t)] * p[std::size_t(r) * w + q + t];
      rows[std::size_t(r) * ow + q] = acc;
    }
  std::vector<double> out(std::size_t(oh) * ow);
  for (int r = 0; r < oh; ++r)
    for (int q = 0; q < ow; ++q) {
      double acc = 0;
      for (int t = 0; t < k; ++t) acc += win[std::size_t(t)] * rows[std::size_t(r + t) * ow + q];
      out[std::size_t(r) * ow + q] = acc;
    }
  return out;
}

}  // namespace detail

// Mean local SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// valid mode, averaged over channels (and batch).
template <class T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
  require(a.shape() == b.shape(), "ssim: shape mismatch ", a.shape().str(),
          " vs ", b.shape().str());
  const int h = a.h(), w = a.w();
  require(h >= 11 && w >= 11, "ssim: image ", h, "x", w,
          " smaller than the 11x11 window");
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const std::vector<double> win = detail::ssim_window();

  double total = 0;
  long long planes = 0;
  std::vector<double> pa(std::size_t(h) * w), pb(pa.size()), paa(pa.size()),
      pbb(pa.size()), pab(pa.size());
  for (int n = 0; n < a.n(); ++n)
    for (int c = 0; c < a.c(); ++c) {
      for (int r = 0; r < h; ++r) {
        const T* ra = a.row(n, c, r);
        const T* rb = b.row(n, c, r);
        for (int q = 0; q < w; ++q) {
          const double va = ra[q], vb = rb[q];
          const std::size_t i = std::size_t(r) * w + q;
          pa[i] = va;
          pb[i] = vb;
          paa[i] = va * va;
          pbb[i] = vb * vb;
          pab[i] = va * vb;
        }
      }
      auto mu_a = detail::ssim_filter(pa, h, w, win);
      auto mu_b = detail::ssim_filter(pb, h, w, win);
      auto m_aa = detail::ssim_filter(paa, h, w, win);
      auto m_bb = detail::ssim_filter(pbb, h, w, win);
      auto m_ab = detail::ssim_filter(pab, h, w, win);
      double acc = 0;
      for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = m_aa[i] - ma * ma;
        const double vb = m_bb[i] - mb * mb;
        const double cov = m_ab[i] - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
      total += acc / double(mu_a.size());
      ++planes;
    }
  return total / double(planes);
}

// ---- FLOP accounting ----

struct FlopEntry {
  std::string name;
  long long macs = 0;
};

struct FlopReport {
  int h = 0, w = 0;
  std::vector<FlopEntry> layers;
  long long total_macs = 0;
  double fft_ops = 0;  // separate estimate: 2.5*H*W*log2(H*W) per channel
                       // per transform, excluded from total_macs
  std::string convention = "macs";
};

// MACs of one conv-like layer at the given input size: weight-numel products
// per output position, bias-free. Transposed convs also count
// cout*cin*k^2 per *output* position.
inline long long conv_macs(const LayerDesc& l, int ih, int iw) {
  int ho, wo;
  if (l.transpose) {
    ho = conv_transpose_out_dim(ih, l.k, l.stride, l.pad);
    wo = conv_transpose_out_dim(iw, l.k, l.stride, l.pad);
  } else {
    const int giw = l.spectral ? half_spectrum_width(iw) : iw;
    ho = conv_out_dim(ih, l.k, l.stride, l.pad);
    wo = conv_out_dim(giw, l.k, l.stride, l.pad);
  }
  return (long long)l.cout * l.cin * l.k * l.k * ho * wo;
}

template <class T>
FlopReport flops_count(const Model<T>& model, int h = 256, int w = 256) {
  const int div = 1 << (model.config().levels - 1);
  require(h % div == 0 && w % div == 0, "flops_count: input ", h, "x", w,
          " must be divisible by 2^(levels-1) = ", div);
  FlopReport rep;
  rep.h = h;
  rep.w = w;
  for (const LayerDesc& l : model.layers()) {
    const long long m = conv_macs(l, h / l.divisor, w / l.divisor);
    rep.layers.push_back(FlopEntry{l.name, m});
    rep.total_macs += m;
  }
  for (const FftUse& u : model.fft_uses()) {
    const double hh = h / u.divisor, ww = w / u.divisor;
    // one forward plus one inverse transform over u.channels channels each
    rep.fft_ops += 2.0 * u.channels * 2.5 * hh * ww * std::log2(hh * ww);
  }
  return rep;
}

// ---- spectra ----

struct SpectrumMap {
  Tensor<double> mag;  // (1,1,H,W) full-width grid, DC at (H/2, W/2)
  bool log_scaled = false;
  std::string source;
};

namespace detail {

// Channel-averaged magnitude of the full-width spectrum of a feature or
// image tensor, DC-centered. The missing half comes from conjugate symmetry
// |F[r,v]| = |F[(H-r)%H, W-v]|.
template <class T>
Tensor<double> full_magnitude(const Tensor<T>& x) {
  HalfSpectrum<double> s = rfft2(x.template cast<double>());
  const int h = x.h(), w = x.w(), wf = s.re.w();
  Tensor<double> mag(1, 1, h, w);
  const double scale = 1.0 / (double(x.n()) * x.c());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int r = 0; r < h; ++r)
        for (int v = 0; v < w; ++v) {
          const bool mirrored = v >= wf;
          const int rr = mirrored ? (h - r) % h : r;
          const int vv = mirrored ? w - v : v;
          const double re = s.re.at(n, c, rr, vv);
          const double im = s.im.at(n, c, rr, vv);
          // centered coordinates
          const int ci = (r + h - h / 2) % h;
          const int cj = (v + w - w / 2) % w;
          mag.at(0, 0, ci, cj) += scale * std::sqrt(re * re + im * im);
        }
  return mag;
}

}  // namespace detail

template <class T>
SpectrumMap image_spectrum(const Tensor<T>& x) {
  SpectrumMap m;
  m.mag = detail::full_magnitude(x);
  m.source = "image";
  return m;
}

// | |F(a)| - |F(b)| |, channel-averaged magnitudes.
template <class T>
SpectrumMap spectrum_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "spectrum_diff: shape mismatch ",
          a.shape().str(), " vs ", b.shape().str());
  SpectrumMap m;
  Tensor<double> ma = detail::full_magnitude(a);
  Tensor<double> mb = detail::full_magnitude(b);
  m.mag = zip(ma, mb, [](double x, double y) { return std::abs(x - y); });
  m.source = "diff";
  return m;
}

inline SpectrumMap log_display(const SpectrumMap& m) {
  SpectrumMap out;
  out.mag = map(m.mag, [](double v) { return std::log1p(v); });
  out.log_scaled = true;
  out.source = m.source;
  return out;
}

// Spectra of the two streams of one block. `block` names a block prefix like
// "db0.b7"; unknown names list what exists. For spatial-only models the fft
// stream map is all zeros.
template <class T>
struct StreamSpectra {
  SpectrumMap fft, res;
};

template <class T>
StreamSpectra<T> feature_spectrum(const Model<T>& model,
                                  const Tensor<T>& image,
                                  const std::string& block) {
  StreamTaps<T> taps;
  taps.block = block;
  Graph<T> g;
  model.forward(g, image, &taps);
  if (!taps.found) {
    std::string avail;
    for (const LayerDesc& l : model.layers()) {
      const auto n = l.name.size();
      if (n > 3 && l.name.compare(n - 3, 3, ".s1") == 0) {
        if (!avail.empty()) avail += ", ";
        avail += l.name.substr(0, n - 3);
      }
    }
    throw Error(detail::cat("feature_spectrum: no block named \"", block,
                            "\"; available: ", avail));
  }
  StreamSpectra<T> out;
  if (taps.yfft.id >= 0)
    out.fft.mag = detail::full_magnitude(taps.yfft.val());
  else
    out.fft.mag = Tensor<double>(1, 1, taps.yres.val().h(),
                                 taps.yres.val().w());
  out.fft.source = "feature:" + block + ":fft";
  out.res.mag = detail::full_magnitude(taps.yres.val());
  out.res.source = "feature:" + block + ":res";
  return out;
}

// ---- radial band energy ----

// Sum of map magnitudes per normalized-radius band. Radius is measured from
// the DC center, each axis normalized to its Nyquist distance, then clamped
// to 1 (corner bins land in the top band). Bands must partition [0, 1];
// each is [lo, hi), the last [lo, 1].
inline std::vector<double> radial_band_energy(
    const SpectrumMap& m, const std::vector<std::pair<double, double>>& bands) {
  require(!bands.empty(), "radial_band_energy: no bands");
  require(bands.front().first == 0.0,
          "radial_band_energy: bands must start at 0");
  for (std::size_t i = 0; i < bands.size(); ++i) {
    require(bands[i].second > bands[i].first,
            "radial_band_energy: empty band [", bands[i].first, ", ",
            bands[i].second, ")");
    if (i + 1 < bands.size())
      require(bands[i + 1].first == bands[i].second,
              "radial_band_energy: gap or overlap at ", bands[i].second);
  }
  require(bands.back().second == 1.0,
          "radial_band_energy: bands must end at 1");

  const int h = m.mag.h(), w = m.mag.w();
  const int cy = h / 2, cx = w / 2;
  std::vector<double> e(bands.size(), 0.0);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double fy = cy ? double(i - cy) / cy : 0.0;
      const double fx = cx ? double(j - cx) / cx : 0.0;
      const double r = std::min(1.0, std::sqrt(fy * fy + fx * fx));
      std::size_t b = bands.size() - 1;
      for (std::size_t k = 0; k < bands.size(); ++k)
        if (r < bands[k].second || k + 1 == bands.size()) {
          b = k;
          break;
        }
      e[b] += m.mag.at(0, 0, i, j);
    }
  return e;
}

}  // namespace drfk
