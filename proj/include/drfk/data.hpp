#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "drfk/kernels.hpp"
#include "drfk/network.hpp"
#include "drfk/rng.hpp"
#include "drfk/tensor.hpp"

// Synthetic scene generation, blur models, patch sampling, and tiled
// inference. Everything here is a pure function of its seeds, so datasets
// regenerate bit-identically and training stays reproducible.

namespace drfk {

// ---- blur kernels ----

struct BlurKernel {
  enum class Kind { motion, gaussian };
  Kind kind = Kind::gaussian;
  double length = 0, angle = 0;  // motion parameters
  double sigma = 0;              // gaussian parameter
  Tensor<double> taps;           // (1,1,kh,kw), nonnegative, sums to 1
};

namespace detail {

inline Tensor<double> normalize_taps(Tensor<double> t) {
  double s = 0;
  for (std::size_t i = 0; i < t.numel(); ++i) {
    require(t[i] >= 0, "blur kernel: negative tap");
    s += t[i];
  }
  require(s > 1e-12, "blur kernel: taps sum to ", s, ", not normalizable");
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] /= s;
  return t;
}

}  // namespace detail

// Anti-aliased line segment point spread: tap weight falls off linearly with
// distance from the segment, giving a one-pixel-soft motion streak.
// length 1 degenerates to the identity kernel.
inline BlurKernel make_motion_kernel(double length, double angle) {
  require(length >= 1, "motion kernel: length must be >= 1, got ", length);
  const double half = (length - 1) / 2;
  const double dx = std::cos(angle), dy = std::sin(angle);
  const int r = int(std::ceil(half)) + 1;
  const int k = 2 * r + 1;
  Tensor<double> taps(1, 1, k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double py = i - r, px = j - r;
      // distance from (px,py) to the centered segment of half-length `half`
      const double t = std::clamp(px * dx + py * dy, -half, half);
      const double ex = px - t * dx, ey = py - t * dy;
      const double dist = std::sqrt(ex * ex + ey * ey);
      taps.at(0, 0, i, j) = std::max(0.0, 1.0 - dist);
    }
  BlurKernel bk;
  bk.kind = BlurKernel::Kind::motion;
  bk.length = length;
  bk.angle = angle;
  bk.taps = detail::normalize_taps(std::move(taps));
  return bk;
}

inline BlurKernel make_gaussian_kernel(double sigma) {
  require(sigma > 0, "gaussian kernel: sigma must be > 0, got ", sigma);
  const int r = std::max(1, int(std::ceil(3 * sigma)));
  const int k = 2 * r + 1;
  Tensor<double> taps(1, 1, k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double py = i - r, px = j - r;
      taps.at(0, 0, i, j) = std::exp(-(px * px + py * py) / (2 * sigma * sigma));
    }
  BlurKernel bk;
  bk.kind = BlurKernel::Kind::gaussian;
  bk.sigma = sigma;
  bk.taps = detail::normalize_taps(std::move(taps));
  return bk;
}

// blurry = clip(replicate-pad conv(sharp, taps) + N(0, sigma^2) noise, 0, 1)
template <class T>
Tensor<T> blur(const Tensor<T>& sharp, const BlurKernel& kernel,
               double noise_sigma, std::uint64_t noise_seed) {
  require(noise_sigma >= 0, "blur: noise sigma must be >= 0");
  Tensor<T> y = depthwise_conv_replicate(sharp, kernel.taps.template cast<T>());
  if (noise_sigma > 0) {
    Rng rng(noise_seed);
    for (std::size_t i = 0; i < y.numel(); ++i)
      y[i] += T(noise_sigma * rng.normal());
  }
  return clip01(y);
}

// ---- procedural scenes ----

// Layered random content: a linear color gradient base, anti-aliased
// triangles and ellipses, and band-limited value noise. Deterministic in the
// seed down to the bit.
template <class T = float>
Tensor<T> gen_scene(std::uint64_t seed, int h, int w) {
  require(h >= 64 && w >= 64, "gen_scene: size must be >= 64x64, got ", h, "x",
          w);
  Rng rng(seed);
  Tensor<double> img(1, 3, h, w);

  // gradient base between two random colors along a random direction
  {
    double c0[3], c1[3];
    for (double& v : c0) v = rng.uniform();
    for (double& v : c1) v = rng.uniform();
    const double th = rng.uniform(0, 2 * M_PI);
    const double dx = std::cos(th), dy = std::sin(th);
    const double span = std::abs(dx) * w + std::abs(dy) * h;
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < h; ++i) {
        double* row = img.row(0, c, i);
        for (int j = 0; j < w; ++j) {
          double t = (dx * j + dy * i) / span + 0.5;
          t = std::clamp(t, 0.0, 1.0);
          row[j] = c0[c] + (c1[c] - c0[c]) * t;
        }
      }
  }

  // opaque-ish shapes with ~1px soft edges
  const int shapes = 5 + int(rng.uniform_int(4));
  for (int s = 0; s < shapes; ++s) {
    double col[3];
    for (double& v : col) v = rng.uniform();
    const double alpha = rng.uniform(0.6, 1.0);
    const bool ellipse = rng.bernoulli();
    if (ellipse) {
      const double cy = rng.uniform(0.1, 0.9) * h;
      const double cx = rng.uniform(0.1, 0.9) * w;
      const double ry = rng.uniform(0.05, 0.3) * h;
      const double rx = rng.uniform(0.05, 0.3) * w;
      const double rot = rng.uniform(0, M_PI);
      const double cs = std::cos(rot), sn = std::sin(rot);
      const double soft = 1.5 / std::min(rx, ry);  // ~1px in radius units
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const double oy = i - cy, ox = j - cx;
          const double u = (ox * cs + oy * sn) / rx;
          const double v = (-ox * sn + oy * cs) / ry;
          const double d = std::sqrt(u * u + v * v);
          const double cov = std::clamp((1.0 - d) / soft + 0.5, 0.0, 1.0);
          if (cov <= 0) continue;
          for (int c = 0; c < 3; ++c) {
            double& px = img.at(0, c, i, j);
            px += (col[c] - px) * alpha * cov;
          }
        }
    } else {
      // triangle via three half-plane distances, consistent winding
      double xs[3], ys[3];
      for (int v = 0; v < 3; ++v) {
        ys[v] = rng.uniform(0.05, 0.95) * h;
        xs[v] = rng.uniform(0.05, 0.95) * w;
      }
      const double area2 = (xs[1] - xs[0]) * (ys[2] - ys[0]) -
                           (xs[2] - xs[0]) * (ys[1] - ys[0]);
      if (std::abs(area2) < 1e-6 * h * w) continue;  // degenerate sliver
      const double flip = area2 > 0 ? 1.0 : -1.0;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          double cov = 1.0;
          for (int e = 0; e < 3 && cov > 0; ++e) {
            const int a = e, b = (e + 1) % 3;
            const double ex = xs[b] - xs[a], ey = ys[b] - ys[a];
            const double elen = std::sqrt(ex * ex + ey * ey);
            // signed distance of pixel center to edge line, inside-positive
            const double d =
                flip * (ex * (i - ys[a]) - ey * (j - xs[a])) / elen;
            cov = std::min(cov, std::clamp(d + 0.5, 0.0, 1.0));
          }
          if (cov <= 0) continue;
          for (int c = 0; c < 3; ++c) {
            double& px = img.at(0, c, i, j);
            px += (col[c] - px) * alpha * cov;
          }
        }
    }
  }

  // band-limited texture: bilinear interpolation of a coarse random grid
  {
    const int cell = 16;
    const int gh = h / cell + 2, gw = w / cell + 2;
    std::vector<double> grid(std::size_t(3) * gh * gw);
    for (double& v : grid) v = rng.uniform(-1, 1);
    const double amp = 0.06;
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < h; ++i) {
        double* row = img.row(0, c, i);
        const double fy = double(i) / cell;
        const int iy = int(fy);
        const double ty = fy - iy;
        for (int j = 0; j < w; ++j) {
          const double fx = double(j) / cell;
          const int ix = int(fx);
          const double tx = fx - ix;
          const double* g = grid.data() + std::size_t(c) * gh * gw;
          const double v00 = g[std::size_t(iy) * gw + ix];
          const double v01 = g[std::size_t(iy) * gw + ix + 1];
          const double v10 = g[std::size_t(iy + 1) * gw + ix];
          const double v11 = g[std::size_t(iy + 1) * gw + ix + 1];
          const double v0 = v00 + (v01 - v00) * tx;
          const double v1 = v10 + (v11 - v10) * tx;
          row[j] += amp * (v0 + (v1 - v0) * ty);
        }
      }
  }

  return clip01(img).template cast<T>();
}

// ---- scene pairs and datasets ----

struct ScenePair {
  Tensor<float> sharp, blurry;
  std::uint64_t scene_seed = 0, noise_seed = 0;
  BlurKernel kernel;
  double noise_sigma = 0;
};

struct DatasetSpec {
  int count = 8;
  int height = 256, width = 256;
  std::uint64_t seed = 1;
  double motion_min_len = 6, motion_max_len = 18;
  double gaussian_min_sigma = 1.0, gaussian_max_sigma = 2.5;
  double p_motion = 0.7;  // probability a pair uses motion (else gaussian)
  double noise_sigma = 0.01;

  void validate() const {
    require(count >= 1, "dataset: count must be >= 1, got ", count);
    require(height >= 64 && width >= 64, "dataset: size must be >= 64x64");
    require(motion_min_len >= 1 && motion_max_len >= motion_min_len,
            "dataset: bad motion length range");
    require(gaussian_min_sigma > 0 && gaussian_max_sigma >= gaussian_min_sigma,
            "dataset: bad gaussian sigma range");
    require(p_motion >= 0 && p_motion <= 1, "dataset: bad motion probability");
    require(noise_sigma >= 0, "dataset: noise sigma must be >= 0");
  }
};

// Pair number `index` of a dataset; independent of every other index.
inline ScenePair make_scene_pair(const DatasetSpec& spec, int index) {
  spec.validate();
  require(index >= 0 && index < spec.count, "make_scene_pair: index ", index,
          " outside [0, ", spec.count, ")");
  ScenePair p;
  p.scene_seed = mix_seed(spec.seed, std::uint64_t(2 * index));
  p.noise_seed = mix_seed(spec.seed, std::uint64_t(2 * index + 1));
  p.noise_sigma = spec.noise_sigma;
  Rng krng(p.noise_seed);
  if (krng.uniform() < spec.p_motion) {
    const double len = krng.uniform(spec.motion_min_len, spec.motion_max_len);
    const double ang = krng.uniform(0, 2 * M_PI);
    p.kernel = make_motion_kernel(len, ang);
  } else {
    p.kernel = make_gaussian_kernel(
        krng.uniform(spec.gaussian_min_sigma, spec.gaussian_max_sigma));
  }
  p.sharp = gen_scene<float>(p.scene_seed, spec.height, spec.width);
  p.blurry = blur(p.sharp, p.kernel, p.noise_sigma, p.noise_seed);
  return p;
}

// ---- patch sampling ----

template <class T>
struct PatchPair {
  Tensor<T> blurry, sharp;
};

// One training example: a shared random crop plus shared Bernoulli(1/2)
// horizontal/vertical flips. Draw order: row offset, col offset, hflip,
// vflip.
template <class T>
PatchPair<T> sample_patch(const Tensor<T>& blurry, const Tensor<T>& sharp,
                          int size, std::uint64_t seed, bool augment = true) {
  require(blurry.shape() == sharp.shape(),
          "sample_patch: pair shapes differ: ", blurry.shape().str(), " vs ",
          sharp.shape().str());
  require(size >= 1, "sample_patch: size must be >= 1");
  require(blurry.h() >= size && blurry.w() >= size, "sample_patch: image ",
          blurry.h(), "x", blurry.w(), " smaller than patch ", size);
  Rng rng(seed);
  const int oy = int(rng.uniform_int(std::uint64_t(blurry.h() - size + 1)));
  const int ox = int(rng.uniform_int(std::uint64_t(blurry.w() - size + 1)));
  const bool hflip = augment && rng.bernoulli();
  const bool vflip = augment && rng.bernoulli();

  auto cut = [&](const Tensor<T>& src) {
    Tensor<T> out(src.n(), src.c(), size, size);
    for (int n = 0; n < src.n(); ++n)
      for (int c = 0; c < src.c(); ++c)
        for (int r = 0; r < size; ++r)
          std::copy_n(src.row(n, c, oy + r) + ox, size, out.row(n, c, r));
    if (hflip) out = flip_horizontal(out);
    if (vflip) out = flip_vertical(out);
    return out;
  };
  return PatchPair<T>{cut(blurry), cut(sharp)};
}

template <class T>
PatchPair<T> sample_patch(const ScenePair& pair, int size, std::uint64_t seed,
                          bool augment = true) {
  return sample_patch(pair.blurry.template cast<T>(),
                      pair.sharp.template cast<T>(), size, seed, augment);
}

// ---- sliding-window tiling ----

struct TileLayout {
  int window = 256, step = 256;
  int h = 0, w = 0;
  std::vector<int> ys, xs;  // tile origins per axis, ascending
};

namespace detail {

inline std::vector<int> tile_origins(int dim, int window, int step) {
  std::vector<int> v;
  for (int o = 0; o + window <= dim; o += step) v.push_back(o);
  if (v.empty() || v.back() + window < dim) v.push_back(dim - window);
  return v;
}

// The tile that owns pixel p along one axis: its regular grid tile when that
// tile fits, otherwise the border-flush tile. Regular tiles therefore win
// every overlap with shifted edge tiles.
inline int owner_origin(int p, int dim, int window, int step) {
  return std::min((p / step) * step, dim - window);
}

}  // namespace detail

inline TileLayout make_tile_layout(int h, int w, int window = 256,
                                   int step = 256) {
  require(window >= 1 && step >= 1 && step <= window,
          "tile layout: need 1 <= step <= window");
  require(h >= window && w >= window, "tile layout: image ", h, "x", w,
          " smaller than window ", window);
  TileLayout t;
  t.window = window;
  t.step = step;
  t.h = h;
  t.w = w;
  t.ys = detail::tile_origins(h, window, step);
  t.xs = detail::tile_origins(w, window, step);
  return t;
}

// Restore an arbitrarily sized image by running the model on fixed windows.
// Every output pixel is written exactly once, from its owning tile. Inputs
// smaller than the window are reflect-padded on the bottom/right, restored,
// and cropped back.
template <class T>
Tensor<T> tiled_inference(const Model<T>& model, const Tensor<T>& image,
                          int window = 256, int step = 256) {
  require(image.n() == 1 && image.c() == 3,
          "tiled_inference: expected a (1,3,H,W) image, got ",
          image.shape().str());
  const int h = image.h(), w = image.w();
  if (h < window || w < window) {
    Tensor<T> padded = reflect_pad(image, 0, std::max(0, window - h), 0,
                                   std::max(0, window - w));
    Tensor<T> restored = tiled_inference(model, padded, window, step);
    Tensor<T> out(1, 3, h, w);
    for (int c = 0; c < 3; ++c)
      for (int r = 0; r < h; ++r)
        std::copy_n(restored.row(0, c, r), w, out.row(0, c, r));
    return out;
  }

  TileLayout lay = make_tile_layout(h, w, window, step);
  Tensor<T> out(1, 3, h, w);
  for (int oy : lay.ys)
    for (int ox : lay.xs) {
      Tensor<T> tile(1, 3, window, window);
      for (int c = 0; c < 3; ++c)
        for (int r = 0; r < window; ++r)
          std::copy_n(image.row(0, c, oy + r) + ox, window, tile.row(0, c, r));
      Tensor<T> restored = model.restore(tile);
      // copy only the pixels this tile owns
      for (int r = 0; r < window; ++r) {
        const int py = oy + r;
        if (detail::owner_origin(py, h, window, step) != oy) continue;
        for (int c = 0; c < 3; ++c) {
          const T* src = restored.row(0, c, r);
          T* dst = out.row(0, c, py);
          for (int q = 0; q < window; ++q) {
            const int px = ox + q;
            if (detail::owner_origin(px, w, window, step) == ox)
              dst[px] = src[q];
          }
        }
      }
    }
  return out;
}

}  // namespace drfk
