#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <vector>

#include "drfk/autodiff.hpp"
#include "drfk/fft.hpp"
#include "fd_check.hpp"

using namespace drfk;
using cplx = std::complex<double>;

namespace {

// Full H x W spectrum of one channel plane, rows then columns, all O(N^2).
std::vector<cplx> naive_full_2d(const Tensor<double>& x, int n, int c) {
  const int h = x.h(), w = x.w();
  std::vector<cplx> rows(std::size_t(h) * w);
  for (int r = 0; r < h; ++r) {
    std::vector<double> row(w);
    for (int q = 0; q < w; ++q) row[q] = x.at(n, c, r, q);
    auto fr = dft1d_naive(row);
    for (int v = 0; v < w; ++v) rows[std::size_t(r) * w + v] = fr[v];
  }
  std::vector<cplx> full(std::size_t(h) * w);
  for (int v = 0; v < w; ++v) {
    std::vector<cplx> col(h);
    for (int r = 0; r < h; ++r) col[r] = rows[std::size_t(r) * w + v];
    auto fc = dft1d_naive(col);
    for (int r = 0; r < h; ++r) full[std::size_t(r) * w + v] = fc[r];
  }
  return full;
}

template <class T>
Tensor<T> random_tensor(Shape s, Rng& rng, double bound = 1.0) {
  Tensor<T> t(s);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = T(rng.uniform(-bound, bound));
  return t;
}

template <class T>
HalfSpectrum<T> random_spectrum(int n, int c, int h, int w, Rng& rng) {
  HalfSpectrum<T> s;
  s.orig_w = w;
  const int wf = half_spectrum_width(w);
  s.re = random_tensor<T>(Shape{n, c, h, wf}, rng);
  s.im = random_tensor<T>(Shape{n, c, h, wf}, rng);
  return s;
}

}  // namespace

TEST_CASE("naive DFT: constant, impulse, conjugate symmetry", "[fft]") {
  const int n = 8;
  std::vector<double> constant(n, 0.7);
  auto xc = dft1d_naive(constant);
  CHECK(std::abs(xc[0] - cplx(0.7 * n, 0)) < 1e-12);
  for (int k = 1; k < n; ++k) CHECK(std::abs(xc[k]) < 1e-12);

  std::vector<double> impulse(n, 0.0);
  impulse[0] = 1.0;
  auto xi = dft1d_naive(impulse);
  for (int k = 0; k < n; ++k) CHECK(std::abs(xi[k] - cplx(1, 0)) < 1e-12);

  Rng rng(11);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform(-1, 1);
  auto fx = dft1d_naive(x);
  for (int k = 1; k < n; ++k)
    CHECK(std::abs(fx[n - k] - std::conj(fx[k])) < 1e-12);
}

TEST_CASE("rfft2 matches the naive DFT oracle", "[fft]") {
  Rng rng(101);
  const std::pair<int, int> sizes[] = {{16, 16}, {8, 8},  {7, 5},  {12, 9},
                                       {1, 1},   {1, 8},  {5, 1},  {16, 12},
                                       {9, 16},  {3, 3},  {2, 2},  {15, 15}};
  for (auto [h, w] : sizes) {
    Tensor<float> x = random_tensor<float>(Shape{1, 2, h, w}, rng);
    HalfSpectrum<float> s = rfft2(x);
    REQUIRE(s.wf() == w / 2 + 1);
    auto xd = x.cast<double>();
    for (int c = 0; c < 2; ++c) {
      auto full = naive_full_2d(xd, 0, c);
      for (int r = 0; r < h; ++r)
        for (int v = 0; v < s.wf(); ++v) {
          const cplx want = full[std::size_t(r) * w + v];
          CHECK(std::abs(double(s.re.at(0, c, r, v)) - want.real()) <= 1e-4);
          CHECK(std::abs(double(s.im.at(0, c, r, v)) - want.imag()) <= 1e-4);
        }
    }
  }
}

TEST_CASE("rfft2 trivial spectra: constant and impulse images", "[fft]") {
  const int h = 12, w = 10;
  auto xc = Tensor<float>::full(Shape{1, 1, h, w}, 0.37f);
  HalfSpectrum<float> sc = rfft2(xc);
  CHECK(std::abs(double(sc.re.at(0, 0, 0, 0)) - 0.37 * h * w) <= 1e-4);
  CHECK(std::abs(double(sc.im.at(0, 0, 0, 0))) <= 1e-5);
  for (int r = 0; r < h; ++r)
    for (int v = 0; v < sc.wf(); ++v) {
      if (r == 0 && v == 0) continue;
      CHECK(std::abs(double(sc.re.at(0, 0, r, v))) <= 1e-5);
      CHECK(std::abs(double(sc.im.at(0, 0, r, v))) <= 1e-5);
    }

  Tensor<float> xd(1, 1, h, w);
  xd.at(0, 0, 0, 0) = 1.0f;
  HalfSpectrum<float> sd = rfft2(xd);
  for (int r = 0; r < h; ++r)
    for (int v = 0; v < sd.wf(); ++v) {
      CHECK(std::abs(double(sd.re.at(0, 0, r, v)) - 1.0) <= 1e-5);
      CHECK(std::abs(double(sd.im.at(0, 0, r, v))) <= 1e-5);
    }
}

TEST_CASE("round trip irfft2(rfft2(x)) recovers x", "[fft]") {
  Rng rng(202);
  const std::pair<int, int> sizes[] = {{32, 32}, {31, 17}, {20, 24},
                                       {1, 7},   {16, 1},  {9, 9}};
  for (auto [h, w] : sizes) {
    Tensor<float> x = random_tensor<float>(Shape{2, 2, h, w}, rng);
    CHECK(max_abs_diff(irfft2(rfft2(x)), x) <= 1e-5f);
  }
}

TEST_CASE("single DC bin of H*W inverts to an image of ones", "[fft]") {
  const int h = 6, w = 9;
  HalfSpectrum<float> s;
  s.orig_w = w;
  s.re = Tensor<float>(1, 1, h, half_spectrum_width(w));
  s.im = Tensor<float>(1, 1, h, half_spectrum_width(w));
  s.re.at(0, 0, 0, 0) = float(h * w);
  CHECK(max_abs_diff(irfft2(s), Tensor<float>::ones(Shape{1, 1, h, w})) <=
        1e-5f);
}

TEST_CASE("Parseval with folded-column weights", "[fft]") {
  Rng rng(303);
  for (auto [h, w] : {std::pair<int, int>{9, 7}, {16, 16}, {8, 11}}) {
    Tensor<double> x = random_tensor<double>(Shape{1, 1, h, w}, rng);
    HalfSpectrum<double> s = rfft2(x);

    double spatial = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) spatial += x[i] * x[i];
    const double weighted = weighted_spectrum_dot(s, s) / (double(h) * w);

    // oracle: the same energy summed over the full naive spectrum
    auto full = naive_full_2d(x, 0, 0);
    double full_energy = 0;
    for (const cplx& z : full) full_energy += std::norm(z);
    full_energy /= double(h) * w;

    CHECK(std::abs(weighted - spatial) / spatial <= 1e-4);
    CHECK(std::abs(full_energy - spatial) / spatial <= 1e-4);
    CHECK(std::abs(weighted - full_energy) / full_energy <= 1e-9);
  }
}

TEST_CASE("adjoint dot identities", "[fft]") {
  Rng rng(404);
  for (auto [h, w] : {std::pair<int, int>{8, 6}, {7, 9}, {4, 4}}) {
    Tensor<double> x = random_tensor<double>(Shape{2, 2, h, w}, rng);
    HalfSpectrum<double> s = random_spectrum<double>(2, 2, h, w, rng);

    const double lhs = weighted_spectrum_dot(rfft2(x), s);
    const double rhs = dot_all(x, rfft2_adjoint(s));
    CHECK(std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-9) <= 1e-4);

    Tensor<double> y = random_tensor<double>(Shape{2, 2, h, w}, rng);
    const double lhs2 = dot_all(irfft2(s), y);
    const double rhs2 = weighted_spectrum_dot(s, irfft2_adjoint(y));
    CHECK(std::abs(lhs2 - rhs2) / std::max(std::abs(lhs2), 1e-9) <= 1e-4);
  }
}

TEST_CASE("zero cotangent gives zero gradient", "[fft]") {
  HalfSpectrum<double> zs;
  zs.orig_w = 6;
  zs.re = Tensor<double>(1, 1, 4, 4);
  zs.im = Tensor<double>(1, 1, 4, 4);
  CHECK(max_abs(rfft2_adjoint(zs)) == 0.0);
  CHECK(max_abs(irfft2_adjoint(Tensor<double>(1, 1, 4, 6)).re) == 0.0);
}

TEST_CASE("finite differences through the graph transform ops", "[fft]") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    Tensor<double> x0 = random_tensor<double>(Shape{1, 2, 6, 5}, rng);

    // loss sums both planes, exercising real and imaginary adjoint paths
    auto eval_fwd = [&]() {
      Graph<double> g;
      return g.sum(g.rfft2_op(g.param("x", x0))).val()[0];
    };
    Graph<double> g1;
    Value<double> x = g1.param("x", x0);
    Value<double> loss = g1.sum(g1.rfft2_op(x));
    g1.backward(loss);
    Tensor<double> grad = g1.grad_of(x);
    Rng pick(900 + seed);
    CHECK(fdtest::fd_max_rel(eval_fwd, x0, grad, pick, 20) <= 1e-4);

    // inverse path
    Tensor<double> s0 = random_tensor<double>(Shape{1, 4, 6, 3}, rng);
    auto eval_inv = [&]() {
      Graph<double> g;
      return g.sum(g.irfft2_op(g.param("s", s0), 5)).val()[0];
    };
    Graph<double> g2;
    Value<double> s = g2.param("s", s0);
    g2.backward(g2.sum(g2.irfft2_op(s, 5)));
    Tensor<double> gs = g2.grad_of(s);
    Rng pick2(1900 + seed);
    CHECK(fdtest::fd_max_rel(eval_inv, s0, gs, pick2, 20) <= 1e-4);
  }
}

TEST_CASE("linearity of the forward transform", "[fft]") {
  Rng rng(505);
  Tensor<float> x = random_tensor<float>(Shape{1, 1, 10, 14}, rng);
  Tensor<float> y = random_tensor<float>(Shape{1, 1, 10, 14}, rng);
  const float a = 1.7f, b = -0.6f;
  Tensor<float> mix = zip(x, y, [&](float xv, float yv) { return a * xv + b * yv; });
  HalfSpectrum<float> sm = rfft2(mix);
  HalfSpectrum<float> sx = rfft2(x);
  HalfSpectrum<float> sy = rfft2(y);
  Tensor<float> re = zip(sx.re, sy.re, [&](float u, float v) { return a * u + b * v; });
  Tensor<float> im = zip(sx.im, sy.im, [&](float u, float v) { return a * u + b * v; });
  CHECK(max_abs_diff(sm.re, re) <= 1e-5f * 140);
  CHECK(max_abs_diff(sm.im, im) <= 1e-5f * 140);
}

TEST_CASE("circular shift changes phase only", "[fft]") {
  Rng rng(606);
  const int h = 8, w = 8;
  Tensor<float> x = random_tensor<float>(Shape{1, 1, h, w}, rng);
  Tensor<float> shifted(1, 1, h, w);
  for (int r = 0; r < h; ++r)
    for (int q = 0; q < w; ++q)
      shifted.at(0, 0, (r + 2) % h, (q + 3) % w) = x.at(0, 0, r, q);
  HalfSpectrum<float> sa = rfft2(x);
  HalfSpectrum<float> sb = rfft2(shifted);
  for (int r = 0; r < h; ++r)
    for (int v = 0; v < sa.wf(); ++v) {
      const double ma = std::hypot(double(sa.re.at(0, 0, r, v)),
                                   double(sa.im.at(0, 0, r, v)));
      const double mb = std::hypot(double(sb.re.at(0, 0, r, v)),
                                   double(sb.im.at(0, 0, r, v)));
      CHECK(std::abs(ma - mb) <= 1e-4);
    }
}

TEST_CASE("reconstructed full spectrum is conjugate symmetric", "[fft]") {
  Rng rng(707);
  for (auto [h, w] : {std::pair<int, int>{6, 6}, {7, 10}, {9, 5}}) {
    Tensor<double> x = random_tensor<double>(Shape{1, 1, h, w}, rng);
    HalfSpectrum<double> s = rfft2(x);
    auto full = naive_full_2d(x, 0, 0);
    // mirror the stored half back out and compare against the oracle
    for (int r = 0; r < h; ++r)
      for (int v = 0; v < w; ++v) {
        cplx got;
        if (v < s.wf())
          got = cplx(s.re.at(0, 0, r, v), s.im.at(0, 0, r, v));
        else {
          const int mr = (h - r) % h, mv = w - v;
          got = std::conj(cplx(s.re.at(0, 0, mr, mv), s.im.at(0, 0, mr, mv)));
        }
        CHECK(std::abs(got - full[std::size_t(r) * w + v]) <= 1e-4);
      }
    for (int r = 0; r < h; ++r)
      for (int v = 0; v < w; ++v) {
        const cplx a = full[std::size_t(r) * w + v];
        const cplx b = full[std::size_t((h - r) % h) * w + (w - v) % w];
        CHECK(std::abs(a - std::conj(b)) <= 1e-4);
      }
  }
}

TEST_CASE("forward of inverse is identity on valid half-spectra", "[fft]") {
  Rng rng(808);
  for (auto [h, w] : {std::pair<int, int>{8, 6}, {5, 7}}) {
    Tensor<float> x = random_tensor<float>(Shape{1, 1, h, w}, rng);
    HalfSpectrum<float> s = rfft2(x);  // valid by construction
    HalfSpectrum<float> s2 = rfft2(irfft2(s));
    CHECK(max_abs_diff(s.re, s2.re) <= 1e-5f * h * w);
    CHECK(max_abs_diff(s.im, s2.im) <= 1e-5f * h * w);
  }
}

TEST_CASE("self-conjugate bins of a real input are real", "[fft]") {
  Rng rng(909);
  for (auto [h, w] : {std::pair<int, int>{8, 8}, {7, 7}, {6, 9}, {9, 6}}) {
    Tensor<float> x = random_tensor<float>(Shape{1, 1, h, w}, rng);
    HalfSpectrum<float> s = rfft2(x);
    std::vector<int> rows = {0};
    if (h % 2 == 0) rows.push_back(h / 2);
    std::vector<int> cols = {0};
    if (w % 2 == 0) cols.push_back(w / 2);
    for (int r : rows)
      for (int v : cols) CHECK(std::abs(double(s.im.at(0, 0, r, v))) <= 1e-5);
  }
}
