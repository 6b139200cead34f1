#pragma once

#include <cmath>
#include <string>

#include "drfk/autodiff.hpp"
#include "drfk/rng.hpp"

// Residual building blocks: the plain Conv-ReLU-Conv ResBlock, the frequency
// stream (FFT -> 1x1 convs on concatenated real/imag channels -> inverse
// FFT), their sum Y = Y^fft + Y^res + Z, and DO-Conv with exact folding.
//
// Forward functions take parameter handles already registered on a graph, so
// a kernel slot accepts a plain parameter or a folded DO-Conv kernel alike.

namespace drfk {

// Fan-in scaled uniform init, +-sqrt(1/(Cin*Kh*Kw)).
template <class T>
Tensor<T> init_conv_weight(int cout, int cin, int kh, int kw, Rng& rng) {
  const T bound = T(std::sqrt(1.0 / (double(cin) * kh * kw)));
  return Tensor<T>::uniform(Shape{cout, cin, kh, kw}, bound, rng);
}

// ---- ResBlock ----

template <class T>
struct ResBlockParams {
  Tensor<T> w1, b1, w2, b2;  // 3x3 kernels C->C, biases

  static ResBlockParams init(int c, Rng& rng) {
    ResBlockParams p;
    p.w1 = init_conv_weight<T>(c, c, 3, 3, rng);
    p.b1 = Tensor<T>(1, c, 1, 1);
    p.w2 = init_conv_weight<T>(c, c, 3, 3, rng);
    p.b2 = Tensor<T>(1, c, 1, 1);
    return p;
  }
};

template <class T>
struct ResBlockVals {
  Value<T> w1, b1, w2, b2;
};

template <class T>
ResBlockVals<T> register_params(Graph<T>& g, const ResBlockParams<T>& p,
                                const std::string& prefix) {
  return ResBlockVals<T>{g.param(prefix + ".w1", p.w1),
                         g.param(prefix + ".b1", p.b1),
                         g.param(prefix + ".w2", p.w2),
                         g.param(prefix + ".b2", p.b2)};
}

// Conv3x3-ReLU-Conv3x3 without the skip; the piece shared by both block
// flavors.
template <class T>
Value<T> spatial_stream_forward(Graph<T>& g, Value<T> z,
                                const ResBlockVals<T>& p) {
  return g.conv2d(g.relu(g.conv2d(z, p.w1, p.b1, 1, 1)), p.w2, p.b2, 1, 1);
}

// y = conv(relu(conv(z))) + z
template <class T>
Value<T> res_block_forward(Graph<T>& g, Value<T> z, const ResBlockVals<T>& p) {
  return g.add(spatial_stream_forward(g, z, p), z);
}

template <class T>
Value<T> res_block_forward(Graph<T>& g, Value<T> z, const ResBlockParams<T>& p,
                           const std::string& prefix) {
  return res_block_forward(g, z, register_params(g, p, prefix));
}

// ---- frequency stream ----

template <class T>
struct FreqConvParams {
  Tensor<T> t1, tb1, t2, tb2;  // 1x1 kernels 2C->2C, biases

  static FreqConvParams init(int c, Rng& rng) {
    FreqConvParams p;
    p.t1 = init_conv_weight<T>(2 * c, 2 * c, 1, 1, rng);
    p.tb1 = Tensor<T>(1, 2 * c, 1, 1);
    p.t2 = init_conv_weight<T>(2 * c, 2 * c, 1, 1, rng);
    p.tb2 = Tensor<T>(1, 2 * c, 1, 1);
    return p;
  }
};

template <class T>
struct FreqConvVals {
  Value<T> t1, tb1, t2, tb2;
};

template <class T>
FreqConvVals<T> register_params(Graph<T>& g, const FreqConvParams<T>& p,
                                const std::string& prefix) {
  return FreqConvVals<T>{g.param(prefix + ".t1", p.t1),
                         g.param(prefix + ".tb1", p.tb1),
                         g.param(prefix + ".t2", p.t2),
                         g.param(prefix + ".tb2", p.tb2)};
}

// Y^fft: real FFT, real channels then imaginary channels, 1x1 conv, ReLU,
// 1x1 conv, inverse FFT back to the input width. Every frequency bin shares
// the same 1x1 kernels.
template <class T>
Value<T> fft_stream_forward(Graph<T>& g, Value<T> z,
                            const FreqConvVals<T>& p) {
  const int w = z.val().w();
  Value<T> spec = g.rfft2_op(z);
  Value<T> f = g.conv2d(g.relu(g.conv2d(spec, p.t1, p.tb1, 1, 0)), p.t2,
                        p.tb2, 1, 0);
  return g.irfft2_op(f, w);
}

template <class T>
Value<T> fft_stream_forward(Graph<T>& g, Value<T> z,
                            const FreqConvParams<T>& p,
                            const std::string& prefix) {
  return fft_stream_forward(g, z, register_params(g, p, prefix));
}

// Y = Y^fft + Y^res + Z; the only skip is the final +Z. Optional taps expose
// the two stream outputs for spectrum analysis.
template <class T>
Value<T> res_fft_block_forward(Graph<T>& g, Value<T> z,
                               const ResBlockVals<T>& spatial,
                               const FreqConvVals<T>& freq,
                               Value<T>* tap_fft = nullptr,
                               Value<T>* tap_res = nullptr) {
  Value<T> yfft = fft_stream_forward(g, z, freq);
  Value<T> yres = spatial_stream_forward(g, z, spatial);
  if (tap_fft) *tap_fft = yfft;
  if (tap_res) *tap_res = yres;
  return g.add(g.add(yfft, yres), z);
}

template <class T>
Value<T> res_fft_block_forward(Graph<T>& g, Value<T> z,
                               const ResBlockParams<T>& spatial,
                               const FreqConvParams<T>& freq,
                               const std::string& prefix,
                               Value<T>* tap_fft = nullptr,
                               Value<T>* tap_res = nullptr) {
  return res_fft_block_forward(g, z, register_params(g, spatial,
                                                     prefix + ".spatial"),
                               register_params(g, freq, prefix + ".freq"),
                               tap_fft, tap_res);
}

// ---- DO-Conv ----

// Over-parameterized conv: pointwise factor W (Cout, D_mul, Cin) composed
// with a per-input-channel depthwise factor D (Cin, Kh*Kw, D_mul). Stored as
// 4D tensors with a trailing singleton axis.
template <class T>
struct DOConvParams {
  Tensor<T> wq;  // (Cout, D_mul, Cin, 1)
  Tensor<T> d;   // (Cin, Kh*Kw, D_mul, 1)
  Tensor<T> b;   // (1, Cout, 1, 1)
  int kh = 0, kw = 0, d_mul = 0;

  // Identity composition: D[i] starts as the (partial) identity, so the
  // folded kernel equals W reshaped and training starts at a plain conv.
  static DOConvParams init(int cout, int cin, int kh, int kw, Rng& rng,
                           int d_mul = 0) {
    if (d_mul == 0) d_mul = kh * kw;
    require(d_mul >= kh * kw, "DOConvParams: D_mul ", d_mul,
            " must be >= Kh*Kw = ", kh * kw);
    DOConvParams p;
    p.kh = kh;
    p.kw = kw;
    p.d_mul = d_mul;
    const T bound = T(std::sqrt(1.0 / (double(cin) * kh * kw)));
    p.wq = Tensor<T>::uniform(Shape{cout, d_mul, cin, 1}, bound, rng);
    p.d = Tensor<T>(cin, kh * kw, d_mul, 1);
    for (int i = 0; i < cin; ++i)
      for (int s = 0; s < kh * kw; ++s) p.d.at(i, s, s, 0) = T(1);
    p.b = Tensor<T>(1, cout, 1, 1);
    return p;
  }
};

template <class T>
struct DOConvVals {
  Value<T> wq, d, b;
};

template <class T>
DOConvVals<T> register_params(Graph<T>& g, const DOConvParams<T>& p,
                              const std::string& prefix) {
  return DOConvVals<T>{g.param(prefix + ".wq", p.wq),
                       g.param(prefix + ".d", p.d),
                       g.param(prefix + ".b", p.b)};
}

// folded[o,i,s] = sum_d W[o,d,i] * D[i,s,d]; exact composition of the two
// linear maps, so fold-then-convolve is behavior-preserving.
template <class T>
Tensor<T> doconv_fold_kernel(const Tensor<T>& wq, const Tensor<T>& d, int kh,
                             int kw) {
  const int cout = wq.n(), d_mul = wq.c(), cin = wq.h();
  require(d.shape() == Shape{cin, kh * kw, d_mul, 1},
          "doconv_fold: D shape ", d.shape().str(),
          " inconsistent with W and kernel size");
  Tensor<T> k(cout, cin, kh, kw);
  for (int o = 0; o < cout; ++o)
    for (int i = 0; i < cin; ++i)
      for (int s = 0; s < kh * kw; ++s) {
        T acc = 0;
        for (int dd = 0; dd < d_mul; ++dd)
          acc += wq.at(o, dd, i, 0) * d.at(i, s, dd, 0);
        k.at(o, i, s / kw, s % kw) = acc;
      }
  return k;
}

template <class T>
struct FoldedConv {
  Tensor<T> kernel;  // (Cout, Cin, Kh, Kw)
  Tensor<T> bias;    // passes through unchanged
};

template <class T>
FoldedConv<T> doconv_fold(const DOConvParams<T>& p) {
  return FoldedConv<T>{doconv_fold_kernel(p.wq, p.d, p.kh, p.kw), p.b};
}

// Differentiable fold; gradients flow to both factors:
// gW[o,d,i] = sum_s gK[o,i,s] D[i,s,d], gD[i,s,d] = sum_o gK[o,i,s] W[o,d,i].
template <class T>
Value<T> doconv_fold_op(Graph<T>& g, Value<T> wq, Value<T> d, int kh, int kw) {
  Tensor<T> k = doconv_fold_kernel(wq.val(), d.val(), kh, kw);
  const int wi = wq.id, di = d.id;
  return g.make_op(std::move(k), {wi, di}, [wi, di, kh, kw](Graph<T>& gr,
                                                            int self) {
    const Tensor<T>& gk = gr.cotangent(self);
    const Tensor<T>& wv = gr.value(wi);
    const Tensor<T>& dv = gr.value(di);
    const int cout = wv.n(), d_mul = wv.c(), cin = wv.h();
    const int ks = kh * kw;
    if (gr.needs(wi)) {
      Tensor<T> gw(wv.shape());
      for (int o = 0; o < cout; ++o)
        for (int dd = 0; dd < d_mul; ++dd)
          for (int i = 0; i < cin; ++i) {
            T acc = 0;
            for (int s = 0; s < ks; ++s)
              acc += gk.at(o, i, s / kw, s % kw) * dv.at(i, s, dd, 0);
            gw.at(o, dd, i, 0) = acc;
          }
      gr.add_grad(wi, std::move(gw));
    }
    if (gr.needs(di)) {
      Tensor<T> gd(dv.shape());
      for (int i = 0; i < cin; ++i)
        for (int s = 0; s < ks; ++s)
          for (int dd = 0; dd < d_mul; ++dd) {
            T acc = 0;
            for (int o = 0; o < cout; ++o)
              acc += gk.at(o, i, s / kw, s % kw) * wv.at(o, dd, i, 0);
            gd.at(i, s, dd, 0) = acc;
          }
      gr.add_grad(di, std::move(gd));
    }
  });
}

// Training-time DO-Conv: fold differentiably, then convolve.
template <class T>
Value<T> doconv_forward(Graph<T>& g, Value<T> x, const DOConvVals<T>& p,
                        int kh, int kw, int stride, int pad) {
  return g.conv2d(x, doconv_fold_op(g, p.wq, p.d, kh, kw), p.b, stride, pad);
}

template <class T>
Value<T> doconv_forward(Graph<T>& g, Value<T> x, const DOConvParams<T>& p,
                        const std::string& prefix, int stride, int pad) {
  return doconv_forward(g, x, register_params(g, p, prefix), p.kh, p.kw,
                        stride, pad);
}

}  // namespace drfk
