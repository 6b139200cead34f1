#pragma once

#include <cmath>

#include "drfk/tensor.hpp"

namespace drfk {

// Per-parameter Adam moments. m/v start empty and are allocated on the
// first step; t counts steps taken on this parameter.
template <class T>
struct AdamState {
  Tensor<T> m, v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;
};

// Standard bias-corrected Adam update, in place. A non-finite gradient
// rejects the step before any state is touched.
template <class T>
void adam_step(Tensor<T>& p, const Tensor<T>& g, AdamState<T>& st, double lr) {
  require(lr > 0, "adam_step: lr must be positive, got ", lr);
  require(p.shape() == g.shape(), "adam_step: gradient shape ",
          g.shape().str(), " does not match parameter ", p.shape().str());
  require_numeric(g.all_finite(), "adam_step: non-finite gradient");
  if (st.m.empty()) {
    st.m = Tensor<T>(p.shape());
    st.v = Tensor<T>(p.shape());
  }
  require(st.m.shape() == p.shape(), "adam_step: moment shape ",
          st.m.shape().str(), " does not match parameter ", p.shape().str());
  st.t += 1;
  const double c1 = 1.0 - std::pow(st.beta1, double(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, double(st.t));
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double gi = double(g[i]);
    const double m = st.beta1 * double(st.m[i]) + (1.0 - st.beta1) * gi;
    const double v = st.beta2 * double(st.v[i]) + (1.0 - st.beta2) * gi * gi;
    st.m[i] = T(m);
    st.v[i] = T(v);
    p[i] = T(double(p[i]) - lr * (m / c1) / (std::sqrt(v / c2) + st.delta));
  }
}

// lr_min + (lr_max - lr_min) * (1 + cos(pi*t/T)) / 2; t past T holds lr_min.
inline double cosine_lr(long t, long total, double lr_max, double lr_min) {
  require(total >= 1, "cosine_lr: total steps must be >= 1, got ", total);
  require(t >= 0, "cosine_lr: negative step ", t);
  if (t >= total) return lr_min;
  return lr_min + 0.5 * (lr_max - lr_min) *
                      (1.0 + std::cos(3.141592653589793238462643 * double(t) /
                                      double(total)));
}

}  // namespace drfk
