#pragma once

#include <string>
#include <vector>

#include "drfk/autodiff.hpp"

// Multi-scale training losses. Each takes the K restored scales and their K
// targets and reduces to one scalar:
//   msc   sum_k sqrt(|pred_k - target_k|^2 + eps^2)
//   msed  the same after Laplacian filtering both sides
//   msfr  L1 between the half-spectra, averaged over frequency bins
//   total msc + alpha1 * msed + alpha2 * msfr
//
// msc/msed come in two reductions: `literal` takes the global norm per level
// (one eps under one root, the form the unit values are pinned against);
// `pixel_mean` averages elementwise sqrt(d^2 + eps^2), which keeps magnitudes
// flat across resolutions and batch sizes and is what training uses.

namespace drfk {

enum class LossMode { literal, pixel_mean };

inline const char* to_string(LossMode m) {
  return m == LossMode::literal ? "literal" : "pixel_mean";
}

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "literal") return LossMode::literal;
  if (s == "pixel_mean") return LossMode::pixel_mean;
  throw Error(detail::cat("unknown loss mode \"", s,
                          "\" (expected literal or pixel_mean)"));
}

struct LossWeights {
  double alpha1 = 0.05;  // edge term weight
  double alpha2 = 0.01;  // frequency term weight
  double eps = 1e-3;
  int levels = 3;

  void validate() const {
    require(alpha1 >= 0 && alpha2 >= 0, "loss weights must be >= 0, got ",
            alpha1, " and ", alpha2);
    require(eps > 0, "loss eps must be positive, got ", eps);
    require(levels >= 1, "loss levels must be >= 1, got ", levels);
  }
};

namespace detail {

template <class T>
void check_loss_args(const std::vector<Value<T>>& preds,
                     const std::vector<Value<T>>& targets,
                     const LossWeights& w, const char* who) {
  w.validate();
  require(int(preds.size()) == w.levels && int(targets.size()) == w.levels,
          who, ": expected ", w.levels, " levels, got ", preds.size(),
          " predictions and ", targets.size(), " targets");
  for (std::size_t k = 0; k < preds.size(); ++k)
    require(preds[k].val().shape() == targets[k].val().shape(), who,
            ": level ", k, " shape mismatch ", preds[k].val().shape().str(),
            " vs ", targets[k].val().shape().str());
}

// One level of msc under the chosen reduction.
template <class T>
Value<T> charbonnier_level(Graph<T>& g, Value<T> d, double eps,
                           LossMode mode) {
  if (mode == LossMode::literal) return g.charbonnier(d, T(eps));
  return g.scale(g.sum(g.charbonnier_map(d, T(eps))),
                 T(1.0 / double(d.val().numel())));
}

}  // namespace detail

template <class T>
Value<T> msc_loss(Graph<T>& g, const std::vector<Value<T>>& preds,
                  const std::vector<Value<T>>& targets, const LossWeights& w,
                  LossMode mode = LossMode::literal) {
  detail::check_loss_args(preds, targets, w, "msc_loss");
  Value<T> acc;
  for (int k = 0; k < w.levels; ++k) {
    Value<T> d = g.subtract(preds[size_t(k)], targets[size_t(k)]);
    Value<T> term = detail::charbonnier_level(g, d, w.eps, mode);
    acc = k ? g.add(acc, term) : term;
  }
  return acc;
}

template <class T>
Value<T> msed_loss(Graph<T>& g, const std::vector<Value<T>>& preds,
                   const std::vector<Value<T>>& targets, const LossWeights& w,
                   LossMode mode = LossMode::literal) {
  detail::check_loss_args(preds, targets, w, "msed_loss");
  Value<T> acc;
  for (int k = 0; k < w.levels; ++k) {
    Value<T> d = g.subtract(g.laplacian(preds[size_t(k)]),
                            g.laplacian(targets[size_t(k)]));
    Value<T> term = detail::charbonnier_level(g, d, w.eps, mode);
    acc = k ? g.add(acc, term) : term;
  }
  return acc;
}

// L1 over the real and imaginary parts of the half-spectrum difference,
// divided by the number of stored complex bins per level (N*C*H*(W/2+1)).
template <class T>
Value<T> msfr_loss(Graph<T>& g, const std::vector<Value<T>>& preds,
                   const std::vector<Value<T>>& targets,
                   const LossWeights& w) {
  detail::check_loss_args(preds, targets, w, "msfr_loss");
  Value<T> acc;
  for (int k = 0; k < w.levels; ++k) {
    Value<T> d = g.subtract(preds[size_t(k)], targets[size_t(k)]);
    Value<T> s = g.rfft2_op(d);
    const Shape& ds = d.val().shape();
    const double bins = double(ds.n) * ds.c * ds.h *
                        half_spectrum_width(ds.w);
    Value<T> term = g.scale(g.abs_sum(s), T(1.0 / bins));
    acc = k ? g.add(acc, term) : term;
  }
  return acc;
}

template <class T>
Value<T> total_loss(Graph<T>& g, const std::vector<Value<T>>& preds,
                    const std::vector<Value<T>>& targets,
                    const LossWeights& w, LossMode mode = LossMode::literal) {
  Value<T> l = msc_loss(g, preds, targets, w, mode);
  l = g.add(l, g.scale(msed_loss(g, preds, targets, w, mode), T(w.alpha1)));
  l = g.add(l, g.scale(msfr_loss(g, preds, targets, w), T(w.alpha2)));
  return l;
}

// Tensor-level conveniences: evaluate once on a throwaway graph.
namespace detail {

template <class T>
std::vector<Value<T>> wrap_inputs(Graph<T>& g,
                                  const std::vector<Tensor<T>>& v) {
  std::vector<Value<T>> out;
  out.reserve(v.size());
  for (const Tensor<T>& t : v) out.push_back(g.input(t));
  return out;
}

}  // namespace detail

template <class T>
double msc_loss(const std::vector<Tensor<T>>& preds,
                const std::vector<Tensor<T>>& targets, const LossWeights& w,
                LossMode mode = LossMode::literal) {
  Graph<T> g;
  return double(msc_loss(g, detail::wrap_inputs(g, preds),
                         detail::wrap_inputs(g, targets), w, mode)
                    .val()[0]);
}

template <class T>
double msed_loss(const std::vector<Tensor<T>>& preds,
                 const std::vector<Tensor<T>>& targets, const LossWeights& w,
                 LossMode mode = LossMode::literal) {
  Graph<T> g;
  return double(msed_loss(g, detail::wrap_inputs(g, preds),
                          detail::wrap_inputs(g, targets), w, mode)
                    .val()[0]);
}

template <class T>
double msfr_loss(const std::vector<Tensor<T>>& preds,
                 const std::vector<Tensor<T>>& targets,
                 const LossWeights& w) {
  Graph<T> g;
  return double(msfr_loss(g, detail::wrap_inputs(g, preds),
                          detail::wrap_inputs(g, targets), w)
                    .val()[0]);
}

template <class T>
double total_loss(const std::vector<Tensor<T>>& preds,
                  const std::vector<Tensor<T>>& targets, const LossWeights& w,
                  LossMode mode = LossMode::literal) {
  Graph<T> g;
  return double(total_loss(g, detail::wrap_inputs(g, preds),
                           detail::wrap_inputs(g, targets), w, mode)
                    .val()[0]);
}

}  // namespace drfk
