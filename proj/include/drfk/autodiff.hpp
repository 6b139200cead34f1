#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "drfk/fft.hpp"
#include "drfk/kernels.hpp"
#include "drfk/tensor.hpp"

// Reverse-mode autodiff over a define-by-run tape. Ops evaluate eagerly, so
// node ids are already a topological order; backward() walks the tape in
// reverse, each node pushing its cotangent into its parents. Graphs are
// rebuilt every step; persistent state (parameters, optimizer moments) lives
// outside, keyed by parameter name.

namespace drfk {

template <class T>
class Graph;

// Cheap handle into a graph; valid for the graph's lifetime.
template <class T>
struct Value {
  Graph<T>* g = nullptr;
  int id = -1;

  const Tensor<T>& val() const { return g->value(id); }
};

template <class T>
class Graph {
 public:
  // Leaf whose gradient nobody asks for (e.g. the input image).
  Value<T> input(Tensor<T> v) {
    return make_leaf(std::move(v), false, std::string());
  }

  // Trainable leaf; registered in creation order so optimizer walks are
  // deterministic. Names must be unique within one graph.
  Value<T> param(const std::string& name, const Tensor<T>& v) {
    require(!name.empty(), "param: empty name");
    for (const auto& [n, id] : params_)
      require(n != name, "param: duplicate name '", name, "'");
    Value<T> out = make_leaf(v, true, name);
    params_.emplace_back(name, out.id);
    return out;
  }

  const Tensor<T>& value(int id) const { return nodes_[id].value; }

  // Gradient of a leaf after backward(); zeros when the loss never reached it.
  Tensor<T> grad_of(Value<T> v) const {
    const Node& nd = nodes_[v.id];
    return nd.grad.empty() ? Tensor<T>(nd.value.shape()) : nd.grad;
  }

  // (name, node id) for every param in registration order.
  const std::vector<std::pair<std::string, int>>& params() const {
    return params_;
  }

  // ---- ops ----

  Value<T> add(Value<T> a, Value<T> b) {
    Tensor<T> y = zip(a.val(), b.val(), [](T x, T z) { return x + z; });
    const int ai = a.id, bi = b.id;
    return make_op(std::move(y), {ai, bi}, [ai, bi](Graph& g, int self) {
      g.add_grad(ai, g.nodes_[self].grad);
      g.add_grad(bi, g.nodes_[self].grad);
    });
  }

  Value<T> subtract(Value<T> a, Value<T> b) {
    Tensor<T> y = zip(a.val(), b.val(), [](T x, T z) { return x - z; });
    const int ai = a.id, bi = b.id;
    return make_op(std::move(y), {ai, bi}, [ai, bi](Graph& g, int self) {
      g.add_grad(ai, g.nodes_[self].grad);
      if (g.needs(bi))
        g.add_grad(bi, map(g.nodes_[self].grad, [](T v) { return -v; }));
    });
  }

  Value<T> scale(Value<T> a, T s) {
    Tensor<T> y = map(a.val(), [s](T v) { return s * v; });
    const int ai = a.id;
    return make_op(std::move(y), {ai}, [ai, s](Graph& g, int self) {
      g.add_grad(ai, map(g.nodes_[self].grad, [s](T v) { return s * v; }));
    });
  }

  Value<T> relu(Value<T> a) {
    note_kink_gap(a.val());
    Tensor<T> y = relu_fwd(a.val());
    const int ai = a.id;
    return make_op(std::move(y), {ai}, [ai](Graph& g, int self) {
      g.add_grad(ai, relu_bwd(g.nodes_[ai].value, g.nodes_[self].grad));
    });
  }

  Value<T> conv2d(Value<T> x, Value<T> w, Value<T> b, int stride, int pad) {
    Tensor<T> y = conv2d_fwd(x.val(), w.val(), b.val(), stride, pad);
    const int xi = x.id, wi = w.id, bi = b.id;
    return make_op(
        std::move(y), {xi, wi, bi}, [xi, wi, bi, stride, pad](Graph& g, int self) {
          const Tensor<T>& gy = g.nodes_[self].grad;
          const Tensor<T>& xv = g.nodes_[xi].value;
          const Tensor<T>& wv = g.nodes_[wi].value;
          if (g.needs(xi))
            g.add_grad(xi, conv2d_adjoint_input(gy, wv, stride, pad, xv.h(),
                                                xv.w()));
          if (g.needs(wi))
            g.add_grad(wi, conv2d_grad_weight(gy, xv, stride, pad, wv.h(),
                                              wv.w()));
          if (g.needs(bi)) g.add_grad(bi, conv2d_grad_bias(gy));
        });
  }

  // Exact adjoint of conv2d with the same kernel/stride/pad, plus a bias on
  // the w.c() output channels; out dims (H-1)*stride + K - 2*pad.
  Value<T> conv2d_transpose(Value<T> x, Value<T> w, Value<T> b, int stride,
                            int pad) {
    Tensor<T> y = conv2d_transpose_fwd(x.val(), w.val(), b.val(), stride, pad);
    const int xi = x.id, wi = w.id, bi = b.id;
    return make_op(
        std::move(y), {xi, wi, bi}, [xi, wi, bi, stride, pad](Graph& g, int self) {
          const Tensor<T>& gy = g.nodes_[self].grad;
          const Tensor<T>& xv = g.nodes_[xi].value;
          const Tensor<T>& wv = g.nodes_[wi].value;
          if (g.needs(xi)) {
            Tensor<T> zb(1, wv.n(), 1, 1);
            g.add_grad(xi, conv2d_fwd(gy, wv, zb, stride, pad));
          }
          if (g.needs(wi))
            g.add_grad(wi, conv2d_grad_weight(xv, gy, stride, pad, wv.h(),
                                              wv.w()));
          if (g.needs(bi)) g.add_grad(bi, conv2d_grad_bias(gy));
        });
  }

  Value<T> downsample2(Value<T> a) {
    Tensor<T> y = avgpool2_fwd(a.val());
    const int ai = a.id;
    return make_op(std::move(y), {ai}, [ai](Graph& g, int self) {
      g.add_grad(ai, avgpool2_bwd(g.nodes_[self].grad));
    });
  }

  Value<T> upsample2(Value<T> a) {
    Tensor<T> y = upsample_nearest2_fwd(a.val());
    const int ai = a.id;
    return make_op(std::move(y), {ai}, [ai](Graph& g, int self) {
      g.add_grad(ai, upsample_nearest2_bwd(g.nodes_[self].grad));
    });
  }

  Value<T> concat(Value<T> a, Value<T> b) {
    Tensor<T> y = concat_channels_fwd(a.val(), b.val());
    const int ai = a.id, bi = b.id;
    const int ca = a.val().c(), cb = b.val().c();
    return make_op(std::move(y), {ai, bi}, [ai, bi, ca, cb](Graph& g, int self) {
      const Tensor<T>& gy = g.nodes_[self].grad;
      if (g.needs(ai)) g.add_grad(ai, slice_channels(gy, 0, ca));
      if (g.needs(bi)) g.add_grad(bi, slice_channels(gy, ca, cb));
    });
  }

  Value<T> slice(Value<T> a, int c0, int len) {
    Tensor<T> y = slice_channels(a.val(), c0, len);
    const int ai = a.id;
    return make_op(std::move(y), {ai}, [ai, c0, len](Graph& g, int self) {
      const Tensor<T>& gy = g.nodes_[self].grad;
      const Tensor<T>& av = g.nodes_[ai].value;
      Tensor<T> gx(av.shape());
      const std::size_t plane = std::size_t(gy.h()) * gy.w();
      for (int n = 0; n < gy.n(); ++n)
        std::copy_n(gy.data() + gy.index(n, 0, 0, 0), plane * len,
                    gx.data() + gx.index(n, c0, 0, 0));
      g.add_grad(ai, std::move(gx));
    });
  }

  // Real 2D FFT with the real planes in channels [0,C) and imaginary planes
  // in [C,2C): (N,C,H,W) -> (N,2C,H,floor(W/2)+1). Backward halves folded
  // columns before applying the weighted adjoint H*W*irfft2, which together
  // form the plain adjoint of this map.
  Value<T> rfft2_op(Value<T> a) {
    HalfSpectrum<T> s = rfft2(a.val());
    Tensor<T> y = concat_channels_fwd(s.re, s.im);
    const int ai = a.id;
    const int ch = a.val().c(), ow = a.val().w();
    return make_op(std::move(y), {ai}, [ai, ch, ow](Graph& g, int self) {
      const Tensor<T>& gy = g.nodes_[self].grad;
      HalfSpectrum<T> gs{slice_channels(gy, 0, ch),
                         slice_channels(gy, ch, ch), ow};
      scale_folded_columns(gs, T(0.5));
      g.add_grad(ai, rfft2_adjoint(gs));
    });
  }

  // Inverse of rfft2_op's layout: (N,2C,H,Wf) with original width ow ->
  // (N,C,H,ow). Backward doubles folded columns of rfft2(gy)/(H*W).
  Value<T> irfft2_op(Value<T> a, int ow) {
    const Tensor<T>& av = a.val();
    require(av.c() % 2 == 0,
            "irfft2_op: needs concatenated real/imag channel pairs, got C = ",
            av.c());
    const int ch = av.c() / 2;
    HalfSpectrum<T> s{slice_channels(av, 0, ch), slice_channels(av, ch, ch),
                      ow};
    Tensor<T> y = irfft2(s);
    const int ai = a.id;
    return make_op(std::move(y), {ai}, [ai](Graph& g, int self) {
      HalfSpectrum<T> gs = irfft2_adjoint(g.nodes_[self].grad);
      scale_folded_columns(gs, T(2));
      g.add_grad(ai, concat_channels_fwd(gs.re, gs.im));
    });
  }

  Value<T> laplacian(Value<T> a) {
    Tensor<T> y = laplacian_fwd(a.val());
    const int ai = a.id;
    return make_op(std::move(y), {ai}, [ai](Graph& g, int self) {
      g.add_grad(ai, laplacian_adjoint(g.nodes_[self].grad));
    });
  }

  Value<T> sum(Value<T> a) {
    Tensor<T> y = Tensor<T>::scalar(sum_all(a.val()));
    const int ai = a.id;
    return make_op(std::move(y), {ai}, [ai](Graph& g, int self) {
      const T gy = g.nodes_[self].grad[0];
      g.add_grad(ai, Tensor<T>::full(g.nodes_[ai].value.shape(), gy));
    });
  }

  // sqrt(sum(x^2) + eps^2), the smooth L2 magnitude; always >= eps > 0 so
  // the derivative x/value is safe.
  Value<T> charbonnier(Value<T> a, T eps) {
    require(eps > T(0), "charbonnier: eps must be positive");
    T ss = 0;
    const Tensor<T>& av = a.val();
    for (std::size_t i = 0; i < av.numel(); ++i) ss += av[i] * av[i];
    const T val = std::sqrt(ss + eps * eps);
    Tensor<T> y = Tensor<T>::scalar(val);
    const int ai = a.id;
    return make_op(std::move(y), {ai}, [ai, val](Graph& g, int self) {
      const T gy = g.nodes_[self].grad[0];
      g.add_grad(ai, map(g.nodes_[ai].value,
                         [gy, val](T v) { return gy * v / val; }));
    });
  }

  // Elementwise sqrt(x^2 + eps^2): the smooth |x| behind the per-pixel loss
  // reduction. Stays shape-preserving so callers pick their own reduction.
  Value<T> charbonnier_map(Value<T> a, T eps) {
    require(eps > T(0), "charbonnier_map: eps must be positive");
    const T e2 = eps * eps;
    Tensor<T> y =
        map(a.val(), [e2](T v) { return T(std::sqrt(v * v + e2)); });
    const int ai = a.id;
    return make_op(std::move(y), {ai}, [ai, e2](Graph& g, int self) {
      const Tensor<T>& gy = g.nodes_[self].grad;
      const Tensor<T>& av = g.nodes_[ai].value;
      g.add_grad(ai, zip(gy, av, [e2](T gyi, T v) {
                   return gyi * v / T(std::sqrt(v * v + e2));
                 }));
    });
  }

  // sum(|x|); subgradient 0 at exactly 0.
  Value<T> abs_sum(Value<T> a) {
    note_kink_gap(a.val());
    T s = 0;
    const Tensor<T>& av = a.val();
    for (std::size_t i = 0; i < av.numel(); ++i) s += std::abs(av[i]);
    Tensor<T> y = Tensor<T>::scalar(s);
    const int ai = a.id;
    return make_op(std::move(y), {ai}, [ai](Graph& g, int self) {
      const T gy = g.nodes_[self].grad[0];
      g.add_grad(ai, map(g.nodes_[ai].value, [gy](T v) {
        return v > T(0) ? gy : (v < T(0) ? -gy : T(0));
      }));
    });
  }

  // Cotangent of a node; only meaningful inside a backprop closure, at which
  // point the node's own cotangent is fully accumulated.
  const Tensor<T>& cotangent(int id) const { return nodes_[id].grad; }

  // Smallest |v| that entered a kinked op (relu, abs) during this graph's
  // forward. Gradient checks use it to reject draws whose finite-difference
  // step would cross a kink.
  double kink_gap() const { return kink_gap_; }

  // Custom op escape hatch; the closure receives (graph, self id) and must
  // push cotangents into every parent it cares about via add_grad.
  Value<T> make_op(Tensor<T> value, std::vector<int> parents,
                   std::function<void(Graph&, int)> backprop) {
    Node nd;
    nd.value = std::move(value);
    nd.parents = std::move(parents);
    nd.backprop = std::move(backprop);
    for (int p : nd.parents) nd.needs = nd.needs || nodes_[p].needs;
    nodes_.push_back(std::move(nd));
    return Value<T>{this, int(nodes_.size()) - 1};
  }

  bool needs(int id) const { return nodes_[id].needs; }

  void add_grad(int id, Tensor<T> g) {
    Node& nd = nodes_[id];
    if (!nd.needs) return;
    require(g.shape() == nd.value.shape(), "add_grad: cotangent shape ",
            g.shape().str(), " does not match value shape ",
            nd.value.shape().str());
    if (nd.grad.empty())
      nd.grad = std::move(g);
    else
      accumulate(nd.grad, g);
  }

  // Reverse tape walk from a finite scalar loss. Intermediate cotangents are
  // released as soon as their node has fired; leaf gradients survive.
  void backward(Value<T> loss) {
    require(loss.g == this && loss.id >= 0, "backward: foreign value handle");
    Node& ln = nodes_[loss.id];
    require(ln.value.shape() == Shape{1, 1, 1, 1},
            "backward: loss must be scalar (1,1,1,1), got ",
            ln.value.shape().str());
    require_numeric(std::isfinite(double(ln.value[0])),
                    "backward: non-finite loss value");
    if (!ln.needs) return;
    ln.grad = Tensor<T>::ones(Shape{1, 1, 1, 1});
    for (int i = loss.id; i >= 0; --i) {
      Node& nd = nodes_[i];
      if (nd.grad.empty() || !nd.backprop) continue;
      nd.backprop(*this, i);
      nd.grad = Tensor<T>();
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until some child pushes into it
    std::vector<int> parents;
    std::function<void(Graph&, int)> backprop;  // null for leaves
    bool trainable = false;
    bool needs = false;  // gradient requested here or upstream
    std::string name;
  };

  void note_kink_gap(const Tensor<T>& v) {
    for (std::size_t i = 0; i < v.numel(); ++i)
      kink_gap_ = std::min(kink_gap_, std::abs(double(v[i])));
  }

  Value<T> make_leaf(Tensor<T> v, bool trainable, std::string name) {
    require(!v.empty(), "graph leaf: empty tensor");
    Node nd;
    nd.value = std::move(v);
    nd.trainable = trainable;
    nd.needs = trainable;
    nd.name = std::move(name);
    nodes_.push_back(std::move(nd));
    return Value<T>{this, int(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, int>> params_;
  double kink_gap_ = std::numeric_limits<double>::infinity();
};

}  // namespace drfk
