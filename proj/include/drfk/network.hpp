#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "drfk/blocks.hpp"

// Multi-scale encoder-decoder restoration network. Three stacked scales by
// default: each encoder stage downsamples by a strided conv and merges a
// shallow feature extractor run on the downsampled image; each decoder stage
// fuses cross-scale features, runs its block stack, and emits a residual that
// is added back to the blurry image at that scale.
//
// The model owns a flat named-parameter registry plus a layer manifest, so
// the same description drives forward wiring, checkpointing, parameter
// counting, and analytical cost estimates.

namespace drfk {

enum class BlockKind { resblock, res_fft_conv };
enum class ConvKind { plain, do_conv };

inline const char* to_string(BlockKind k) {
  return k == BlockKind::resblock ? "resblock" : "res_fft_conv";
}
inline const char* to_string(ConvKind k) {
  return k == ConvKind::plain ? "plain" : "do_conv";
}

inline BlockKind parse_block_kind(const std::string& s) {
  if (s == "resblock") return BlockKind::resblock;
  if (s == "res_fft_conv") return BlockKind::res_fft_conv;
  throw Error(detail::cat("unknown block kind \"", s,
                          "\" (expected resblock or res_fft_conv)"));
}
inline ConvKind parse_conv_kind(const std::string& s) {
  if (s == "plain") return ConvKind::plain;
  if (s == "do_conv") return ConvKind::do_conv;
  throw Error(
      detail::cat("unknown conv kind \"", s, "\" (expected plain or do_conv)"));
}

struct NetworkConfig {
  int levels = 3;
  int blocks_per_stage = 8;
  int base_channels = 32;
  BlockKind block_kind = BlockKind::res_fft_conv;
  ConvKind conv_kind = ConvKind::do_conv;
  std::uint64_t seed = 0;

  int width(int level) const { return base_channels << level; }

  void validate() const {
    require(levels >= 1, "config: levels must be >= 1, got ", levels);
    require(blocks_per_stage >= 1, "config: blocks_per_stage must be >= 1, got ",
            blocks_per_stage);
    require(base_channels >= 1, "config: base_channels must be >= 1, got ",
            base_channels);
    // The shallow extractor at level k splits width(k) into quarters and
    // reserves 3 image channels, so multi-level models need even base width.
    require(levels == 1 || (base_channels % 2 == 0 && 2 * base_channels >= 4),
            "config: levels >= 2 requires even base_channels >= 2, got ",
            base_channels);
  }
};

// One conv-like layer: enough to rebuild its parameters, wire it, and price
// it at any input resolution. `divisor` is the spatial scale of the layer's
// input relative to the network input.
struct LayerDesc {
  std::string name;
  int cin = 0, cout = 0, k = 1, stride = 1, pad = 0;
  bool transpose = false;
  bool spectral = false;  // 1x1 conv applied on the half-spectrum grid
  bool relu = false;
  bool do_conv = false;  // stored as factored W/D pair instead of a kernel
  bool zero_init = false;
  int divisor = 1;
};

// One forward+inverse real-FFT pair over `channels` feature channels at the
// given scale; kept for the separate transform-cost report.
struct FftUse {
  int channels = 0;
  int divisor = 1;
};

// Requests the two stream outputs of one named block during forward.
template <class T>
struct StreamTaps {
  std::string block;  // block prefix, e.g. "db0.b7"
  Value<T> yfft, yres;
  bool found = false;
};

// Average-pool pyramid; level k holds the input at 1/2^k scale. Shared by
// the network input path and the multi-scale loss targets.
template <class T>
std::vector<Tensor<T>> image_pyramid(const Tensor<T>& img, int levels) {
  require(levels >= 1, "image_pyramid: levels must be >= 1, got ", levels);
  std::vector<Tensor<T>> p;
  p.reserve(size_t(levels));
  p.push_back(img);
  for (int k = 1; k < levels; ++k) p.push_back(avgpool2_fwd(p.back()));
  return p;
}

template <class T>
class Model {
 public:
  using Param = std::pair<std::string, Tensor<T>>;

  Model() = default;

  static Model build(const NetworkConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg_ = cfg;
    Rng rng(cfg.seed);
    const int K = cfg.levels;
    const int B = cfg.blocks_per_stage;

    m.add_conv("eb0.entry", 3, cfg.width(0), 3, 1, 1, rng,
               ConvFlags{.relu = true});
    for (int j = 0; j < B; ++j)
      m.add_block("eb0.b" + std::to_string(j), cfg.width(0), 1, rng);
    for (int k = 1; k < K; ++k) {
      const int c = cfg.width(k), div = 1 << k;
      m.add_conv("down" + std::to_string(k - 1), cfg.width(k - 1), c, 3, 2, 1,
                 rng, ConvFlags{.relu = true, .divisor = div / 2});
      const std::string scm = "scm" + std::to_string(k);
      m.add_conv(scm + ".c1", 3, c / 4, 3, 1, 1, rng,
                 ConvFlags{.relu = true, .divisor = div});
      m.add_conv(scm + ".c2", c / 4, c / 2, 1, 1, 0, rng,
                 ConvFlags{.relu = true, .divisor = div});
      m.add_conv(scm + ".c3", c / 2, c / 2, 3, 1, 1, rng,
                 ConvFlags{.relu = true, .divisor = div});
      m.add_conv(scm + ".c4", c / 2, c - 3, 1, 1, 0, rng,
                 ConvFlags{.divisor = div});
      m.add_conv(scm + ".fuse", c, c, 1, 1, 0, rng, ConvFlags{.divisor = div});
      m.add_conv("eb" + std::to_string(k) + ".fuse", 2 * c, c, 1, 1, 0, rng,
                 ConvFlags{.divisor = div});
      for (int j = 0; j < B; ++j)
        m.add_block("eb" + std::to_string(k) + ".b" + std::to_string(j), c,
                    div, rng);
    }
    int ctot = 0;
    for (int k = 0; k < K; ++k) ctot += cfg.width(k);
    for (int k = 0; k + 1 < K; ++k) {
      const std::string aff = "aff" + std::to_string(k);
      const int c = cfg.width(k), div = 1 << k;
      m.add_conv(aff + ".c1", ctot, c, 1, 1, 0, rng,
                 ConvFlags{.relu = true, .divisor = div});
      m.add_conv(aff + ".c2", c, c, 3, 1, 1, rng, ConvFlags{.divisor = div});
    }
    for (int k = K - 1; k >= 0; --k) {
      const std::string db = "db" + std::to_string(k);
      const int c = cfg.width(k), div = 1 << k;
      if (k < K - 1)
        m.add_conv(db + ".merge", 2 * c, c, 1, 1, 0, rng,
                   ConvFlags{.relu = true, .divisor = div});
      for (int j = 0; j < B; ++j)
        m.add_block(db + ".b" + std::to_string(j), c, div, rng);
      if (k > 0)
        m.add_conv("up" + std::to_string(k), c, cfg.width(k - 1), 4, 2, 1, rng,
                   ConvFlags{.relu = true, .transpose = true, .divisor = div});
      m.add_conv(db + ".head", c, 3, 3, 1, 1, rng,
                 ConvFlags{.zero_init = true, .divisor = div});
    }
    return m;
  }

  const NetworkConfig& config() const { return cfg_; }
  bool folded() const { return folded_; }
  const std::vector<LayerDesc>& layers() const { return layers_; }
  const std::vector<FftUse>& fft_uses() const { return fft_uses_; }
  const std::vector<Param>& named_params() const { return params_; }

  Tensor<T>& param(const std::string& name) {
    auto it = pindex_.find(name);
    require(it != pindex_.end(), "model: no parameter named \"", name, "\"");
    return params_[size_t(it->second)].second;
  }
  const Tensor<T>& param(const std::string& name) const {
    auto it = pindex_.find(name);
    require(it != pindex_.end(), "model: no parameter named \"", name, "\"");
    return params_[size_t(it->second)].second;
  }

  // Deployed size: every layer counted as one folded kernel plus bias.
  long long param_count() const {
    long long n = 0;
    for (const LayerDesc& L : layers_)
      n += (long long)L.cout * L.cin * L.k * L.k + L.cout;
    return n;
  }

  // Scalars actually stored (and trained); exceeds param_count() while any
  // layer still holds its factored form.
  long long param_count_training() const {
    long long n = 0;
    for (const Param& p : params_) n += (long long)p.second.numel();
    return n;
  }

  // Collapse every factored layer into its equivalent kernel. Behavior
  // preserving and idempotent.
  Model folded_copy() const {
    Model m;
    m.cfg_ = cfg_;
    m.folded_ = true;
    m.layers_ = layers_;
    m.fft_uses_ = fft_uses_;
    for (LayerDesc& L : m.layers_) {
      if (L.do_conv) {
        Tensor<T> kern = doconv_fold_kernel(param(L.name + ".wq"),
                                            param(L.name + ".d"), L.k, L.k);
        m.push_param(L.name + ".w", std::move(kern));
        m.push_param(L.name + ".b", param(L.name + ".b"));
        L.do_conv = false;
      } else {
        m.push_param(L.name + ".w", param(L.name + ".w"));
        m.push_param(L.name + ".b", param(L.name + ".b"));
      }
      m.lindex_[L.name] = int(&L - m.layers_.data());
    }
    return m;
  }

  // Runs the network on a (N,3,H,W) image batch; H and W must be divisible
  // by 2^(levels-1). Returns the restored image per scale, full resolution
  // first: out[k] = head_k(features) + pyramid[k].
  std::vector<Value<T>> forward(Graph<T>& g, const Tensor<T>& image,
                                StreamTaps<T>* taps = nullptr) const {
    const int K = cfg_.levels;
    require(image.c() == 3, "forward: expected a 3-channel image batch, got ",
            image.c(), " channels");
    const int div = 1 << (K - 1);
    require(image.h() % div == 0 && image.w() % div == 0,
            "forward: input ", image.h(), "x", image.w(),
            " must be divisible by 2^(levels-1) = ", div);

    std::map<std::string, Value<T>> pv;
    for (const Param& p : params_) pv.emplace(p.first, g.param(p.first, p.second));

    std::vector<Value<T>> imgs;
    for (Tensor<T>& t : image_pyramid(image, K))
      imgs.push_back(g.input(std::move(t)));

    std::vector<Value<T>> enc(static_cast<size_t>(K));
    Value<T> x = apply(g, pv, "eb0.entry", imgs[0]);
    for (int j = 0; j < cfg_.blocks_per_stage; ++j)
      x = run_block(g, pv, "eb0.b" + std::to_string(j), x, taps);
    enc[0] = x;
    for (int k = 1; k < K; ++k) {
      x = apply(g, pv, "down" + std::to_string(k - 1), x);
      const std::string scm = "scm" + std::to_string(k);
      Value<T> s = apply(g, pv, scm + ".c1", imgs[size_t(k)]);
      s = apply(g, pv, scm + ".c2", s);
      s = apply(g, pv, scm + ".c3", s);
      s = apply(g, pv, scm + ".c4", s);
      s = apply(g, pv, scm + ".fuse", g.concat(imgs[size_t(k)], s));
      x = apply(g, pv, "eb" + std::to_string(k) + ".fuse", g.concat(x, s));
      for (int j = 0; j < cfg_.blocks_per_stage; ++j)
        x = run_block(g, pv, "eb" + std::to_string(k) + ".b" + std::to_string(j),
                      x, taps);
      enc[size_t(k)] = x;
    }

    // Cross-scale fusion: every encoder output resized to the target scale,
    // concatenated shallow-to-deep, then 1x1 + 3x3.
    std::vector<Value<T>> aff(K > 0 ? size_t(K - 1) : 0);
    for (int k = 0; k + 1 < K; ++k) {
      Value<T> cat;
      for (int j = 0; j < K; ++j) {
        Value<T> e = enc[size_t(j)];
        for (int t = 0; t < k - j; ++t) e = g.downsample2(e);
        for (int t = 0; t < j - k; ++t) e = g.upsample2(e);
        cat = (j == 0) ? e : g.concat(cat, e);
      }
      const std::string aname = "aff" + std::to_string(k);
      aff[size_t(k)] = apply(g, pv, aname + ".c2",
                             apply(g, pv, aname + ".c1", cat));
    }

    std::vector<Value<T>> outs(static_cast<size_t>(K));
    Value<T> up;
    for (int k = K - 1; k >= 0; --k) {
      const std::string db = "db" + std::to_string(k);
      Value<T> z = (k == K - 1)
                       ? enc[size_t(k)]
                       : apply(g, pv, db + ".merge",
                               g.concat(up, aff[size_t(k)]));
      for (int j = 0; j < cfg_.blocks_per_stage; ++j)
        z = run_block(g, pv, db + ".b" + std::to_string(j), z, taps);
      if (k > 0) up = apply(g, pv, "up" + std::to_string(k), z);
      outs[size_t(k)] = g.add(apply(g, pv, db + ".head", z), imgs[size_t(k)]);
    }
    return outs;
  }

  // Full-resolution restoration without keeping the graph around.
  Tensor<T> restore(const Tensor<T>& image) const {
    Graph<T> g;
    return forward(g, image).front().val();
  }

 private:
  struct ConvFlags {
    bool relu = false;
    bool transpose = false;
    bool spectral = false;
    bool zero_init = false;
    int divisor = 1;
  };

  void push_param(const std::string& name, Tensor<T> t) {
    require(pindex_.emplace(name, int(params_.size())).second,
            "model: duplicate parameter \"", name, "\"");
    params_.emplace_back(name, std::move(t));
  }

  void add_conv(const std::string& name, int cin, int cout, int k, int stride,
                int pad, Rng& rng, ConvFlags f) {
    LayerDesc L;
    L.name = name;
    L.cin = cin;
    L.cout = cout;
    L.k = k;
    L.stride = stride;
    L.pad = pad;
    L.transpose = f.transpose;
    L.spectral = f.spectral;
    L.relu = f.relu;
    L.zero_init = f.zero_init;
    L.divisor = f.divisor;
    L.do_conv =
        cfg_.conv_kind == ConvKind::do_conv && k > 1 && !f.transpose;
    if (L.do_conv) {
      DOConvParams<T> p;
      if (f.zero_init) {
        p = DOConvParams<T>::init(cout, cin, k, k, rng);
        p.wq = Tensor<T>(p.wq.shape());  // zero residual head, identity D
      } else {
        p = DOConvParams<T>::init(cout, cin, k, k, rng);
      }
      push_param(name + ".wq", std::move(p.wq));
      push_param(name + ".d", std::move(p.d));
      push_param(name + ".b", std::move(p.b));
    } else {
      // Transposed kernels map input channels (first axis) to output
      // channels (second axis); regular kernels the other way round.
      Tensor<T> w = f.transpose ? init_conv_weight<T>(cin, cout, k, k, rng)
                                : init_conv_weight<T>(cout, cin, k, k, rng);
      if (f.zero_init) w = Tensor<T>(w.shape());
      push_param(name + ".w", std::move(w));
      push_param(name + ".b", Tensor<T>(1, cout, 1, 1));
    }
    lindex_[name] = int(layers_.size());
    layers_.push_back(std::move(L));
  }

  void add_block(const std::string& prefix, int c, int divisor, Rng& rng) {
    add_conv(prefix + ".s1", c, c, 3, 1, 1, rng, ConvFlags{.divisor = divisor});
    add_conv(prefix + ".s2", c, c, 3, 1, 1, rng, ConvFlags{.divisor = divisor});
    if (cfg_.block_kind == BlockKind::res_fft_conv) {
      add_conv(prefix + ".f1", 2 * c, 2 * c, 1, 1, 0, rng,
               ConvFlags{.spectral = true, .divisor = divisor});
      add_conv(prefix + ".f2", 2 * c, 2 * c, 1, 1, 0, rng,
               ConvFlags{.spectral = true, .divisor = divisor});
      fft_uses_.push_back(FftUse{c, divisor});
    }
  }

  const LayerDesc& layer(const std::string& name) const {
    auto it = lindex_.find(name);
    require(it != lindex_.end(), "model: no layer named \"", name, "\"");
    return layers_[size_t(it->second)];
  }

  // Kernel handle for a layer: the stored kernel, or the factored pair
  // folded on-graph so both factors receive gradients.
  Value<T> kernel_value(Graph<T>& g,
                        const std::map<std::string, Value<T>>& pv,
                        const LayerDesc& L) const {
    if (L.do_conv)
      return doconv_fold_op(g, pv.at(L.name + ".wq"), pv.at(L.name + ".d"),
                            L.k, L.k);
    return pv.at(L.name + ".w");
  }

  Value<T> apply(Graph<T>& g, const std::map<std::string, Value<T>>& pv,
                 const std::string& name, Value<T> x) const {
    const LayerDesc& L = layer(name);
    Value<T> y;
    if (L.transpose)
      y = g.conv2d_transpose(x, pv.at(name + ".w"), pv.at(name + ".b"),
                             L.stride, L.pad);
    else
      y = g.conv2d(x, kernel_value(g, pv, L), pv.at(name + ".b"), L.stride,
                   L.pad);
    return L.relu ? g.relu(y) : y;
  }

  Value<T> run_block(Graph<T>& g, const std::map<std::string, Value<T>>& pv,
                     const std::string& prefix, Value<T> z,
                     StreamTaps<T>* taps) const {
    ResBlockVals<T> sp{kernel_value(g, pv, layer(prefix + ".s1")),
                       pv.at(prefix + ".s1.b"),
                       kernel_value(g, pv, layer(prefix + ".s2")),
                       pv.at(prefix + ".s2.b")};
    Value<T>* tf = nullptr;
    Value<T>* tr = nullptr;
    if (taps && taps->block == prefix) {
      tf = &taps->yfft;
      tr = &taps->yres;
      taps->found = true;
    }
    if (cfg_.block_kind == BlockKind::res_fft_conv) {
      FreqConvVals<T> fq{pv.at(prefix + ".f1.w"), pv.at(prefix + ".f1.b"),
                         pv.at(prefix + ".f2.w"), pv.at(prefix + ".f2.b")};
      return res_fft_block_forward(g, z, sp, fq, tf, tr);
    }
    Value<T> yres = spatial_stream_forward(g, z, sp);
    if (tr) *tr = yres;
    return g.add(yres, z);
  }

  NetworkConfig cfg_;
  bool folded_ = false;
  std::vector<LayerDesc> layers_;
  std::vector<FftUse> fft_uses_;
  std::vector<Param> params_;
  std::map<std::string, int> pindex_;
  std::map<std::string, int> lindex_;
};

template <class T>
Model<T> fold_for_inference(const Model<T>& m) {
  return m.folded_copy();
}

}  // namespace drfk
