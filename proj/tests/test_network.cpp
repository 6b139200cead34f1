#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "drfk/network.hpp"
#include "fd_check.hpp"

using namespace drfk;

namespace {

NetworkConfig micro_cfg() {
  NetworkConfig c;
  c.levels = 2;
  c.blocks_per_stage = 1;
  c.base_channels = 4;
  c.block_kind = BlockKind::res_fft_conv;
  c.conv_kind = ConvKind::do_conv;
  c.seed = 7;
  return c;
}

template <class T>
Tensor<T> random_image(int n, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> t(n, 3, h, w);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = T(rng.uniform());
  return t;
}

}  // namespace

TEST_CASE("single-level minimal model has exactly 265 parameters") {
  // entry 3->2 (56) + two blocks of two 2->2 3x3 convs (76 each)
  // + head 2->3 (57) = 265.
  NetworkConfig c;
  c.levels = 1;
  c.blocks_per_stage = 1;
  c.base_channels = 2;
  c.block_kind = BlockKind::resblock;
  c.conv_kind = ConvKind::plain;
  auto m = Model<float>::build(c);
  REQUIRE(m.param_count() == 265);
  REQUIRE(m.param_count_training() == 265);
  REQUIRE(m.layers().size() == 6);  // entry, 2x(s1,s2), head
  REQUIRE(m.fft_uses().empty());
}

TEST_CASE("parameter totals of the four standard variants") {
  struct Row {
    int blocks;
    BlockKind bk;
    ConvKind ck;
    long long infer, train;
    double reference;  // published size, matched within 5%
  };
  const Row rows[] = {
      {8, BlockKind::resblock, ConvKind::plain, 6663811, 6663811, 6.8e6},
      {8, BlockKind::res_fft_conv, ConvKind::do_conv, 9430659, 10053468,
       9.6e6},
      {4, BlockKind::res_fft_conv, ConvKind::do_conv, 4947075, 5279580,
       5.1e6},
      {20, BlockKind::res_fft_conv, ConvKind::do_conv, 22881411, 24375132,
       23.0e6},
  };
  for (const Row& r : rows) {
    NetworkConfig c;
    c.blocks_per_stage = r.blocks;
    c.block_kind = r.bk;
    c.conv_kind = r.ck;
    CAPTURE(r.blocks, int(r.bk), int(r.ck));
    auto m = Model<float>::build(c);
    REQUIRE(m.param_count() == r.infer);
    REQUIRE(m.param_count_training() == r.train);
    REQUIRE(std::abs(m.param_count() - r.reference) / r.reference < 0.05);
  }
}

TEST_CASE("forward emits one restored image per scale") {
  NetworkConfig c;
  c.levels = 3;
  c.blocks_per_stage = 1;
  c.base_channels = 4;
  c.seed = 3;
  auto m = Model<float>::build(c);
  auto img = random_image<float>(2, 32, 48, 11);
  Graph<float> g;
  auto outs = m.forward(g, img);
  REQUIRE(outs.size() == 3);
  CHECK(outs[0].val().shape() == Shape{2, 3, 32, 48});
  CHECK(outs[1].val().shape() == Shape{2, 3, 16, 24});
  CHECK(outs[2].val().shape() == Shape{2, 3, 8, 12});

  SECTION("input not divisible by 2^(levels-1) is rejected") {
    auto bad = random_image<float>(1, 30, 48, 12);
    Graph<float> g2;
    REQUIRE_THROWS_AS(m.forward(g2, bad), Error);
  }
  SECTION("non-3-channel input is rejected") {
    Graph<float> g2;
    REQUIRE_THROWS_AS(m.forward(g2, Tensor<float>(1, 2, 32, 32)), Error);
  }
}

TEST_CASE("freshly built model is the identity at every scale") {
  // Residual heads start at zero, so out[k] == pyramid[k] bit for bit.
  for (ConvKind ck : {ConvKind::plain, ConvKind::do_conv}) {
    NetworkConfig c = micro_cfg();
    c.conv_kind = ck;
    auto m = Model<float>::build(c);
    auto img = random_image<float>(1, 16, 16, 5);
    Graph<float> g;
    auto outs = m.forward(g, img);
    auto pyr = image_pyramid(img, c.levels);
    REQUIRE(outs.size() == pyr.size());
    for (std::size_t k = 0; k < outs.size(); ++k)
      REQUIRE(outs[k].val() == pyr[k]);
  }
}

TEST_CASE("build is deterministic in the seed") {
  NetworkConfig c = micro_cfg();
  auto a = Model<float>::build(c);
  auto b = Model<float>::build(c);
  REQUIRE(a.named_params().size() == b.named_params().size());
  for (std::size_t i = 0; i < a.named_params().size(); ++i) {
    REQUIRE(a.named_params()[i].first == b.named_params()[i].first);
    REQUIRE(a.named_params()[i].second == b.named_params()[i].second);
  }
  c.seed = 8;
  auto d = Model<float>::build(c);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.named_params().size(); ++i)
    if (!(a.named_params()[i].second == d.named_params()[i].second))
      any_diff = true;
  REQUIRE(any_diff);
}

TEST_CASE("folding collapses factored kernels without changing outputs") {
  NetworkConfig c = micro_cfg();
  auto m = Model<float>::build(c);
  // Move away from the identity-initialized state first.
  {
    Rng rng(21);
    for (const auto& [name, unused] : m.named_params()) {
      Tensor<float>& t = m.param(name);
      for (std::size_t i = 0; i < t.numel(); ++i)
        t[i] += float(0.05 * (2 * rng.uniform() - 1));
    }
  }
  auto folded = fold_for_inference(m);
  REQUIRE(folded.folded());
  REQUIRE(folded.param_count() == m.param_count());
  REQUIRE(folded.param_count_training() == folded.param_count());
  REQUIRE(m.param_count_training() > m.param_count());

  for (std::uint64_t s = 0; s < 5; ++s) {
    auto img = random_image<float>(1, 16, 16, 100 + s);
    auto full = m.restore(img);
    auto fast = folded.restore(img);
    REQUIRE(max_abs_diff(full, fast) <= 1e-5f);
  }

  SECTION("folding twice equals folding once") {
    auto twice = fold_for_inference(folded);
    REQUIRE(twice.named_params().size() == folded.named_params().size());
    for (std::size_t i = 0; i < twice.named_params().size(); ++i) {
      REQUIRE(twice.named_params()[i].first == folded.named_params()[i].first);
      REQUIRE(twice.named_params()[i].second ==
              folded.named_params()[i].second);
    }
  }
}

TEST_CASE("stream taps surface the two block outputs") {
  NetworkConfig c = micro_cfg();
  auto m = Model<float>::build(c);
  auto img = random_image<float>(1, 16, 16, 9);
  Graph<float> g;
  StreamTaps<float> taps;
  taps.block = "db0.b0";
  auto outs = m.forward(g, img, &taps);
  REQUIRE(taps.found);
  REQUIRE(taps.yfft.id >= 0);
  REQUIRE(taps.yres.id >= 0);
  CHECK(taps.yfft.val().shape() == Shape{1, c.base_channels, 16, 16});
  CHECK(taps.yres.val().shape() == Shape{1, c.base_channels, 16, 16});

  StreamTaps<float> missing;
  missing.block = "db9.b9";
  Graph<float> g2;
  m.forward(g2, img, &missing);
  REQUIRE_FALSE(missing.found);
}

TEST_CASE("unknown parameter name is rejected") {
  auto m = Model<float>::build(micro_cfg());
  REQUIRE_THROWS_AS(m.param("nope.w"), Error);
  REQUIRE_NOTHROW(m.param("eb0.entry.wq"));  // 3x3 convs are factored here
  REQUIRE_NOTHROW(m.param("scm1.fuse.w"));   // 1x1 convs stay plain
  REQUIRE_NOTHROW(m.param("db0.b0.s1.wq"));
}

TEST_CASE("end-to-end gradients match finite differences") {
  // 2 levels, 1 block, 4 base channels, 16x16: small enough for central
  // differences through the whole net, still exercising every layer kind.
  NetworkConfig c = micro_cfg();

  const std::vector<std::string> probes = {
      "eb0.entry.wq", "eb0.b0.s1.wq", "eb0.b0.s1.d", "eb0.b0.f1.w",
      "down0.wq",     "scm1.c1.wq",   "scm1.fuse.w", "eb1.fuse.w",
      "aff0.c1.w",    "aff0.c2.wq",   "db1.b0.f2.b", "up1.w",
      "db0.merge.w",  "db0.b0.s2.wq", "db0.head.wq", "db0.head.b"};

  int done = 0;
  for (std::uint64_t seed = 1; seed < 4; ++seed) {
    auto mcfg = c;
    mcfg.seed = seed;
    auto m = Model<double>::build(mcfg);
    // Zero heads block gradient flow upstream; give them small random
    // weights so the check reaches every layer.
    {
      Rng hr(seed + 1000);
      for (const char* hn : {"db0.head.wq", "db1.head.wq"}) {
        Tensor<double>& h = m.param(hn);
        for (std::size_t i = 0; i < h.numel(); ++i)
          h[i] = 0.3 * (2 * hr.uniform() - 1);
      }
    }
    auto img = random_image<double>(1, 16, 16, seed + 50);
    auto target0 = random_image<double>(1, 16, 16, seed + 60);
    auto target1 = avgpool2_fwd(target0);

    auto eval = [&](Graph<double>* keep) {
      Graph<double> local;
      Graph<double>& g = keep ? *keep : local;
      auto outs = m.forward(g, img);
      Value<double> t0 = g.input(target0), t1 = g.input(target1);
      Value<double> loss =
          g.add(g.charbonnier(g.subtract(outs[0], t0), 1e-3),
                g.charbonnier(g.subtract(outs[1], t1), 1e-3));
      if (keep) g.backward(loss);
      return loss.val()[0];
    };

    Graph<double> g;
    eval(&g);
    // A whole network always has some relu input near zero, so per-seed kink
    // rejection is hopeless here; instead keep the step small enough that a
    // crossing perturbs the quotient by less than the 1e-3 budget.
    const double h = 1e-5;

    std::map<std::string, Tensor<double>> grads;
    for (const auto& [name, id] : g.params())
      grads.emplace(name, g.grad_of(Value<double>{&g, id}));

    Rng rng(seed + 7);
    double worst = 0;
    for (const std::string& name : probes) {
      double e = fdtest::fd_max_rel([&] { return eval(nullptr); },
                                    m.param(name), grads.at(name), rng, 4, h);
      CAPTURE(name, seed);
      CHECK(e <= 1e-3);
      worst = std::max(worst, e);
    }
    INFO("seed " << seed << " worst rel err " << worst);
    ++done;
  }
  REQUIRE(done == 3);
}
