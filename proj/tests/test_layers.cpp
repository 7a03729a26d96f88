#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "pxl/layers.hpp"
#include "pxl/ops.hpp"
#include "testutil.hpp"

using namespace pxl;
using testutil::check_op;
using testutil::t64;

TEST_CASE("conv2d hand values") {
  Graph g(ScalarMode::f64);
  Var x = g.input(Tensor::full({1, 1, 3, 3}, 1.0, ScalarMode::f64));
  Var w = g.input(Tensor::full({1, 1, 3, 3}, 1.0, ScalarMode::f64));
  Var b = g.input(Tensor::zeros({1}, ScalarMode::f64));
  Var y = ops::conv2d(x, w, b, 1, 1);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.val().at(4) == 9.0);  // center
  CHECK(y.val().at(0) == 4.0);  // corners
  CHECK(y.val().at(2) == 4.0);
  CHECK(y.val().at(6) == 4.0);
  CHECK(y.val().at(8) == 4.0);

  // identity 1x1 kernel passes the input through
  Rng rng(9);
  Var xr = g.input(Tensor::gaussian({2, 1, 4, 4}, 0, 1, rng, ScalarMode::f64));
  Var wi = g.input(t64({1, 1, 1, 1}, {1.0}));
  Var yi = ops::conv2d(xr, wi, g.input(Tensor::zeros({1}, ScalarMode::f64)), 1, 0);
  for (i64 i = 0; i < xr.numel(); ++i) CHECK(yi.val().at(i) == xr.val().at(i));

  CHECK_THROWS_AS(ops::conv2d(x, g.input(Tensor::zeros({1, 1, 2, 2}, ScalarMode::f64)),
                              b, 1, 0),
                  ShapeError);
  // non-integral output extent: (4 - 3) % 2 != 0
  Var x4 = g.input(Tensor::zeros({1, 1, 4, 4}, ScalarMode::f64));
  CHECK_THROWS_AS(ops::conv2d(x4, w, b, 2, 0), ShapeError);
}

TEST_CASE("conv2d matches the six-loop oracle") {
  for (int seed = 0; seed < 26; ++seed) {
    Rng rng(u64(seed) + 500);
    const i64 B = 1 + i64(rng.below(2));
    const i64 C = 1 + i64(rng.below(3));
    const i64 OC = 1 + i64(rng.below(4));
    const i64 H = 4 + i64(rng.below(6));
    const i64 W = 4 + i64(rng.below(6));
    const int k = rng.below(2) ? 3 : 1;
    const int pad = k == 3 ? int(rng.below(2)) : 0;
    const int stride = 1;
    if ((H + 2 * pad - k) % stride != 0) continue;
    Graph g(ScalarMode::f64);
    Tensor xt = Tensor::gaussian({B, C, H, W}, 0, 1, rng, ScalarMode::f64);
    Tensor wt = Tensor::gaussian({OC, C, k, k}, 0, 1, rng, ScalarMode::f64);
    Tensor bt = Tensor::gaussian({OC}, 0, 1, rng, ScalarMode::f64);
    Var y = ops::conv2d(g.input(xt.clone()), g.input(wt.clone()), g.input(bt.clone()),
                        stride, pad);
    Tensor expect = oracle::conv2d_6loop(xt, wt, bt, stride, pad);
    REQUIRE(y.shape() == expect.shape());
    for (i64 i = 0; i < expect.numel(); ++i)
      CHECK(testutil::rel_diff(y.val().at(i), expect.at(i)) < 1e-12);
  }
}

TEST_CASE("conv2d gradients") {
  Rng rng(77);
  Tensor x = Tensor::gaussian({1, 2, 5, 5}, 0, 1, rng, ScalarMode::f64);
  Tensor w = Tensor::gaussian({3, 2, 3, 3}, 0, 0.5, rng, ScalarMode::f64);
  Tensor b = Tensor::gaussian({3}, 0, 0.5, rng, ScalarMode::f64);
  auto report = check_op(
      [](Graph&, const std::vector<Var>& v) {
        return ops::mean(ops::conv2d(v[0], v[1], v[2], 1, 1));
      },
      {{"x", &x}, {"w", &w}, {"b", &b}});
  CHECK(report.max_rel_err <= 1e-6);
}

TEST_CASE("maxpool values, tie-break and oracle") {
  Graph g(ScalarMode::f64);
  Var x = g.input(t64({1, 1, 2, 2}, {1, 2, 3, 4}));
  Var y = ops::maxpool2d(x, 2, 2);
  CHECK(y.val().at(0) == 4.0);

  // constant input: gradient lands on exactly one cell per window (lowest
  // flat index)
  Graph g2(ScalarMode::f64);
  Tensor c = Tensor::full({1, 1, 4, 4}, 1.0, ScalarMode::f64);
  Var p = g2.param(c);
  Var pooled = ops::maxpool2d(p, 2, 2);
  g2.backward(ops::sum(pooled));
  const Tensor& grad = g2.value(p.id);
  i64 nonzero = 0;
  for (i64 i = 0; i < 16; ++i) nonzero += grad.grad_at(i) != 0 ? 1 : 0;
  CHECK(nonzero == 4);
  CHECK(grad.grad_at(0) == 1.0);  // window (0,0) routes to its first cell
  CHECK(grad.grad_at(2) == 1.0);

  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(u64(seed) + 40);
    Tensor xt = Tensor::gaussian({1, 1, 8, 8}, 0, 1, rng, ScalarMode::f64);
    Graph g3(ScalarMode::f64);
    Var out = ops::maxpool2d(g3.input(xt.clone()), 2, 2);
    Tensor expect = oracle::maxpool_bruteforce(xt, 2, 2);
    for (i64 i = 0; i < expect.numel(); ++i) CHECK(out.val().at(i) == expect.at(i));
  }

  CHECK_THROWS_AS(ops::maxpool2d(g.input(Tensor::zeros({1, 1, 5, 5}, ScalarMode::f64)), 2, 2),
                  ShapeError);

  // maxpool gradient against finite differences (distinct values keep the
  // argmax stable under the probe step)
  Tensor xt = t64({1, 1, 4, 4}, {5, 1, 2, 8, 3, 7, 4, 6, 9, 0, 11, 13, 10, 12, 14, 15});
  auto report = check_op(
      [](Graph&, const std::vector<Var>& v) { return ops::sum(ops::maxpool2d(v[0], 2, 2)); },
      {{"x", &xt}});
  CHECK(report.max_rel_err <= 1e-6);
}

TEST_CASE("batchnorm train normalizes, eval is affine") {
  Rng rng(21);
  // [S x C] rows
  Tensor xt = Tensor::gaussian({64, 3}, 2.0, 3.0, rng, ScalarMode::f64);
  Graph g(ScalarMode::f64);
  Tensor rmean = Tensor::zeros({3}, ScalarMode::f64);
  Tensor rvar = Tensor::full({3}, 1.0, ScalarMode::f64);
  Var gamma = g.input(Tensor::full({3}, 1.0, ScalarMode::f64));
  Var beta = g.input(Tensor::zeros({3}, ScalarMode::f64));
  Var y = ops::batchnorm(g.input(xt.clone()), gamma, beta, rmean, rvar, kBatchNormEps,
                         kBatchNormMomentum, true);
  for (i64 c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    for (i64 r = 0; r < 64; ++r) mean += y.val().at(r * 3 + c);
    mean /= 64;
    for (i64 r = 0; r < 64; ++r) {
      const double d = y.val().at(r * 3 + c) - mean;
      var += d * d;
    }
    var /= 64;
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(var - 1.0) < 1e-3);  // eps shifts variance slightly below 1
  }
  // running stats moved toward the batch statistics
  CHECK(rmean.at(0) != 0.0);

  // eval: running_mean=0, running_var=1, gamma=2, beta=3 -> 2x+3
  Graph ge(ScalarMode::f64);
  Tensor rm0 = Tensor::zeros({3}, ScalarMode::f64);
  Tensor rv1 = Tensor::full({3}, 1.0, ScalarMode::f64);
  Var ye = ops::batchnorm(ge.input(xt.clone()), ge.input(Tensor::full({3}, 2.0, ScalarMode::f64)),
                          ge.input(Tensor::full({3}, 3.0, ScalarMode::f64)), rm0, rv1,
                          kBatchNormEps, kBatchNormMomentum, false);
  for (i64 i = 0; i < 12; ++i) {
    const double expect = 2.0 * xt.at(i) / std::sqrt(1.0 + kBatchNormEps) + 3.0;
    CHECK(testutil::rel_diff(ye.val().at(i), expect) < 1e-12);
  }

  // population of one rejected in train mode
  Graph g1(ScalarMode::f64);
  Tensor rm = Tensor::zeros({2}, ScalarMode::f64), rv = Tensor::full({2}, 1.0, ScalarMode::f64);
  CHECK_THROWS_AS(ops::batchnorm(g1.input(Tensor::zeros({1, 2}, ScalarMode::f64)),
                                 g1.input(Tensor::full({2}, 1.0, ScalarMode::f64)),
                                 g1.input(Tensor::zeros({2}, ScalarMode::f64)), rm, rv,
                                 kBatchNormEps, kBatchNormMomentum, true),
                  ContractError);
}

TEST_CASE("batchnorm gradient matches finite differences") {
  // the probe loss pairs the output with a fixed random tensor; a pure
  // quadratic in the normalized output is nearly x-invariant and only
  // exercises the eps term
  Rng rng(31);
  Tensor x = Tensor::gaussian({12, 3}, 0.5, 1.5, rng, ScalarMode::f64);
  Tensor gamma = Tensor::gaussian({3}, 1.0, 0.2, rng, ScalarMode::f64);
  Tensor beta = Tensor::gaussian({3}, 0.0, 0.2, rng, ScalarMode::f64);
  Tensor probe = Tensor::gaussian({12, 3}, 0.0, 1.0, rng, ScalarMode::f64);
  auto report = check_op(
      [&](Graph& g, const std::vector<Var>& v) {
        Tensor rm = Tensor::zeros({3}, ScalarMode::f64);
        Tensor rv = Tensor::full({3}, 1.0, ScalarMode::f64);
        Var y = ops::batchnorm(v[0], v[1], v[2], rm, rv, kBatchNormEps, kBatchNormMomentum, true);
        Var c = g.input(probe.clone());
        return ops::mean(ops::mul(y, c));
      },
      {{"x", &x}, {"gamma", &gamma}, {"beta", &beta}});
  CHECK(report.max_rel_err <= 1e-5);

  // 4-d layout
  Tensor x4 = Tensor::gaussian({2, 3, 4, 4}, 0.0, 1.0, rng, ScalarMode::f64);
  Tensor probe4 = Tensor::gaussian({2, 3, 4, 4}, 0.0, 1.0, rng, ScalarMode::f64);
  auto report4 = check_op(
      [&](Graph& g, const std::vector<Var>& v) {
        Tensor rm = Tensor::zeros({3}, ScalarMode::f64);
        Tensor rv = Tensor::full({3}, 1.0, ScalarMode::f64);
        Var y = ops::batchnorm(v[0], v[1], v[2], rm, rv, kBatchNormEps, kBatchNormMomentum, true);
        Var c = g.input(probe4.clone());
        return ops::mean(ops::mul(y, c));
      },
      {{"x", &x4}, {"gamma", &gamma}, {"beta", &beta}});
  CHECK(report4.max_rel_err <= 1e-5);
}

TEST_CASE("dropout semantics") {
  Rng data_rng(5);
  Tensor xt = Tensor::gaussian({50}, 0, 1, data_rng, ScalarMode::f64);

  Graph g(ScalarMode::f64);
  Rng r0(1);
  Var x = g.input(xt.clone());
  CHECK(ops::dropout(x, 0.0, true, r0).id == x.id);   // r=0: identity
  CHECK(ops::dropout(x, 0.7, false, r0).id == x.id);  // eval: identity
  CHECK_THROWS_AS(ops::dropout(x, 1.0, true, r0), ContractError);

  // inverted scaling keeps the mean: 1e5 ones at r=0.5
  Graph gm(ScalarMode::f64);
  Rng rm(123);
  Var ones = gm.input(Tensor::full({100000}, 1.0, ScalarMode::f64));
  Var dropped = ops::dropout(ones, 0.5, true, rm);
  double mean = 0;
  for (i64 i = 0; i < dropped.numel(); ++i) mean += dropped.val().at(i);
  mean /= double(dropped.numel());
  CHECK(mean > 0.98);
  CHECK(mean < 1.02);

  // gradient with the mask fixed per rebuild
  Tensor xg = Tensor::gaussian({6, 4}, 0, 1, data_rng, ScalarMode::f64);
  auto report = check_op(
      [](Graph& g2, const std::vector<Var>& v) {
        Rng rng(99);
        return ops::mean(ops::mul(ops::dropout(v[0], 0.5, true, rng), v[0]));
      },
      {{"x", &xg}});
  CHECK(report.max_rel_err <= 1e-5);
}

TEST_CASE("backbone structure") {
  BackboneSpec spec;
  spec.in_channels = 1;
  const auto metas = backbone_tap_metas(spec);
  REQUIRE(metas.size() == 5);
  const i64 strides[] = {1, 2, 4, 8, 8};
  const i64 channels[] = {8, 16, 32, 64, 128};
  for (size_t i = 0; i < 5; ++i) {
    CHECK(metas[i].stride_product == strides[i]);
    CHECK(metas[i].channels == channels[i]);
  }
  CHECK(hypercolumn_dim(spec) == 248);

  // stride_product is 2^(pools before the layer)
  i64 pools = 0;
  for (const auto& m : backbone_all_layers(spec)) {
    CHECK(m.stride_product == (i64(1) << pools));
    if (m.name == "conv1_2" || m.name == "conv2_2" || m.name == "conv3_2") ++pools;
  }

  ParamSet params;
  Rng rng = Rng::stream(7, "init");
  init_backbone(spec, params, rng, ScalarMode::f64);
  Graph g(ScalarMode::f64);
  Rng img_rng(3);
  Var input = g.input(Tensor::gaussian({1, 1, 32, 32}, 0.3, 0.2, img_rng, ScalarMode::f64));
  FeatureMapSet fmaps = backbone_forward(g, spec, params, input, false);
  REQUIRE(fmaps.taps.size() == 5);
  const Shape expect[] = {{1, 8, 32, 32}, {1, 16, 16, 16}, {1, 32, 8, 8}, {1, 64, 4, 4},
                          {1, 128, 4, 4}};
  for (size_t i = 0; i < 5; ++i) CHECK(fmaps.taps[i].shape() == expect[i]);

  // eval-mode forward is a pure function: rebuild bitwise identical
  Graph g2(ScalarMode::f64);
  Var input2 = g2.input(g.value(input.id).clone());
  FeatureMapSet fmaps2 = backbone_forward(g2, spec, params, input2, false);
  for (size_t t = 0; t < 5; ++t)
    CHECK(g.value(fmaps.taps[t].id).bitwise_equal(g2.value(fmaps2.taps[t].id)));

  // unknown tap name
  BackboneSpec bad = spec;
  bad.taps = {"conv9_9"};
  CHECK_THROWS_AS(backbone_tap_metas(bad), ConfigError);

  // single-stage spec taps its only layer at stride 1
  BackboneSpec tiny;
  tiny.in_channels = 1;
  tiny.stages = {{1, 4}};
  tiny.head_channels = 6;
  tiny.taps = {"conv1_1"};
  const auto tmeta = backbone_tap_metas(tiny);
  CHECK(tmeta.size() == 1);
  CHECK(tmeta[0].stride_product == 1);

  // the reference VGG-16 tap set sums to 5568 hypercolumn channels
  BackboneSpec vgg;
  vgg.stages = {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
  vgg.head_channels = 4096;
  vgg.taps = {"conv1_2", "conv2_2", "conv3_3", "conv4_3", "conv5_3", "head"};
  CHECK(hypercolumn_dim(vgg) == 5568);
}

TEST_CASE("backbone rejects wrong input geometry") {
  BackboneSpec spec;
  ParamSet params;
  Rng rng(1);
  init_backbone(spec, params, rng, ScalarMode::f64);
  Graph g(ScalarMode::f64);
  CHECK_THROWS_AS(
      backbone_forward(g, spec, params, g.input(Tensor::zeros({1, 3, 20, 20}, ScalarMode::f64)),
                       false),
      ShapeError);
  CHECK_THROWS_AS(
      backbone_forward(g, spec, params, g.input(Tensor::zeros({1, 2, 32, 32}, ScalarMode::f64)),
                       false),
      ShapeError);
}
