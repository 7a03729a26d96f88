#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>

#include "pxl/gradcheck.hpp"
#include "pxl/ops.hpp"
#include "pxl/tensor.hpp"

using namespace pxl;

namespace {

Tensor t64(Shape s, const std::vector<double>& v) {
  return Tensor::from_values(std::move(s), v, ScalarMode::f64);
}

// Builds the loss over freshly registered params each call; the shared
// harness for every per-op finite-difference check.
GradCheckReport check_op(const std::function<Var(Graph&, const std::vector<Var>&)>& make_loss,
                         std::vector<NamedParam> params, double eps = 1e-5) {
  GradCheckFn fn = [&](bool want, std::vector<std::vector<double>>* grads) {
    Graph g(ScalarMode::f64, true);
    std::vector<Var> vars;
    for (auto& p : params) vars.push_back(g.param(*p.tensor));
    Var loss = make_loss(g, vars);
    if (want) {
      g.backward(loss);
      grads->clear();
      for (Var v : vars) grads->push_back(grad_or_zeros(g, v));
    }
    return loss.val().at(0);
  };
  return grad_check(fn, params, eps);
}

std::filesystem::path temp_file(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "pxl_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("tensor fills") {
  Tensor z({2, 3}, ScalarMode::f32);
  CHECK(z.numel() == 6);
  for (i64 i = 0; i < 6; ++i) CHECK(z.at(i) == 0.0);

  Rng r1(7), r2(7);
  Tensor g1 = Tensor::gaussian({1}, 0.0, 1e-3, r1, ScalarMode::f64);
  Tensor g2 = Tensor::gaussian({1}, 0.0, 1e-3, r2, ScalarMode::f64);
  CHECK(g1.at(0) == g2.at(0));

  Rng r3(1);
  Tensor big = Tensor::gaussian({10000}, 0.0, 1e-3, r3, ScalarMode::f64);
  double mean = 0;
  for (i64 i = 0; i < big.numel(); ++i) mean += big.at(i);
  mean /= double(big.numel());
  double var = 0;
  for (i64 i = 0; i < big.numel(); ++i) var += (big.at(i) - mean) * (big.at(i) - mean);
  const double sd = std::sqrt(var / double(big.numel() - 1));
  CHECK(sd > 0.8e-3);
  CHECK(sd < 1.2e-3);

  CHECK_THROWS_AS(Tensor({2, 0}, ScalarMode::f32), ShapeError);
  CHECK_THROWS_AS(Tensor({-1}, ScalarMode::f32), ShapeError);
}

TEST_CASE("pxt round trip and corruption paths") {
  Rng rng(11);
  Tensor t = Tensor::gaussian({3, 4, 5}, 0.0, 1.0, rng, ScalarMode::f32);
  auto path = temp_file("roundtrip.pxt");
  save_pxt(t, path.string());
  Tensor back = load_pxt(path.string());
  CHECK(back.bitwise_equal(t));

  Tensor d = Tensor::gaussian({7}, 0.0, 1.0, rng, ScalarMode::f64);
  save_pxt(d, path.string());
  CHECK(load_pxt(path.string()).bitwise_equal(d));
  CHECK(load_pxt_as(path.string(), ScalarMode::f32).mode() == ScalarMode::f32);

  CHECK_THROWS_AS(load_pxt(temp_file("missing.pxt").string()), CorruptionError);
  auto bad = temp_file("bad.pxt");
  std::FILE* f = std::fopen(bad.string().c_str(), "wb");
  std::fwrite("NOPE", 1, 4, f);
  std::fclose(f);
  CHECK_THROWS_AS(load_pxt(bad.string()), CorruptionError);
}

TEST_CASE("matmul values") {
  Graph g(ScalarMode::f64);
  Var eye = g.input(t64({2, 2}, {1, 0, 0, 1}));
  Var m = g.input(t64({2, 2}, {3.5, -2, 0.25, 9}));
  Var prod = ops::matmul(eye, m);
  for (i64 i = 0; i < 4; ++i) CHECK(prod.val().at(i) == m.val().at(i));

  Var a = g.input(t64({2, 2}, {1, 2, 3, 4}));
  Var b = g.input(t64({2, 1}, {5, 6}));
  Var c = ops::matmul(a, b);
  CHECK(c.val().at(0) == 17.0);
  CHECK(c.val().at(1) == 39.0);

  CHECK_THROWS_AS(ops::matmul(a, g.input(t64({3, 1}, {1, 2, 3}))), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(3);
  Tensor a = Tensor::gaussian({3, 4}, 0.0, 1.0, rng, ScalarMode::f64);
  Tensor b = Tensor::gaussian({4, 2}, 0.0, 1.0, rng, ScalarMode::f64);
  auto report = check_op(
      [](Graph& g, const std::vector<Var>& vs) { return ops::sum(ops::matmul(vs[0], vs[1])); },
      {{"a", &a}, {"b", &b}});
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("elementwise values") {
  Graph g(ScalarMode::f64);
  Var x = g.input(t64({3}, {-1, 0, 2}));
  Var r = ops::relu(x);
  CHECK(r.val().at(0) == 0.0);
  CHECK(r.val().at(1) == 0.0);
  CHECK(r.val().at(2) == 2.0);

  Var s = ops::sigmoid(g.input(t64({1}, {0})));
  CHECK(s.val().at(0) == 0.5);

  // d/dx sigmoid at 0 via backward
  Graph g2(ScalarMode::f64);
  Tensor x0 = t64({1}, {0});
  Var p = g2.param(x0);
  Var loss = ops::sum(ops::sigmoid(p));
  g2.backward(loss);
  CHECK(g2.value(p.id).grad_at(0) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("strict mode flags domain and numeric errors") {
  Graph g(ScalarMode::f64, true);
  Var x = g.input(t64({2}, {1.0, -0.5}));
  CHECK_THROWS_AS(ops::log(x), DomainError);
  CHECK_NOTHROW(ops::log(g.input(t64({2}, {1.0, 0.5}))));
  // inf input rejected on entry in strict graphs
  Tensor inf = t64({1}, {1.0});
  inf.set(0, std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(g.input(inf.clone()), NumericError);
}

TEST_CASE("reduce values and max tie-break") {
  Graph g(ScalarMode::f64);
  Var v = g.input(t64({3}, {1, 2, 3}));
  CHECK(ops::sum(v).val().at(0) == 6.0);

  Var m2 = g.input(t64({2, 2}, {1, 3, 3, 5}));
  Var colmean = ops::reduce(m2, ops::Reduce::mean, {0});
  CHECK(colmean.shape() == Shape{2});
  CHECK(colmean.val().at(0) == 2.0);
  CHECK(colmean.val().at(1) == 4.0);

  Graph g3(ScalarMode::f64);
  Tensor tied = t64({3}, {2, 2, 1});
  Var p = g3.param(tied);
  Var mx = ops::reduce(p, ops::Reduce::max, {});
  CHECK(mx.val().at(0) == 2.0);
  g3.backward(mx);
  CHECK(g3.value(p.id).grad_at(0) == 1.0);
  CHECK(g3.value(p.id).grad_at(1) == 0.0);
  CHECK(g3.value(p.id).grad_at(2) == 0.0);
}

TEST_CASE("grad_check on a quadratic is nearly exact") {
  Tensor x = t64({2}, {1, 2});
  auto report = check_op(
      [](Graph& g, const std::vector<Var>& vs) { return ops::sum(ops::mul(vs[0], vs[0])); },
      {{"x", &x}});
  CHECK(report.max_rel_err < 1e-9);

  // analytic gradient is [2, 4]
  Graph g(ScalarMode::f64);
  Var p = g.param(x);
  g.backward(ops::sum(ops::mul(p, p)));
  CHECK(g.value(p.id).grad_at(0) == doctest::Approx(2.0));
  CHECK(g.value(p.id).grad_at(1) == doctest::Approx(4.0));
}

TEST_CASE("grad_check of a constant function returns zeros") {
  Tensor x = t64({3}, {1, 2, 3});
  auto report = check_op(
      [](Graph& g, const std::vector<Var>&) { return ops::sum(g.input(t64({1}, {5.0}))); },
      {{"x", &x}});
  CHECK(report.max_rel_err == 0.0);
}

TEST_CASE("grad_check rejects a non-scalar loss") {
  Tensor x = t64({2}, {1, 2});
  CHECK_THROWS_AS(check_op([](Graph& g, const std::vector<Var>& vs) {
                    g.backward(vs[0]);  // not scalar
                    return vs[0];
                  },
                           {{"x", &x}}),
                  ContractError);
}

TEST_CASE("every op passes a finite-difference sweep") {
  struct OpCase {
    const char* name;
    std::function<Var(Graph&, const std::vector<Var>&)> loss;
    double lo, hi;  // input value range
  };
  const std::vector<OpCase> cases = {
      {"add", [](Graph&, const std::vector<Var>& v) { return ops::sum(ops::add(v[0], v[1])); },
       -2, 2},
      {"sub", [](Graph&, const std::vector<Var>& v) { return ops::sum(ops::sub(v[0], v[1])); },
       -2, 2},
      {"mul", [](Graph&, const std::vector<Var>& v) { return ops::sum(ops::mul(v[0], v[1])); },
       -2, 2},
      {"scale", [](Graph&, const std::vector<Var>& v) { return ops::sum(ops::scale(v[0], -1.7)); },
       -2, 2},
      {"relu",
       [](Graph&, const std::vector<Var>& v) { return ops::sum(ops::relu(ops::mul(v[0], v[1]))); },
       0.2, 2},
      {"sigmoid",
       [](Graph&, const std::vector<Var>& v) {
         return ops::sum(ops::sigmoid(ops::mul(v[0], v[1])));
       },
       -2, 2},
      {"exp", [](Graph&, const std::vector<Var>& v) { return ops::sum(ops::exp(v[0])); }, -1, 1},
      {"log",
       [](Graph&, const std::vector<Var>& v) { return ops::sum(ops::log(ops::mul(v[0], v[1]))); },
       0.3, 2},
      {"mean_axis",
       [](Graph&, const std::vector<Var>& v) {
         return ops::sum(ops::reduce(ops::mul(v[0], v[1]), ops::Reduce::mean, {0}));
       },
       -2, 2},
      {"matmul_chain",
       [](Graph&, const std::vector<Var>& v) {
         return ops::mean(ops::relu(ops::matmul(v[0], v[1])));
       },
       0.1, 1.5},
  };

  for (const auto& c : cases) {
    double worst = 0;
    for (int seed = 0; seed < 55; ++seed) {
      Rng rng(u64(seed) * 977 + 13);
      const i64 d = 2 + i64(rng.below(3));
      Shape s = {d, d};
      Tensor a(s, ScalarMode::f64);
      Tensor b(s, ScalarMode::f64);
      for (i64 i = 0; i < a.numel(); ++i) {
        a.set(i, rng.uniform(c.lo, c.hi));
        b.set(i, rng.uniform(c.lo, c.hi));
      }
      auto report = check_op(c.loss, {{"a", &a}, {"b", &b}});
      worst = std::max(worst, report.max_rel_err);
    }
    INFO(c.name);
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("backward determinism and single-visit guarantee") {
  auto build = [](Graph& g, Tensor& pa, Tensor& pb) {
    Var a = g.param(pa);
    Var b = g.param(pb);
    Var h = ops::relu(ops::matmul(a, b));
    Var loss = ops::mean(ops::mul(h, h));
    g.backward(loss);
    return std::pair{a, b};
  };
  Rng rng(42);
  Tensor pa = Tensor::gaussian({4, 5}, 0, 1, rng, ScalarMode::f64);
  Tensor pb = Tensor::gaussian({5, 3}, 0, 1, rng, ScalarMode::f64);

  Graph g1(ScalarMode::f64);
  auto [a1, b1] = build(g1, pa, pb);
  Graph g2(ScalarMode::f64);
  auto [a2, b2] = build(g2, pa, pb);
  for (i64 i = 0; i < pa.numel(); ++i)
    CHECK(g1.value(a1.id).grad_at(i) == g2.value(a2.id).grad_at(i));
  for (i64 i = 0; i < pb.numel(); ++i)
    CHECK(g1.value(b1.id).grad_at(i) == g2.value(b2.id).grad_at(i));
  CHECK(g1.backward_visits() == g2.backward_visits());
  CHECK(g1.backward_visits() <= g1.size());
}

TEST_CASE("backward scales exactly under power-of-two loss scaling") {
  // Scaling by a power of two commutes with rounding, so the whole gradient
  // field doubles exactly in verification mode.
  Rng rng(5);
  Tensor pa = Tensor::gaussian({3, 3}, 0, 1, rng, ScalarMode::f64);
  Tensor pb = Tensor::gaussian({3, 3}, 0, 1, rng, ScalarMode::f64);
  for (double c : {2.0, 0.25}) {
    Graph g1(ScalarMode::f64);
    Var a1 = g1.param(pa);
    Var l1 = ops::sum(ops::relu(ops::matmul(a1, g1.param(pb))));
    g1.backward(l1);

    Graph g2(ScalarMode::f64);
    Var a2 = g2.param(pa);
    Var l2 = ops::scale(ops::sum(ops::relu(ops::matmul(a2, g2.param(pb)))), c);
    g2.backward(l2);

    for (i64 i = 0; i < pa.numel(); ++i)
      CHECK(g2.value(a2.id).grad_at(i) == c * g1.value(a1.id).grad_at(i));
  }
}

TEST_CASE("graphs reject mode mixing") {
  Graph g(ScalarMode::f64);
  Tensor f32 = Tensor::zeros({2}, ScalarMode::f32);
  CHECK_THROWS_AS(g.input(f32.clone()), ContractError);
}
