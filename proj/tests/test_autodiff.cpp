#include <cmath>
#include <random>

#include "ctrfusion/adam.hpp"
#include "ctrfusion/batch.hpp"
#include "ctrfusion/errors.hpp"
#include "ctrfusion/graph.hpp"
#include "ctrfusion/kernels.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace ctrfusion;
using testing::Mat;

namespace {

Mat random_mat(std::size_t n, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(n);
  for (double& v : m) v = u(rng);
  return m;
}

std::vector<double> values(const Graph& g, Var v) {
  const auto s = g.value(v);
  return {s.begin(), s.end()};
}

}  // namespace

TEST_CASE("matmul examples") {
  ParamStore store;
  Graph g(store);
  Var eye = g.constant(2, 2, {1, 0, 0, 1});
  Var m = g.constant(2, 2, {3, 4, 5, 6});
  CHECK(values(g, g.matmul(eye, m)) == std::vector<double>{3, 4, 5, 6});
  Var row = g.constant(1, 2, {1, 2});
  Var zero = g.constant(2, 1, {0, 0});
  CHECK(values(g, g.matmul(row, zero)) == std::vector<double>{0});

  const Mat a = random_mat(12, 7);
  const Mat b = random_mat(8, 8);
  const Mat expect = testing::oracle_matmul(a, b, 3, 4, 2);
  const auto got = values(g, g.matmul(g.constant(3, 4, a), g.constant(4, 2, b)));
  REQUIRE(got.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-14));

  CHECK_THROWS_AS(g.matmul(g.constant(2, 3, Mat(6)), g.constant(2, 3, Mat(6))), DimensionError);
  try {
    g.matmul(g.constant(2, 3, Mat(6)), g.constant(2, 3, Mat(6)));
  } catch (const DimensionError& e) {
    const std::string what = e.what();
    CHECK(what.find("2x3") != std::string::npos);
  }
}

TEST_CASE("gemm matches the serial reference bit for bit in every transpose mode") {
  using kernels::Trans;
  for (Trans ta : {Trans::kNo, Trans::kYes}) {
    for (Trans tb : {Trans::kNo, Trans::kYes}) {
      for (std::size_t n : {1u, 5u, 70u}) {
        const kernels::GemmShape shape{n, n + 3, n + 1, ta, tb};
        const Mat a = random_mat(n * (n + 3), 11);
        const Mat b = random_mat((n + 3) * (n + 1), 12);
        Mat c1 = random_mat(n * (n + 1), 13);
        Mat c2 = c1;
        kernels::gemm_reference(shape, a, b, c1, true);
        kernels::gemm(shape, a, b, c2, true);
        CHECK(c1 == c2);
      }
    }
  }
  // plain (no transpose) against the triple loop
  const Mat a = random_mat(3 * 4, 7);
  const Mat b = random_mat(4 * 2, 8);
  Mat c(6);
  kernels::gemm({3, 4, 2}, a, b, c);
  const Mat expect = testing::oracle_matmul(a, b, 3, 4, 2);
  for (std::size_t i = 0; i < 6; ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-14));
}

TEST_CASE("masked softmax examples") {
  ParamStore store;
  Graph g(store);
  auto sm = [&](Mat s, Mask mask) { return values(g, g.masked_softmax(g.constant(1, s.size(), s), mask)); };
  for (double v : sm({2, 2, 2}, {1, 1, 1})) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(sm({5, -1, 0}, {1, 0, 0}) == std::vector<double>{1, 0, 0});
  const auto out = sm({1, 2, 3}, {1, 1, 0});
  const double e1 = std::exp(1.0);
  const double e2 = std::exp(2.0);
  CHECK(out[0] == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-14));
  CHECK(out[1] == doctest::Approx(e2 / (e1 + e2)).epsilon(1e-14));
  CHECK(out[2] == 0.0);
  CHECK_THROWS_AS(sm({1, 2}, {0, 0}), Error);

  // big scores stay finite through max subtraction
  const auto big = sm({1000, 1001, -1000}, {1, 1, 1});
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] + big[1] + big[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("masked softmax rows: parallel kernel equals the reference; masked exactly zero, sums within 1e-12") {
  const std::size_t rows = 300;
  const std::size_t cols = 40;
  const Mat s = random_mat(rows * cols, 21, -30, 30);
  std::vector<unsigned char> mask(cols);
  std::mt19937_64 rng(4);
  for (auto& m : mask) m = rng() % 3 != 0;
  mask[0] = 1;
  Mat a(rows * cols);
  Mat b(rows * cols);
  REQUIRE(kernels::masked_softmax_rows_reference(s, rows, cols, mask, a));
  REQUIRE(kernels::masked_softmax_rows(s, rows, cols, mask, b));
  CHECK(a == b);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (!mask[c]) CHECK(a[r * cols + c] == 0.0);
      CHECK(a[r * cols + c] >= 0.0);
      sum += a[r * cols + c];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("elementwise examples") {
  ParamStore store;
  Graph g(store);
  CHECK(values(g, g.tanh(g.constant(1, 1, {0})))[0] == 0.0);
  CHECK(values(g, g.sigmoid(g.constant(1, 1, {0})))[0] == 0.5);
  CHECK(values(g, g.relu(g.constant(1, 2, {-1, 2}))) == std::vector<double>{0, 2});

  ParamStore p;
  p.add("x", {1}, Init::kZeros);
  p["x"][0] = 0.3;
  const auto r = testing::grad_check(p, [](Graph& gg) { return gg.tanh(gg.param(0)); }, 8, 1e-5, 0.0);
  CHECK(r.max_error < 1e-6);
  Graph g2(p);
  backward_into(g2, g2.tanh(g2.param(0)), p);
  CHECK(p["x"].grad()[0] == doctest::Approx(1 - std::tanh(0.3) * std::tanh(0.3)).epsilon(1e-14));
}

TEST_CASE("concat_rows examples") {
  ParamStore store;
  Graph g(store);
  CHECK(values(g, g.concat_rows(g.constant(1, 1, {1}), g.constant(1, 1, {2}))) == std::vector<double>{1, 2});
  Var c = g.concat_rows(g.constant(2, 3, {1, 2, 3, 4, 5, 6}), g.constant(4, 3, Mat(12, 7.0)));
  CHECK(g.rows(c) == 6);
  CHECK(g.cols(c) == 3);
  CHECK(values(g, c)[5] == 6);
  CHECK(values(g, c)[6] == 7);
  CHECK_THROWS_AS(g.concat_rows(g.constant(1, 2, {1, 2}), g.constant(1, 3, {1, 2, 3})), DimensionError);

  ParamStore p;
  p.add("a", {2, 3});
  p.add("b", {4, 3});
  testing::randomize(p, 3);
  const Mat w = random_mat(18, 4);
  auto loss = [&](Graph& gg) {
    Var cc = gg.concat_rows(gg.param(0), gg.param(1));
    return gg.sum(gg.mul(gg.tanh(cc), gg.constant(6, 3, w)));
  };
  CHECK(testing::grad_check(p, loss).max_error < 1e-6);
}

TEST_CASE("embedding lookup examples") {
  ParamStore p;
  p.add("t", {3, 2}, Init::kUniformFanIn, 2, true);
  testing::randomize(p, 9);
  {
    Graph g(p);
    Var r = g.embedding_lookup(0, 0);
    CHECK(values(g, r) == std::vector<double>{p["t"][0], p["t"][1]});
    CHECK_THROWS_AS(g.embedding_lookup(0, 3), IndexError);
    CHECK_THROWS_AS(g.embedding_lookup(0, -1), IndexError);
  }
  {
    Graph g(p);
    Var a = g.embedding_lookup(0, 1);
    Var b = g.embedding_lookup(0, 1);
    Var loss = g.sum(g.add(g.scale(a, 2.0), g.scale(b, 3.0)));
    backward_into(g, loss, p);
    const auto grad = p["t"].grad();
    CHECK(std::vector<double>(grad.begin(), grad.end()) == std::vector<double>{0, 0, 5, 5, 0, 0});
  }
  {
    Graph g(p);
    backward_into(g, g.sum(g.embedding_lookup(0, 2)), p);
    const auto grad = p["t"].grad();
    CHECK(std::vector<double>(grad.begin(), grad.end()) == std::vector<double>{0, 0, 0, 0, 1, 1});
  }
}

TEST_CASE("bce examples") {
  ParamStore store;
  Graph g(store);
  CHECK(g.scalar(g.bce(g.constant(1, 1, {0.5}), 1)) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(g.scalar(g.bce(g.constant(1, 1, {1.0 - 1e-7}), 1)) == doctest::Approx(1e-7).epsilon(1e-6));
  CHECK(std::isfinite(g.scalar(g.bce(g.constant(1, 1, {0.0}), 1))));
  CHECK(std::isfinite(g.scalar(g.bce(g.constant(1, 1, {1.0}), 0))));

  ParamStore p;
  p.add("p", {1}, Init::kZeros);
  p["p"][0] = 0.3;
  Graph g2(p);
  backward_into(g2, g2.bce(g2.param(0), 0), p);
  CHECK(p["p"].grad()[0] == doctest::Approx(1.0 / 0.7).epsilon(1e-14));
  CHECK(testing::grad_check(p, [](Graph& gg) { return gg.bce(gg.param(0), 0); }, 8, 1e-5, 0.0).max_error < 1e-6);
}

TEST_CASE("backward examples") {
  ParamStore p;
  p.add("used", {1}, Init::kOnes);
  p.add("unused", {1}, Init::kOnes);
  Graph g(p);
  Var loss = g.param(0);
  g.param(1);
  backward_into(g, loss, p);
  CHECK(p["used"].grad()[0] == 1.0);
  CHECK(p["unused"].grad()[0] == 0.0);
  // a second backward replaces, it does not accumulate
  backward_into(g, loss, p);
  CHECK(p["used"].grad()[0] == 1.0);
  CHECK_THROWS_AS(g.backward(g.constant(1, 2, {1, 2})), DimensionError);
}

TEST_CASE("every differentiable op passes a finite-difference check on inputs in [-2, 2]") {
  ParamStore p(1);
  p.add("a", {3, 4});
  p.add("b", {4, 5});
  p.add("c", {3, 4});
  p.add("col", {3});
  p.add("gamma", {3});
  p.add("beta", {3});
  p.add("table", {6, 3}, Init::kUniformFanIn, 3, true);
  testing::randomize(p, 17, 2.0);
  const Mat w34 = random_mat(12, 1);
  const Mat w35 = random_mat(15, 2);
  const Mask mask{1, 0, 1, 1};
  const std::vector<int> ids{4, 1, 4};
  using Op = std::function<Var(Graph&)>;
  const std::vector<std::pair<const char*, Op>> ops = {
      {"matmul", [&](Graph& g) { return g.sum(g.mul(g.matmul(g.param(0), g.param(1)), g.constant(3, 5, w35))); }},
      {"matmul_t", [&](Graph& g) {
         return g.sum(g.mul(g.matmul(g.param(0), g.param(2), true, false), g.constant(4, 4, Mat(16, 0.3))));
       }},
      {"add_sub_mul", [&](Graph& g) {
         return g.sum(g.mul(g.sub(g.add(g.param(0), g.param(2)), g.mul(g.param(0), g.param(2))), g.constant(3, 4, w34)));
       }},
      {"add_bias", [&](Graph& g) { return g.sum(g.mul(g.add_bias(g.param(0), g.param(3)), g.constant(3, 4, w34))); }},
      {"tanh", [&](Graph& g) { return g.sum(g.mul(g.tanh(g.param(0)), g.constant(3, 4, w34))); }},
      {"sigmoid", [&](Graph& g) { return g.sum(g.mul(g.sigmoid(g.param(0)), g.constant(3, 4, w34))); }},
      {"relu", [&](Graph& g) { return g.sum(g.mul(g.relu(g.param(0)), g.constant(3, 4, w34))); }},
      {"gelu", [&](Graph& g) { return g.sum(g.mul(g.gelu(g.param(0)), g.constant(3, 4, w34))); }},
      {"scale", [&](Graph& g) { return g.sum(g.mul(g.scale(g.param(0), -1.7), g.constant(3, 4, w34))); }},
      {"masked_softmax", [&](Graph& g) {
         return g.sum(g.mul(g.masked_softmax(g.param(0), mask), g.constant(3, 4, w34)));
       }},
      {"layer_norm", [&](Graph& g) {
         return g.sum(g.mul(g.layer_norm(g.param(0), g.param(4), g.param(5)), g.constant(3, 4, w34)));
       }},
      {"concat_cols_slice", [&](Graph& g) {
         std::vector<Var> parts{g.param(0), g.param(2)};
         Var c = g.concat_cols(parts);
         return g.sum(g.tanh(g.slice_rows(c, 1, 2)));
       }},
      {"repeat_select_mean", [&](Graph& g) {
         Var r = g.repeat_cols(g.param(3), 4);
         return g.sum(g.mul(g.add(g.mean_cols(g.mul(r, g.param(0))), g.select_col(g.param(2), 2)), g.param(3)));
       }},
      {"embedding", [&](Graph& g) {
         return g.sum(g.mul(g.embedding(6, ids), g.constant(3, 3, Mat{1, 2, 3, -1, 0.5, 2, 0.1, 0.2, -3})));
       }},
      {"bce", [&](Graph& g) { return g.bce(g.sigmoid(g.sum(g.mul(g.param(0), g.param(2)))), 1); }},
      {"softmax_ce", [&](Graph& g) { return g.softmax_cross_entropy(g.param(3), 2); }},
  };
  for (const auto& [name, op] : ops) {
    CAPTURE(name);
    const auto r = testing::grad_check(p, op);
    CAPTURE(r.worst);
    CHECK(r.max_error < 1e-4);
  }
}

TEST_CASE("adam examples") {
  ParamStore p;
  p.add("w", {3});
  testing::randomize(p, 1);
  const Mat before = testing::values_of(p["w"]);
  AdamState adam(p, {0.1});
  p["w"].ensure_grad();
  p["w"].zero_grad();
  adam.update(p);
  CHECK(testing::values_of(p["w"]) == before);

  ParamStore q;
  q.add("w", {1}, Init::kZeros);
  AdamState a2(q, {0.1});
  q["w"].ensure_grad();
  q["w"].grad()[0] = 1.0;
  a2.update(q);
  CHECK(q["w"][0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(q["w"].grad()[0] == 0.0);

  // convex quadratic: two steps lower (w - 3)^2
  ParamStore r;
  r.add("w", {1}, Init::kZeros);
  AdamState a3(r, {0.1});
  auto loss = [](double w) { return (w - 3) * (w - 3); };
  const double l0 = loss(r["w"][0]);
  for (int i = 0; i < 2; ++i) {
    r["w"].ensure_grad();
    r["w"].grad()[0] = 2 * (r["w"][0] - 3);
    a3.update(r);
  }
  CHECK(loss(r["w"][0]) < l0);

  ParamStore m;
  m.add("orphan", {2});
  AdamState a4(m, {0.1});
  m["orphan"].drop_grad();
  CHECK_THROWS_WITH_AS(a4.update(m), doctest::Contains("orphan"), Error);
}

TEST_CASE("run_batch is independent of thread count and equals the serial reference") {
  ParamStore p(2);
  p.add("w", {4, 4});
  p.add("t", {10, 4}, Init::kUniformFanIn, 4, true);
  auto loss = [&](Graph& g, std::size_t i) {
    Var e = g.embedding_lookup(1, static_cast<int>(i % 10));
    return g.sum(g.tanh(g.matmul(g.param(0), e)));
  };
  std::vector<double> w(25, 1.0 / 25);
  run_batch_serial(p, 25, loss, w);
  const Mat g_serial = Mat(p["w"].grad().begin(), p["w"].grad().end());
  const Mat t_serial = Mat(p["t"].grad().begin(), p["t"].grad().end());
  for (int threads : {1, 2, 3}) {
    kernels::set_threads(threads);
    run_batch(p, 25, loss, w);
    CHECK(Mat(p["w"].grad().begin(), p["w"].grad().end()) == g_serial);
    CHECK(Mat(p["t"].grad().begin(), p["t"].grad().end()) == t_serial);
  }
  kernels::set_threads(1);
}
