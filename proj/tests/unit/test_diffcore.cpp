// Copyright 2026 The imvae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "imvae/adam.hpp"
#include "imvae/errors.hpp"
#include "imvae/graph.hpp"

using namespace imvae;
using diff::Graph;
using diff::Parameter;
using diff::Var;
using imvae::testing::check_gradients;
using imvae::testing::uniform_array;

namespace {

// sum(op(x) * w) with fixed random weights so no gradient entry is trivial.
diff::Var weighted_sum(Graph& g, Var y, std::uint64_t seed) {
  Rng rng(seed);
  return diff::sum_all(diff::mul(y, g.constant(uniform_array(rng, y.rows(), y.cols(), -1, 1))));
}

}  // namespace

TEST_CASE("matmul values and shape errors") {
  Graph g;
  Var eye = g.constant(DenseArray::from_rows({{1, 0}, {0, 1}}));
  Var col = g.constant(DenseArray::from_rows({{3}, {4}}));
  CHECK(diff::matmul(eye, col).value() == DenseArray::from_rows({{3}, {4}}));
  Var row = g.constant(DenseArray::from_rows({{1, 2}}));
  CHECK(diff::matmul(row, col).value().item() == 11.0);
  CHECK_THROWS_AS(diff::matmul(col, col), DimensionError);
  try {
    diff::matmul(col, col);
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("2x1") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum(a b) with respect to a") {
  Parameter a("a", DenseArray::from_rows({{1, 2}}));
  Parameter b("b", DenseArray::from_rows({{3}, {4}}));
  Graph g;
  g.backward(diff::sum_all(diff::matmul(g.param(a), g.param(b))));
  CHECK(a.grad(0, 0) == doctest::Approx(3.0));
  CHECK(a.grad(0, 1) == doctest::Approx(4.0));
  auto fd = check_gradients({&a, &b}, [&](Graph& h) {
    return diff::sum_all(diff::matmul(h.param(a), h.param(b)));
  }, 0, 1, 1e-6);
  CHECK(fd.max_rel_error < 1e-6);
}

TEST_CASE("elementwise examples") {
  Graph g;
  CHECK(diff::sigmoid(g.constant(DenseArray::scalar(0))).value().item() == 0.5);
  CHECK(diff::leaky_relu(g.constant(DenseArray::scalar(-1)), 0.2).value().item() ==
        doctest::Approx(-0.2));
  Parameter x("x", DenseArray::scalar(1.0));
  auto fd = check_gradients({&x}, [&](Graph& h) { return diff::sum_all(diff::exp(h.param(x))); });
  CHECK(x.grad.item() == doctest::Approx(std::numbers::e).epsilon(1e-12));
  CHECK(fd.max_rel_error < 1e-8);
}

TEST_CASE("elementwise errors") {
  Graph g;
  CHECK_THROWS_AS(diff::log(g.constant(DenseArray::from_rows({{1, 0}}))), DomainError);
  CHECK_THROWS_AS(diff::log(g.constant(DenseArray::scalar(-2))), DomainError);
  CHECK_THROWS_AS(diff::add(g.constant(DenseArray(2, 2)), g.constant(DenseArray(2, 3))),
                  DimensionError);
  CHECK_THROWS_AS(diff::mul(g.constant(DenseArray(1, 2)), g.constant(DenseArray(2, 1))),
                  DimensionError);
}

TEST_CASE("sigmoid never reaches 0 or 1") {
  Graph g;
  Var s = diff::sigmoid(g.constant(DenseArray::from_rows({{-800, -40, 0, 40, 800}})));
  for (double v : s.value().data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("reductions") {
  Graph g;
  CHECK(diff::log_sum_exp_all(g.constant(DenseArray::from_rows({{0, 0}}))).value().item() ==
        doctest::Approx(std::log(2.0)));
  CHECK(diff::mean_all(g.constant(DenseArray::from_rows({{1, 2}, {3, 4}}))).value().item() == 2.5);
  const double big = diff::log_sum_exp_all(g.constant(DenseArray::from_rows({{1000, 1000}})))
                         .value()
                         .item();
  CHECK(big == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
  Var rows = diff::sum_rows(g.constant(DenseArray::from_rows({{1, 2}, {3, 4}})));
  CHECK(rows.value() == DenseArray::from_rows({{3}, {7}}));
  CHECK_THROWS_AS(diff::mean_all(g.constant(DenseArray())), ContractError);
  CHECK_THROWS_AS(diff::log_sum_exp_all(g.constant(DenseArray())), ContractError);
}

TEST_CASE("log-sum-exp is shift invariant") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    DenseArray v = uniform_array(rng, 1, 9, -5, 5);
    const double c = rng.uniform(-100, 100);
    DenseArray shifted = v;
    for (double& x : shifted.data()) x += c;
    Graph g;
    const double a = diff::log_sum_exp_all(g.constant(v)).value().item();
    const double b = diff::log_sum_exp_all(g.constant(shifted)).value().item();
    CHECK(b == doctest::Approx(a + c).epsilon(1e-12));
  }
}

TEST_CASE("backward examples") {
  Parameter w("w", DenseArray::from_rows({{1, 2}, {3, 4}}));
  {
    Graph g;
    g.backward(diff::sum_all(g.param(w)));
    CHECK(w.grad == DenseArray(2, 2, 1.0));
  }
  w.zero_grad();
  {
    Graph g;
    Var p = g.param(w);
    g.backward(diff::sum_all(diff::mul(p, p)));
    CHECK(w.grad == DenseArray::from_rows({{2, 4}, {6, 8}}));
  }
  Graph g;
  CHECK_THROWS_AS(g.backward(g.param(w)), ContractError);
}

TEST_CASE("gradients accumulate across backward calls until zeroed") {
  Parameter w("w", DenseArray::from_rows({{1, 2}}));
  for (int i = 0; i < 2; ++i) {
    Graph g;
    g.backward(diff::sum_all(g.param(w)));
  }
  CHECK(w.grad == DenseArray(1, 2, 2.0));
  diff::zero_grads(std::vector<Parameter*>{&w});
  CHECK(w.grad == DenseArray(1, 2, 0.0));
}

TEST_CASE("every op matches central finite differences") {
  Rng rng(2024);
  Parameter a("a", uniform_array(rng, 3, 4, -2, 2));
  Parameter b("b", uniform_array(rng, 3, 4, -2, 2));
  Parameter pos("pos", uniform_array(rng, 3, 4, 0.2, 2));
  Parameter m("m", uniform_array(rng, 4, 2, -2, 2));
  Parameter row("row", uniform_array(rng, 1, 4, -2, 2));
  Parameter c("c", uniform_array(rng, 5, 4, -2, 2));
  std::vector<Parameter*> all{&a, &b, &pos, &m, &row, &c};

  using Build = std::function<Var(Graph&)>;
  const std::vector<std::pair<const char*, Build>> cases = {
      {"matmul", [&](Graph& g) { return weighted_sum(g, diff::matmul(g.param(a), g.param(m)), 1); }},
      {"add", [&](Graph& g) { return weighted_sum(g, diff::add(g.param(a), g.param(b)), 2); }},
      {"sub", [&](Graph& g) { return weighted_sum(g, diff::sub(g.param(a), g.param(b)), 3); }},
      {"mul", [&](Graph& g) { return weighted_sum(g, diff::mul(g.param(a), g.param(b)), 4); }},
      {"exp", [&](Graph& g) { return weighted_sum(g, diff::exp(g.param(a)), 5); }},
      {"log", [&](Graph& g) { return weighted_sum(g, diff::log(g.param(pos)), 6); }},
      {"negate", [&](Graph& g) { return weighted_sum(g, diff::negate(g.param(a)), 7); }},
      {"sigmoid", [&](Graph& g) { return weighted_sum(g, diff::sigmoid(g.param(a)), 8); }},
      {"leaky_relu", [&](Graph& g) { return weighted_sum(g, diff::leaky_relu(g.param(a), 0.2), 9); }},
      {"relu", [&](Graph& g) { return weighted_sum(g, diff::relu(g.param(a)), 10); }},
      {"square", [&](Graph& g) { return weighted_sum(g, diff::square(g.param(a)), 11); }},
      {"scale", [&](Graph& g) { return weighted_sum(g, diff::scale(g.param(a), -1.7), 12); }},
      {"add_scalar", [&](Graph& g) { return weighted_sum(g, diff::add_scalar(g.param(a), 0.3), 13); }},
      {"clamp", [&](Graph& g) { return weighted_sum(g, diff::clamp(g.param(a), -1.0, 1.0), 14); }},
      {"add_row", [&](Graph& g) { return weighted_sum(g, diff::add_row(g.param(a), g.param(row)), 15); }},
      {"sum_all", [&](Graph& g) { return diff::sum_all(diff::square(g.param(a))); }},
      {"mean_all", [&](Graph& g) { return diff::mean_all(diff::square(g.param(a))); }},
      {"sum_rows", [&](Graph& g) { return weighted_sum(g, diff::sum_rows(g.param(a)), 16); }},
      {"log_sum_exp_all", [&](Graph& g) { return diff::log_sum_exp_all(diff::mul(g.param(a), g.param(b))); }},
      {"log_softmax_rows", [&](Graph& g) { return weighted_sum(g, diff::log_softmax_rows(g.param(a)), 17); }},
      {"slice_cols", [&](Graph& g) { return weighted_sum(g, diff::slice_cols(g.param(a), 1, 2), 18); }},
      {"slice_rows", [&](Graph& g) { return weighted_sum(g, diff::slice_rows(g.param(c), 1, 3), 19); }},
      {"gather_rows", [&](Graph& g) {
         const std::vector<std::size_t> idx{2, 0, 2, 4, 1};
         return weighted_sum(g, diff::gather_rows(g.param(c), idx), 20);
       }},
      {"concat_cols", [&](Graph& g) { return weighted_sum(g, diff::concat_cols(g.param(a), g.param(b)), 21); }},
      {"pairwise_sq_dist", [&](Graph& g) { return weighted_sum(g, diff::pairwise_sq_dist(g.param(a), g.param(c)), 22); }},
  };
  for (const auto& [name, build] : cases) {
    CAPTURE(name);
    auto result = check_gradients(all, build);
    CHECK(result.max_rel_error < 1e-4);
  }
}

TEST_CASE("dispatchers route to the named op") {
  Graph g;
  Var x = g.constant(DenseArray::from_rows({{0.5, -1.5}}));
  CHECK(diff::elementwise(diff::UnaryOp::square, x).value() == diff::square(x).value());
  CHECK(diff::elementwise(diff::UnaryOp::sigmoid, x).value() == diff::sigmoid(x).value());
  CHECK(diff::elementwise(diff::BinaryOp::mul, x, x).value() == diff::mul(x, x).value());
  CHECK(diff::reduce(diff::ReduceOp::log_sum_exp_all, x).value() ==
        diff::log_sum_exp_all(x).value());
}

TEST_CASE("shared subexpressions accumulate like the expanded graph") {
  Rng rng(3);
  Parameter w("w", uniform_array(rng, 2, 3, -2, 2));
  Parameter v("v", w.value);
  {
    Graph g;
    Var s = diff::sigmoid(g.param(w));
    g.backward(diff::sum_all(diff::add(diff::mul(s, s), s)));
  }
  {
    Graph g;
    Var s1 = diff::sigmoid(g.param(v));
    Var s2 = diff::sigmoid(g.param(v));
    Var s3 = diff::sigmoid(g.param(v));
    g.backward(diff::sum_all(diff::add(diff::mul(s1, s2), s3)));
  }
  for (std::size_t i = 0; i < w.grad.size(); ++i) {
    CHECK(w.grad[i] == doctest::Approx(v.grad[i]).epsilon(1e-14));
  }
}

TEST_CASE("targeted backward leaves other parameters untouched") {
  Parameter a("a", DenseArray::from_rows({{1, 2}}));
  Parameter b("b", DenseArray::from_rows({{3, 4}}));
  Graph g;
  Var loss = diff::sum_all(diff::mul(g.param(a), g.param(b)));
  std::vector<Parameter*> only_a{&a};
  g.backward(loss, only_a);
  CHECK(a.grad == DenseArray::from_rows({{3, 4}}));
  CHECK(b.grad == DenseArray(1, 2, 0.0));
}

TEST_CASE("frozen parameters never receive gradient") {
  Parameter a("a", DenseArray::from_rows({{1, 2}}));
  const Parameter& frozen = a;
  Graph g;
  Var x = g.param(frozen);
  CHECK_FALSE(g.requires_grad(x));
  Parameter c("c", DenseArray::from_rows({{1, 1}}));
  g.backward(diff::sum_all(diff::mul(x, g.param(c))));
  CHECK(a.grad == DenseArray(1, 2, 0.0));
  CHECK(c.grad == DenseArray::from_rows({{1, 2}}));
}

TEST_CASE("adam: zero gradient is a fixed point") {
  Parameter p("p", DenseArray::from_rows({{0.25, -3.5, 7}}));
  const DenseArray before = p.value;
  Adam opt({&p}, 1e-3);
  for (int i = 0; i < 10; ++i) opt.step();
  CHECK(p.value == before);
  CHECK(opt.state().step == 10);
}

TEST_CASE("adam: one step with unit gradient moves by the learning rate") {
  Parameter p("p", DenseArray::scalar(0.0));
  p.grad = DenseArray::scalar(1.0);
  Adam opt({&p}, 1e-3);
  opt.step();
  // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
  CHECK(p.value.item() == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(opt.state().first_moment[0].same_shape(p.value));
}

TEST_CASE("adam: scalar quadratic converges") {
  Parameter x("x", DenseArray::scalar(1.0));
  Adam opt({&x}, 1e-3);
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    Graph g;
    g.backward(diff::scale(diff::sum_all(diff::square(g.param(x))), 0.5));
    opt.step();
  }
  CHECK(std::abs(x.value.item()) < 0.05);
}

TEST_CASE("adam: shape mismatch") {
  AdamState state;
  DenseArray p(2, 2);
  DenseArray g(2, 3);
  std::vector<DenseArray*> ps{&p};
  std::vector<const DenseArray*> gs{&g};
  CHECK_THROWS_AS(adam_step(state, ps, gs), DimensionError);
}
