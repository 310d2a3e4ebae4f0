#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "keat/errors.hpp"
#include "keat/ops.hpp"
#include "keat/tape.hpp"
#include "test_util.hpp"

using namespace keat;
using keat::test::max_gradient_error;
using keat::test::random_tensor;
using keat::test::weighted_sum;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

}  // namespace

TEST_CASE("tensor construction checks element count") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  const Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(Tensor({0, 4}).numel() == 0);
}

TEST_CASE("matmul") {
  Tape tape;
  SUBCASE("identity") {
    const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    const Var out = ops::matmul(tape.constant(Tensor::matrix({{1, 0}, {0, 1}})), tape.constant(a));
    CHECK(out.value() == a);
  }
  SUBCASE("hand sum") {
    const Var out = ops::matmul(tape.constant(Tensor::matrix({{1, 2}, {3, 4}})),
                                tape.constant(Tensor::matrix({{1}, {1}})));
    CHECK(out.value() == Tensor::matrix({{3}, {7}}));
  }
  SUBCASE("random 3x4 by 4x2 against a triple loop") {
    std::mt19937_64 rng(1);
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    const Var out = ops::matmul(tape.constant(a), tape.constant(b));
    CHECK(max_abs_diff(out.value(), naive_matmul(a, b)) <= 1e-12);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(ops::matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({2, 3}))), DimensionError);
  }
  SUBCASE("associative within tolerance") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor a = random_tensor({4, 4}, rng, -1, 1), b = random_tensor({4, 4}, rng, -1, 1),
                   c = random_tensor({4, 4}, rng, -1, 1);
      CHECK(max_abs_diff(naive_matmul(naive_matmul(a, b), c), naive_matmul(a, naive_matmul(b, c))) <= 1e-9);
      const Var ab_c = ops::matmul(ops::matmul(tape.constant(a), tape.constant(b)), tape.constant(c));
      const Var a_bc = ops::matmul(tape.constant(a), ops::matmul(tape.constant(b), tape.constant(c)));
      CHECK(max_abs_diff(ab_c.value(), a_bc.value()) <= 1e-9);
    }
  }
  SUBCASE("gradient of sum(W x) is x broadcast") {
    const Var w = tape.variable(Tensor::matrix({{1, 2, 3}, {4, 5, 6}}));
    const Var x = tape.constant(Tensor::matrix({{7}, {8}, {9}}));
    tape.backward(ops::sum(ops::matmul(w, x)));
    CHECK(tape.grad(w) == Tensor::matrix({{7, 8, 9}, {7, 8, 9}}));
  }
}

TEST_CASE("softmax") {
  Tape tape;
  SUBCASE("uniform") {
    const Var s = ops::softmax(tape.constant(Tensor::vector({0, 0, 0})), 0);
    for (double v : s.value().data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("large logits stay finite") {
    const Var s = ops::softmax(tape.constant(Tensor::vector({1000, 0})), 0);
    CHECK(s.value()[0] == doctest::Approx(1.0));
    CHECK(s.value()[1] >= 0.0);
    CHECK(s.value()[1] < 1e-300);
  }
  SUBCASE("direct exp over sum of exp") {
    const Var s = ops::softmax(tape.constant(Tensor::vector({1, 2, 3})), 0);
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(s.value()[i] - std::exp(i + 1.0) / z) <= 1e-12);
  }
  SUBCASE("empty axis") {
    CHECK_THROWS_AS(ops::softmax(tape.constant(Tensor({0})), 0), DimensionError);
    CHECK_THROWS_AS(ops::softmax(tape.constant(Tensor({3, 0})), 1), DimensionError);
  }
  SUBCASE("rows sum to one for random finite inputs") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const Var s = ops::softmax(tape.constant(random_tensor({3, 5}, rng, -50, 50)), 1);
      for (std::size_t r = 0; r < 3; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 5; ++c) {
          CHECK(s.value().at(r, c) >= 0.0);
          total += s.value().at(r, c);
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("tanh and sigmoid") {
  Tape tape;
  CHECK(ops::tanh(tape.constant(Tensor::scalar(0))).value().item() == 0.0);
  CHECK(ops::sigmoid(tape.constant(Tensor::scalar(0))).value().item() == 0.5);
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({16}, rng, -3, 3);
  Tensor neg = x;
  for (double& v : neg.data()) v = -v;
  const Tensor tp = ops::tanh(tape.constant(x)).value(), tn = ops::tanh(tape.constant(neg)).value();
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(tn[i] == -tp[i]);

  // Derivatives at 0.3 against a central difference.
  const double h = 1e-5, x0 = 0.3;
  for (int which = 0; which < 2; ++which) {
    auto f = [&](double v) {
      Tape t;
      const Var in = t.constant(Tensor::scalar(v));
      return (which == 0 ? ops::tanh(in) : ops::sigmoid(in)).value().item();
    };
    Tape t;
    const Var in = t.variable(Tensor::scalar(x0));
    t.backward(which == 0 ? ops::tanh(in) : ops::sigmoid(in));
    const double numeric = (f(x0 + h) - f(x0 - h)) / (2 * h);
    CHECK(std::abs(t.grad(in).item() - numeric) <= 1e-8);
  }
}

TEST_CASE("concat and slice") {
  Tape tape;
  CHECK(ops::concat(tape.constant(Tensor::vector({1})), tape.constant(Tensor::vector({2})), 0).value() ==
        Tensor::vector({1, 2}));
  std::mt19937_64 rng(5);
  const Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 5}, rng);
  const Var c = ops::concat(tape.constant(a), tape.constant(b), 1);
  CHECK(c.shape() == Shape{2, 8});
  CHECK(ops::slice(c, 1, 0, 3).value() == a);
  CHECK(ops::slice(c, 1, 3, 8).value() == b);
  CHECK_THROWS_AS(ops::concat(tape.constant(Tensor({2, 3})), tape.constant(Tensor({3, 3})), 1), DimensionError);
}

TEST_CASE("max_pool") {
  Tape tape;
  CHECK(ops::max_pool(tape.constant(Tensor::matrix({{1, 5}, {3, 2}}))).value() == Tensor::vector({3, 5}));
  CHECK(ops::max_pool(tape.constant(Tensor::matrix({{4, -1, 2}}))).value() == Tensor::vector({4, -1, 2}));
  CHECK_THROWS_AS(ops::max_pool(tape.constant(Tensor({0, 2}))), DimensionError);

  SUBCASE("ties route to the lowest row") {
    const Var x = tape.variable(Tensor::matrix({{2, 1}, {2, 3}}));
    tape.backward(ops::sum(ops::max_pool(x)));
    CHECK(tape.grad(x) == Tensor::matrix({{1, 0}, {0, 1}}));
  }
  SUBCASE("one-hot gradient matches finite differences and conserves mass") {
    std::mt19937_64 rng(6);
    const Tensor xv = random_tensor({5, 4}, rng);
    CHECK(max_gradient_error([](Tape&, const std::vector<Var>& in) { return ops::sum(ops::max_pool(in[0])); },
                             {xv}) <= 1e-6);
    const Var x = tape.variable(xv);
    const Tensor upstream = Tensor::vector({0.5, -2.0, 1.25, 3.0});
    tape.backward(ops::sum(ops::mul(ops::max_pool(x), tape.constant(upstream))));
    const Tensor g = tape.grad(x);
    for (std::size_t c = 0; c < 4; ++c) {
      double col = 0.0;
      std::size_t nonzero = 0;
      for (std::size_t r = 0; r < 5; ++r) {
        col += g.at(r, c);
        nonzero += g.at(r, c) != 0.0;
      }
      CHECK(col == upstream[c]);
      CHECK(nonzero == 1);
    }
  }
}

TEST_CASE("backward contract") {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(tape.backward(x), ContractError);
  const Var loss = ops::sum(ops::square(x));
  tape.backward(loss);
  CHECK(tape.grad(x) == Tensor::vector({2, 4}));
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
  tape.reset();
  const Var y = tape.variable(Tensor::vector({3}));
  tape.backward(ops::sum(ops::square(y)));
  CHECK(tape.grad(y) == Tensor::vector({6}));
}

TEST_CASE("non-finite results are rejected") {
  Tape tape;
  CHECK_THROWS_AS(ops::div(tape.constant(Tensor::vector({1})), tape.constant(Tensor::vector({0}))), NumericError);
}

TEST_CASE("untouched parameters have zero gradient") {
  ParamStore store;
  store.add("used", Tensor::vector({1, 2}));
  store.add("unused", Tensor::matrix({{1, 2}, {3, 4}}));
  Tape tape;
  tape.backward(ops::sum(ops::square(tape.param(store, "used"))));
  const GradStore g = tape.gradients(store);
  CHECK(g.get("used") == Tensor::vector({2, 4}));
  CHECK(g.get("unused") == Tensor({2, 2}));
}

TEST_CASE("gathered rows scatter their gradient") {
  ParamStore store;
  store.add("table", Tensor::matrix({{1, 1}, {2, 2}, {3, 3}}));
  Tape tape;
  const std::size_t rows[] = {2, 0, 2};
  const Var r = tape.gather_rows(store, "table", rows);
  CHECK(r.value() == Tensor::matrix({{3, 3}, {1, 1}, {3, 3}}));
  tape.backward(ops::sum(r));
  const GradStore g = tape.gradients(store);
  CHECK(g.get("table") == Tensor::matrix({{1, 1}, {0, 0}, {2, 2}}));
}

TEST_CASE("every primitive matches finite differences on random inputs") {
  std::mt19937_64 rng(7);
  using In = const std::vector<Var>&;
  struct Case {
    const char* name;
    std::vector<Shape> shapes;
    test::LossFn f;
  };
  const std::vector<Case> cases = {
      {"matmul", {{3, 4}, {4, 2}}, [](Tape&, In v) { return weighted_sum(ops::matmul(v[0], v[1])); }},
      {"transpose", {{3, 2}}, [](Tape&, In v) { return weighted_sum(ops::transpose(v[0])); }},
      {"reshape", {{3, 2}}, [](Tape&, In v) { return weighted_sum(ops::reshape(v[0], {6})); }},
      {"concat0", {{2, 3}, {1, 3}}, [](Tape&, In v) { return weighted_sum(ops::concat(v[0], v[1], 0)); }},
      {"concat1", {{2, 3}, {2, 1}}, [](Tape&, In v) { return weighted_sum(ops::concat(v[0], v[1], 1)); }},
      {"slice", {{4, 3}}, [](Tape&, In v) { return weighted_sum(ops::slice(v[0], 0, 1, 3)); }},
      {"row", {{4, 3}}, [](Tape&, In v) { return weighted_sum(ops::row(v[0], 2)); }},
      {"broadcast", {{1}}, [](Tape&, In v) { return weighted_sum(ops::broadcast(v[0], {3})); }},
      {"repeat_rows", {{3}}, [](Tape&, In v) { return weighted_sum(ops::repeat_rows(v[0], 4)); }},
      {"add", {{2, 3}, {2, 3}}, [](Tape&, In v) { return weighted_sum(ops::add(v[0], v[1])); }},
      {"sub", {{2, 3}, {2, 3}}, [](Tape&, In v) { return weighted_sum(ops::sub(v[0], v[1])); }},
      {"mul", {{2, 3}, {2, 3}}, [](Tape&, In v) { return weighted_sum(ops::mul(v[0], v[1])); }},
      {"div", {{2, 3}, {2, 3}},
       [](Tape&, In v) { return weighted_sum(ops::div(v[0], ops::shift(ops::square(v[1]), 1.0))); }},
      {"scale", {{4}}, [](Tape&, In v) { return weighted_sum(ops::scale(v[0], -1.7)); }},
      {"shift", {{4}}, [](Tape&, In v) { return weighted_sum(ops::shift(v[0], 0.4)); }},
      {"square", {{4}}, [](Tape&, In v) { return weighted_sum(ops::square(v[0])); }},
      {"tanh", {{2, 3}}, [](Tape&, In v) { return weighted_sum(ops::tanh(v[0])); }},
      {"sigmoid", {{2, 3}}, [](Tape&, In v) { return weighted_sum(ops::sigmoid(v[0])); }},
      {"abs", {{5}}, [](Tape&, In v) { return weighted_sum(ops::abs(v[0])); }},
      {"clamp_min", {{5}}, [](Tape&, In v) { return weighted_sum(ops::clamp_min(v[0], 0.1)); }},
      {"add_bias", {{3, 2}, {2}}, [](Tape&, In v) { return weighted_sum(ops::add_bias(v[0], v[1])); }},
      {"mul_rows", {{3, 2}, {3}}, [](Tape&, In v) { return weighted_sum(ops::mul_rows(v[0], v[1])); }},
      {"sum", {{3, 2}}, [](Tape&, In v) { return ops::scale(ops::sum(v[0]), 1.3); }},
      {"mean0", {{3, 2}}, [](Tape&, In v) { return weighted_sum(ops::mean(v[0], 0)); }},
      {"mean1", {{3, 2}}, [](Tape&, In v) { return weighted_sum(ops::mean(v[0], 1)); }},
      {"max_pool", {{4, 3}}, [](Tape&, In v) { return weighted_sum(ops::max_pool(v[0])); }},
      {"softmax vec", {{5}}, [](Tape&, In v) { return weighted_sum(ops::softmax(v[0], 0)); }},
      {"softmax rows", {{3, 4}}, [](Tape&, In v) { return weighted_sum(ops::softmax(v[0], 1)); }},
      {"softmax cols", {{3, 4}}, [](Tape&, In v) { return weighted_sum(ops::softmax(v[0], 0)); }},
      {"cross_entropy", {{4}}, [](Tape&, In v) { return ops::cross_entropy(v[0], 2); }},
      {"windows", {{4, 2}}, [](Tape&, In v) { return weighted_sum(ops::windows(v[0], 3)); }},
  };
  for (const Case& c : cases) {
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<Tensor> inputs;
      for (const auto& s : c.shapes) inputs.push_back(random_tensor(s, rng));
      CAPTURE(c.name);
      CHECK(max_gradient_error(c.f, inputs) <= 1e-4);
    }
  }
}

TEST_CASE("cross entropy") {
  Tape tape;
  const Var l = ops::cross_entropy(tape.constant(Tensor::vector({0, 0, 0, 0})), 1);
  CHECK(std::abs(l.value().item() - std::log(4.0)) <= 1e-12);
  CHECK_THROWS_AS(ops::cross_entropy(tape.constant(Tensor::vector({0, 0})), 2), ContractError);
}

TEST_CASE("dropout") {
  Tape tape;
  std::mt19937_64 rng(8);
  const Var x = tape.variable(Tensor({1000}, 1.0));
  CHECK(ops::dropout(x, 0.0, rng).id() == x.id());
  const Var d = ops::dropout(x, 0.3, rng);
  std::size_t kept = 0;
  for (double v : d.value().data()) {
    CHECK((v == 0.0 || std::abs(v - 1.0 / 0.7) < 1e-15));
    kept += v != 0.0;
  }
  CHECK(kept > 600);
  CHECK(kept < 800);
  tape.backward(ops::sum(d));
  CHECK(tape.grad(x) == d.value());
  CHECK_THROWS_AS(ops::dropout(x, 1.0, rng), ConfigError);

  std::mt19937_64 r1(5), r2(5);
  Tape t1, t2;
  CHECK(ops::dropout(t1.constant(Tensor({20}, 2.0)), 0.5, r1).value() ==
        ops::dropout(t2.constant(Tensor({20}, 2.0)), 0.5, r2).value());
}
