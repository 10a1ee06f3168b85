// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gear/errors.hpp"
#include "gear/gradcheck.hpp"
#include "gear/rng.hpp"
#include "gear/tensor.hpp"

using namespace gear;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data_mut()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("factories and accessors") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.size() == 6);
  CHECK(z.rows() == 2);
  CHECK(z.cols() == 3);
  CHECK(z.at(1, 2) == 0.0);

  Tensor f = Tensor::full({4}, 1.5);
  CHECK(f.at(3) == 1.5);

  Tensor s = Tensor::scalar(-2.0);
  CHECK(s.item() == -2.0);

  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(f.item(), ContractError);
}

TEST_CASE("copies share storage; clone does not") {
  Tensor a = Tensor::vec({1.0, 2.0});
  Tensor b = a;
  b.data_mut()[0] = 9.0;
  CHECK(a.at(0) == 9.0);

  Tensor c = a.clone();
  c.data_mut()[0] = 4.0;
  CHECK(a.at(0) == 9.0);
}

TEST_CASE("forward values of arithmetic ops") {
  Tensor a = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor b = Tensor::from({2, 2}, {0.5, -1.0, 2.0, 0.0});
  CHECK(add(a, b).at(0, 1) == 1.0);
  CHECK(sub(a, b).at(1, 0) == 1.0);
  CHECK(mul(a, b).at(1, 0) == 6.0);
  CHECK(scale(a, -2.0).at(1, 1) == -8.0);

  Tensor bias = Tensor::vec({10.0, 20.0});
  Tensor ab = add_row(a, bias);
  CHECK(ab.at(0, 0) == 11.0);
  CHECK(ab.at(1, 1) == 24.0);

  CHECK_THROWS_AS(add(a, Tensor::vec({1.0})), DimensionError);
  CHECK_THROWS_AS(add_row(a, Tensor::vec({1.0, 2.0, 3.0})), DimensionError);
}

TEST_CASE("matmul matches a hand computation") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == doctest::Approx(58.0));
  CHECK(c.at(0, 1) == doctest::Approx(64.0));
  CHECK(c.at(1, 0) == doctest::Approx(139.0));
  CHECK(c.at(1, 1) == doctest::Approx(154.0));
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("row_softmax properties") {
  Tensor x = Tensor::from({1, 2}, {0.0, std::log(3.0)});
  Tensor y = row_softmax(x);
  CHECK(y.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(y.at(0, 1) == doctest::Approx(0.75).epsilon(1e-12));

  // shift invariance and overflow safety via max subtraction
  Tensor big = Tensor::from({2, 3}, {1000.0, 1001.0, 999.0, -5000.0, -5000.0, -5000.0});
  Tensor yb = row_softmax(big);
  double row0 = yb.at(0, 0) + yb.at(0, 1) + yb.at(0, 2);
  CHECK(row0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(yb.at(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Tensor bad = Tensor::from({1, 2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(row_softmax(bad), NumericError);
}

TEST_CASE("unary op values") {
  Tensor x = Tensor::vec({-1.5, 0.0, 2.0});
  CHECK(relu(x).at(0) == 0.0);
  CHECK(relu(x).at(2) == 2.0);
  CHECK(gear::abs(x).at(0) == 1.5);
  CHECK(gear::tanh(x).at(2) == doctest::Approx(std::tanh(2.0)));
  CHECK(softplus(x).at(1) == doctest::Approx(std::log(2.0)));
  // softplus stays finite and exact-ish far from zero
  Tensor far = Tensor::vec({-800.0, 800.0});
  CHECK(softplus(far).at(0) == doctest::Approx(0.0));
  CHECK(softplus(far).at(1) == doctest::Approx(800.0));
}

TEST_CASE("concat, reshape, permute_rows values") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {5, 6});
  Tensor c = concat_last({a, b});
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c.at(0, 2) == 5.0);
  CHECK(c.at(1, 0) == 3.0);

  Tensor r = reshape(c, {3, 2});
  CHECK(r.at(0, 0) == 1.0);
  CHECK(r.at(2, 1) == 6.0);
  CHECK_THROWS_AS(reshape(c, {4, 2}), DimensionError);

  Tensor p = permute_rows(a, {1, 0});
  CHECK(p.at(0, 0) == 3.0);
  CHECK(p.at(1, 1) == 2.0);
  CHECK_THROWS_AS(permute_rows(a, {0, 0}), ContractError);
}

TEST_CASE("embedding ops gather and average") {
  Tensor table = Tensor::from({3, 2}, {1, 10, 2, 20, 3, 30});
  Tensor m = embedding_mean(table, {{0, 2}, {1}, {}});
  CHECK(m.shape() == Shape{3, 2});
  CHECK(m.at(0, 0) == doctest::Approx(2.0));
  CHECK(m.at(0, 1) == doctest::Approx(20.0));
  CHECK(m.at(1, 1) == doctest::Approx(20.0));
  CHECK(m.at(2, 0) == 0.0);

  Tensor g = embedding_rows(table, {2, 0});
  CHECK(g.at(0, 1) == 30.0);
  CHECK(g.at(1, 0) == 1.0);
  CHECK_THROWS_AS(embedding_rows(table, {3}), ContractError);
}

TEST_CASE("block attention equals per-block matmul") {
  Rng rng(301);
  const std::size_t g = 3, blocks = 4, d = 5;
  Tensor q = random_tensor(rng, {g * blocks, d});
  Tensor k = random_tensor(rng, {g * blocks, d});
  Tensor v = random_tensor(rng, {g * blocks, d});
  Tensor s = attention_scores(q, k, g);
  Tensor o = attention_apply(s, v, g);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t i = 0; i < g; ++i) {
      for (std::size_t j = 0; j < g; ++j) {
        double dot = 0.0;
        for (std::size_t l = 0; l < d; ++l)
          dot += q.at(b * g + i, l) * k.at(b * g + j, l);
        CHECK(s.at(b * g + i, j) == doctest::Approx(dot).epsilon(1e-12));
      }
      for (std::size_t l = 0; l < d; ++l) {
        double acc = 0.0;
        for (std::size_t j = 0; j < g; ++j)
          acc += s.at(b * g + i, j) * v.at(b * g + j, l);
        CHECK(o.at(b * g + i, l) == doctest::Approx(acc).epsilon(1e-12));
      }
    }
  }
  CHECK_THROWS_AS(attention_scores(q, k, 5), DimensionError);
}

TEST_CASE("backward on a small composite graph") {
  // f(x) = sum(relu(x) * x) at x = [-2, 3]: d/dx = [0, 2*3] = [0, 6]
  Tape tape;
  Tensor x = tape.leaf(Tensor::vec({-2.0, 3.0}));
  Tensor y = sum(mul(relu(x), x));
  tape.backward(y);
  Tensor g = tape.grad(x);
  CHECK(g.at(0) == 0.0);
  CHECK(g.at(1) == 6.0);
}

TEST_CASE("backward requires a scalar root on the same tape") {
  Tape tape;
  Tensor x = tape.leaf(Tensor::vec({1.0, 2.0}));
  Tensor y = scale(x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ContractError);  // not scalar
  CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), ContractError);  // constant

  Tape other;
  Tensor z = other.leaf(Tensor::scalar(1.0));
  CHECK_THROWS_AS(tape.backward(z), ContractError);  // wrong tape
}

TEST_CASE("mixing tapes in one op is rejected") {
  Tape t1, t2;
  Tensor a = t1.leaf(Tensor::vec({1.0}));
  Tensor b = t2.leaf(Tensor::vec({1.0}));
  CHECK_THROWS_AS(add(a, b), ContractError);
}

TEST_CASE("stop_gradient blocks flow and shares values") {
  Tape tape;
  Tensor x = tape.leaf(Tensor::vec({2.0, -1.0}));
  Tensor y = scale(x, 3.0);
  Tensor held = stop_gradient(y);
  CHECK(!held.grad_enabled());
  CHECK(held.at(0) == 6.0);

  Tensor loss = sum(add(mul(held, x), x));
  tape.backward(loss);
  // d/dx [ sg(3x)*x + x ] = sg(3x) + 1 elementwise
  Tensor g = tape.grad(x);
  CHECK(g.at(0) == doctest::Approx(7.0));
  CHECK(g.at(1) == doctest::Approx(-2.0));
}

TEST_CASE("two backward passes on one graph reset gradients") {
  Tape tape;
  Tensor x = tape.leaf(Tensor::vec({1.0, 2.0}));
  Tensor a = sum(scale(x, 2.0));
  Tensor b = sum(mul(x, x));
  tape.backward(a);
  CHECK(tape.grad(x).at(1) == 2.0);
  tape.backward(b);
  CHECK(tape.grad(x).at(1) == 4.0);  // not 2 + 4
  CHECK(!tape.has_grad(a));          // a is not an ancestor of b
}

TEST_CASE("grad_or_zeros covers untouched leaves") {
  Tape tape;
  Tensor x = tape.leaf(Tensor::vec({1.0}));
  Tensor y = tape.leaf(Tensor::vec({1.0}));
  tape.backward(sum(x));
  CHECK(!tape.has_grad(y));
  CHECK(tape.grad_or_zeros(y).at(0) == 0.0);
  CHECK_THROWS_AS(tape.grad(y), ContractError);
}

TEST_CASE("ops without a tape stay constant") {
  Tensor a = Tensor::vec({1.0, 2.0});
  Tensor b = relu(add(a, a));
  CHECK(!b.grad_enabled());
  CHECK(b.tape() == nullptr);
}

// Finite-difference sweep over every op, multiple shapes and draws.
TEST_CASE("finite differences agree with every op's backward") {
  Rng rng(555);
  const double tol = 1e-4;
  auto check = [&](const char* name, const ScalarFn& fn, const Tensor& x0) {
    auto res = finite_diff_check(fn, x0);
    INFO(name << " worst idx " << res.worst_index << " analytic "
              << res.analytic << " numeric " << res.numeric);
    CHECK(res.max_rel_err < tol);
  };

  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor(rng, {3, 4});
    Tensor w = random_tensor(rng, {4, 2});
    Tensor b1 = random_tensor(rng, {1, 4});

    check("add", [&](Tape& t, const Tensor& v) {
      return sum(add(v, t.leaf(w.clone())));
    }, random_tensor(rng, {4, 2}));
    check("sub-rhs", [&](Tape& t, const Tensor& v) {
      return sum(sub(t.leaf(w.clone()), v));
    }, random_tensor(rng, {4, 2}));
    check("mul", [&](Tape& t, const Tensor& v) {
      return sum(mul(v, t.leaf(x.clone())));
    }, random_tensor(rng, {3, 4}));
    check("scale", [](Tape&, const Tensor& v) { return sum(scale(v, -1.7)); },
          random_tensor(rng, {5}));
    check("add_row-x", [&](Tape& t, const Tensor& v) {
      return sum(add_row(v, t.leaf(b1.clone())));
    }, random_tensor(rng, {3, 4}));
    check("add_row-bias", [&](Tape& t, const Tensor& v) {
      return sum(mul(add_row(t.leaf(x.clone()), v),
                     add_row(t.leaf(x.clone()), v)));
    }, random_tensor(rng, {4}));
    // keep relu/abs probes away from the kink at 0
    {
      Tensor xa = random_tensor(rng, {6});
      for (auto& vv : xa.data_mut())
        if (std::fabs(vv) < 1e-3) vv = 0.5;
      check("relu", [](Tape&, const Tensor& v) { return sum(relu(v)); }, xa);
      check("abs", [](Tape&, const Tensor& v) { return sum(gear::abs(v)); }, xa);
    }
    check("tanh", [](Tape&, const Tensor& v) { return sum(gear::tanh(v)); },
          random_tensor(rng, {6}));
    check("softplus", [](Tape&, const Tensor& v) { return sum(softplus(v)); },
          random_tensor(rng, {6}, -4.0, 4.0));
    check("matmul-a", [&](Tape& t, const Tensor& v) {
      return sum(matmul(v, t.leaf(w.clone())));
    }, random_tensor(rng, {3, 4}));
    check("matmul-b", [&](Tape& t, const Tensor& v) {
      return sum(matmul(t.leaf(x.clone()), v));
    }, random_tensor(rng, {4, 2}));
    check("row_softmax", [](Tape&, const Tensor& v) {
      // weighted sum so the gradient is not identically zero
      Tensor y = row_softmax(v);
      Tensor wts = Tensor::from({3, 4}, {1, -2, 3, -4, 2, 0.5, -1, 1, -3, 2, 1, 0});
      return sum(mul(y, wts));
    }, random_tensor(rng, {3, 4}));
    Tensor cc_other = random_tensor(rng, {3, 2});
    check("concat_last", [&](Tape& t, const Tensor& v) {
      Tensor other = t.leaf(cc_other.clone());
      Tensor c = concat_last({v, other, v});
      return sum(mul(c, c));
    }, random_tensor(rng, {3, 4}));
    check("reshape", [](Tape&, const Tensor& v) {
      Tensor r = reshape(v, {2, 6});
      return sum(mul(r, r));
    }, random_tensor(rng, {3, 4}));
    check("permute_rows", [](Tape&, const Tensor& v) {
      Tensor p = permute_rows(v, {2, 0, 1});
      Tensor wts = Tensor::from({3, 4}, {1, 2, 3, 4, -1, -2, -3, -4, 0.5, 1, 1.5, 2});
      return sum(mul(p, wts));
    }, random_tensor(rng, {3, 4}));
    check("sum", [](Tape&, const Tensor& v) { return sum(mul(v, v)); },
          random_tensor(rng, {7}));
    check("mean", [](Tape&, const Tensor& v) { return mean(mul(v, v)); },
          random_tensor(rng, {7}));
    check("embedding_mean", [](Tape&, const Tensor& v) {
      Tensor e = embedding_mean(v, {{0, 1, 1}, {2}});
      return sum(mul(e, e));
    }, random_tensor(rng, {3, 4}));
    check("embedding_rows", [](Tape&, const Tensor& v) {
      Tensor e = embedding_rows(v, {2, 2, 0});
      return sum(mul(e, e));
    }, random_tensor(rng, {3, 4}));
    Tensor att_k = random_tensor(rng, {6, 4});
    Tensor att_q = random_tensor(rng, {6, 4});
    Tensor att_v = random_tensor(rng, {6, 4});
    Tensor att_a = random_tensor(rng, {6, 2});
    check("attention_scores-q", [&](Tape& t, const Tensor& v) {
      return sum(attention_scores(v, t.leaf(att_k.clone()), 3));
    }, random_tensor(rng, {6, 4}));
    check("attention_scores-k", [&](Tape& t, const Tensor& v) {
      Tensor s = attention_scores(t.leaf(att_q.clone()), v, 3);
      return sum(mul(s, s));
    }, random_tensor(rng, {6, 4}));
    check("attention_apply-a", [&](Tape& t, const Tensor& v) {
      Tensor o = attention_apply(v, t.leaf(att_v.clone()), 2);
      return sum(mul(o, o));
    }, random_tensor(rng, {6, 2}));
    check("attention_apply-v", [&](Tape& t, const Tensor& v) {
      Tensor o = attention_apply(t.leaf(att_a.clone()), v, 2);
      return sum(mul(o, o));
    }, random_tensor(rng, {6, 4}));
    check("attention-softmax-chain", [&](Tape& t, const Tensor& v) {
      Tensor s = row_softmax(scale(attention_scores(v, t.leaf(att_k.clone()), 3), 0.5));
      Tensor o = attention_apply(s, t.leaf(att_v.clone()), 3);
      return mean(mul(o, o));
    }, random_tensor(rng, {6, 4}));
  }
}

TEST_CASE("repeated evaluation is bitwise identical") {
  auto run = [] {
    Rng rng(777);
    Tensor x = random_tensor(rng, {4, 3});
    Tensor w = random_tensor(rng, {3, 3});
    Tape tape;
    Tensor xl = tape.leaf(x);
    Tensor wl = tape.leaf(w);
    Tensor h = gear::tanh(matmul(xl, wl));
    Tensor s = row_softmax(attention_scores(h, h, 2));
    Tensor o = attention_apply(s, h, 2);
    Tensor loss = mean(mul(o, o));
    tape.backward(loss);
    std::vector<double> out;
    out.push_back(loss.item());
    Tensor gw = tape.grad(wl);
    for (double v : gw.data()) out.push_back(v);
    return out;
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
