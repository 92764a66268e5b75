// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dsr/tensor.h"
#include "fd_check.h"

using namespace dsr;
using dsr::test::bitwise_equal;
using dsr::test::fd_gradient;
using dsr::test::max_rel_err;
using dsr::test::random_tensor;

TEST_CASE("matmul identity and hand-computed cases") {
  Tape tape;
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(bitwise_equal(tape.matmul(eye, a), a));

  Tensor row = Tensor::from({1, 2}, {1, 2});
  Tensor col = Tensor::from({2, 1}, {3, 4});
  CHECK(tape.matmul(row, col).value() == 11.0);

  CHECK_THROWS_AS(tape.matmul(row, row), DimensionError);
}

TEST_CASE("matmul gradients match finite differences to 1e-6") {
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor w = random_tensor({3, 2}, rng);  // weights make the scalar non-degenerate

  auto loss = [&]() {
    Tape t;
    return t.sum(t.mul(t.matmul(a, b), w)).value();
  };

  Tape tape;
  tape.watch(a);
  tape.watch(b);
  Tensor scalar = tape.sum(tape.mul(tape.matmul(a, b), w));
  tape.backward(scalar);

  CHECK(max_rel_err(tape.grad(a), fd_gradient(a, loss)) < 1e-6);
  CHECK(max_rel_err(tape.grad(b), fd_gradient(b, loss)) < 1e-6);
}

TEST_CASE("elementwise forward values and inverse pair") {
  Tape tape;
  Tensor x = Tensor::from({2}, {0.0, 1.0});
  Tensor e = tape.exp(x);
  CHECK(e.at(0) == 1.0);
  CHECK(e.at(1) == doctest::Approx(std::exp(1.0)).epsilon(1e-15));

  for (double v = -4.5; v <= 4.5; v += 0.5) {
    Tensor t = Tensor::scalar(v);
    CHECK(tape.log(tape.exp(t)).value() == doctest::Approx(v).epsilon(1e-14));
  }

  CHECK_THROWS_AS(tape.log(Tensor::scalar(0.0)), DomainError);
  CHECK_THROWS_AS(tape.log(Tensor::scalar(-1.0)), DomainError);
  CHECK_THROWS_AS(tape.exp(Tensor::scalar(1000.0)), DomainError);
}

TEST_CASE("tanh gradient at zero is one") {
  Tape tape;
  Tensor x = Tensor::scalar(0.0);
  tape.watch(x);
  Tensor y = tape.sum(tape.tanh(x));
  tape.backward(y);
  CHECK(tape.grad(x).at(0) == 1.0);
}

TEST_CASE("relu subgradient at zero is zero") {
  Tape tape;
  Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0});
  tape.watch(x);
  tape.backward(tape.sum(tape.relu(x)));
  Tensor g = tape.grad(x);
  CHECK(g.at(0) == 0.0);
  CHECK(g.at(1) == 0.0);
  CHECK(g.at(2) == 1.0);
}

TEST_CASE("softmax rows: symmetry, stabilization, row sums") {
  Tape tape;
  Tensor z = Tensor::from({1, 2}, {0.0, 0.0});
  Tensor p = tape.softmax_rows(z);
  CHECK(p.at(0, 0) == 0.5);
  CHECK(p.at(0, 1) == 0.5);

  Tensor big = Tensor::from({1, 2}, {1000.0, 0.0});
  Tensor pb = tape.softmax_rows(big);
  CHECK(pb.at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::isfinite(pb.at(0, 1)));

  Rng rng(3);
  Tensor r = random_tensor({5, 4}, rng);
  Tensor pr = tape.softmax_rows(r);
  for (int i = 0; i < 5; ++i) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s += pr.at(i, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax gradient vs finite differences") {
  Rng rng(11);
  Tensor z = random_tensor({2, 5}, rng);
  Tensor w = random_tensor({2, 5}, rng);
  auto loss = [&]() {
    Tape t;
    return t.sum(t.mul(t.softmax_rows(z), w)).value();
  };
  Tape tape;
  tape.watch(z);
  tape.backward(tape.sum(tape.mul(tape.softmax_rows(z), w)));
  CHECK(max_rel_err(tape.grad(z), fd_gradient(z, loss)) < 1e-5);
}

TEST_CASE("reductions") {
  Tape tape;
  CHECK(tape.sum(Tensor::from({3}, {1, 2, 3})).value() == 6.0);
  CHECK(tape.mean(Tensor::full({4}, 2.5)).value() == 2.5);

  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor s0 = tape.sum(x, 0);
  CHECK(s0.at(0) == 5.0);
  CHECK(s0.at(2) == 9.0);
  Tensor m1 = tape.mean(x, 1);
  CHECK(m1.at(0) == 2.0);
  CHECK_THROWS_AS(tape.sum(x, 2), DimensionError);

  // gradient of mean is 1/n everywhere
  Tensor y = Tensor::from({4}, {1, 2, 3, 4});
  Tape t2;
  t2.watch(y);
  t2.backward(t2.mean(y));
  for (int i = 0; i < 4; ++i) CHECK(t2.grad(y).at(i) == 0.25);
}

TEST_CASE("grad_reverse forward is bitwise identity") {
  Rng rng(5);
  Tensor x = random_tensor({3, 3}, rng);
  Tape tape;
  tape.watch(x);
  Tensor y = tape.grad_reverse(x, 0.7);
  CHECK(bitwise_equal(x, y));
}

TEST_CASE("grad_reverse backward multiplies by -lambda") {
  Tensor x = Tensor::from({2}, {1.0, 1.0});
  {
    Tape tape;
    tape.watch(x);
    tape.backward(tape.sum(tape.grad_reverse(x, 1.0)));
    CHECK(tape.grad(x).at(0) == -1.0);
    CHECK(tape.grad(x).at(1) == -1.0);
  }
  {
    // upstream (2, -4), lambda 0.5 -> (-1, 2)
    Tape tape;
    tape.watch(x);
    Tensor w = Tensor::from({2}, {2.0, -4.0});
    tape.backward(tape.sum(tape.mul(tape.grad_reverse(x, 0.5), w)));
    CHECK(tape.grad(x).at(0) == -1.0);
    CHECK(tape.grad(x).at(1) == 2.0);
  }
}

TEST_CASE("grad_reverse dual-run contract over a lambda grid") {
  // Through a nonlinear graph the reversed gradient must equal exactly
  // -lambda times the identity-graph gradient (exact for these lambdas).
  Rng rng(13);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor w = random_tensor({3, 2}, rng);
  for (double lambda : {0.0, 0.5, 1.0, 2.0}) {
    Tape with_grl;
    with_grl.watch(x);
    with_grl.backward(with_grl.sum(with_grl.tanh(with_grl.matmul(with_grl.grad_reverse(x, lambda), w))));
    Tensor g1 = with_grl.grad(x);

    Tape identity;
    identity.watch(x);
    identity.backward(identity.sum(identity.tanh(identity.matmul(x, w))));
    Tensor g0 = identity.grad(x);

    for (std::int64_t i = 0; i < x.size(); ++i) {
      CHECK(g1.at(i) == -lambda * g0.at(i));
    }
  }
}

TEST_CASE("backward basics") {
  Tensor x = Tensor::from({3}, {5.0, -1.0, 2.0});
  {
    Tape tape;
    tape.watch(x);
    tape.backward(tape.sum(x));
    for (int i = 0; i < 3; ++i) CHECK(tape.grad(x).at(i) == 1.0);
  }
  {
    Tensor v = Tensor::from({2}, {1.0, 2.0});
    Tape tape;
    tape.watch(v);
    tape.backward(tape.sum(tape.mul(v, v)));
    CHECK(tape.grad(v).at(0) == 2.0);
    CHECK(tape.grad(v).at(1) == 4.0);
  }
  {
    Tape tape;
    tape.watch(x);
    Tensor y = tape.mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);  // non-scalar loss
    Tensor off;
    CHECK_THROWS_AS(tape.grad(Tensor::scalar(1.0)), ContractError);
  }
}

TEST_CASE("every differentiable op matches finite differences") {
  // Spec invariant: |analytic - fd| / max(|analytic|, 1e-8) < 1e-4 on random
  // inputs in [-2, 2], h = 1e-5.
  Rng rng(42);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor other = random_tensor({4, 3}, rng);
  Tensor rowv = random_tensor({3}, rng);
  Tensor w = random_tensor({4, 3}, rng);
  // Keep relu inputs away from its kink.
  for (std::int64_t i = 0; i < x.size(); ++i) {
    if (std::abs(x.at(i)) < 1e-3) x.at(i) = 0.5;
  }

  struct Case {
    const char* name;
    std::function<Tensor(Tape&)> build;
  };
  const std::vector<Case> cases = {
      {"add", [&](Tape& t) { return t.add(x, other); }},
      {"add_rowvec", [&](Tape& t) { return t.add(x, rowv); }},
      {"sub", [&](Tape& t) { return t.sub(x, other); }},
      {"mul", [&](Tape& t) { return t.mul(x, other); }},
      {"mul_rowvec", [&](Tape& t) { return t.mul(x, rowv); }},
      {"neg", [&](Tape& t) { return t.neg(x); }},
      {"exp", [&](Tape& t) { return t.exp(x); }},
      {"log", [&](Tape& t) { return t.log(t.add_scalar(t.mul(x, x), 0.5)); }},
      {"tanh", [&](Tape& t) { return t.tanh(x); }},
      {"relu", [&](Tape& t) { return t.relu(x); }},
      {"scale", [&](Tape& t) { return t.scale(x, -1.7); }},
      {"add_scalar", [&](Tape& t) { return t.add_scalar(x, 3.1); }},
      {"sum_axis0", [&](Tape& t) { return t.sum(x, 0); }},
      {"mean_axis1", [&](Tape& t) { return t.mean(x, 1); }},
      {"softmax", [&](Tape& t) { return t.softmax_rows(x); }},
      {"clamp_min", [&](Tape& t) { return t.clamp_min(x, -0.4); }},
      {"clamp", [&](Tape& t) { return t.clamp(x, -1.2, 1.2); }},
      {"concat", [&](Tape& t) { return t.concat_cols(x, other); }},
      {"slice_cols", [&](Tape& t) { return t.slice_cols(x, 1, 3); }},
      {"slice_rows", [&](Tape& t) { return t.slice_rows(x, 0, 2); }},
      {"matmul", [&](Tape& t) { return t.matmul(x, t.slice_rows(other, 0, 3)); }},
  };

  for (const auto& c : cases) {
    CAPTURE(c.name);
    // Clamp/relu kinks: nudge inputs off the boundaries used above.
    auto loss = [&]() {
      Tape t;
      Tensor out = c.build(t);
      Tensor ww = out.same_shape(w) ? w : Tensor::full(out.shape(), 0.37);
      return t.sum(t.mul(out, ww)).value();
    };
    Tape tape;
    tape.watch(x);
    {
      Tensor out = c.build(tape);
      Tensor ww = out.same_shape(w) ? w : Tensor::full(out.shape(), 0.37);
      tape.backward(tape.sum(tape.mul(out, ww)));
    }
    const double err = max_rel_err(tape.grad(x), fd_gradient(x, loss));
    CHECK_MESSAGE(err < 1e-4, c.name << " rel err " << err);
  }
}

TEST_CASE("select_cols gathers and scatters") {
  Tensor p = Tensor::from({2, 3}, {0.1, 0.7, 0.2, 0.5, 0.2, 0.3});
  Tape tape;
  tape.watch(p);
  Tensor picked = tape.select_cols(p, {1, 0});
  CHECK(picked.at(0) == 0.7);
  CHECK(picked.at(1) == 0.5);
  tape.backward(tape.sum(picked));
  CHECK(tape.grad(p).at(0, 1) == 1.0);
  CHECK(tape.grad(p).at(1, 0) == 1.0);
  CHECK(tape.grad(p).at(0, 0) == 0.0);

  CHECK_THROWS_AS(tape.select_cols(p, {3, 0}), DataError);
}

TEST_CASE("tape replay is deterministic") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor({4, 4}, rng);
    Tensor w = random_tensor({4, 2}, rng);
    Tape tape;
    tape.watch(w);
    Tensor loss = tape.mean(tape.tanh(tape.matmul(x, w)));
    tape.backward(loss);
    return std::pair<double, Tensor>(loss.value(), tape.grad(w));
  };
  auto [l1, g1] = run(99);
  auto [l2, g2] = run(99);
  CHECK(l1 == l2);
  CHECK(bitwise_equal(g1, g2));
}

TEST_CASE("backward is linear over summed losses") {
  Rng rng(21);
  Tensor w = random_tensor({3, 3}, rng);
  Tensor x = random_tensor({2, 3}, rng);

  Tape combined;
  combined.watch(w);
  Tensor l1 = combined.mean(combined.tanh(combined.matmul(x, w)));
  Tensor l2 = combined.sum(combined.mul(w, w));
  combined.backward(combined.add(l1, l2));
  Tensor g_sum = combined.grad(w);

  Tape ta;
  ta.watch(w);
  ta.backward(ta.mean(ta.tanh(ta.matmul(x, w))));
  Tape tb;
  tb.watch(w);
  tb.backward(tb.sum(tb.mul(w, w)));

  for (std::int64_t i = 0; i < w.size(); ++i) {
    CHECK(g_sum.at(i) == doctest::Approx(ta.grad(w).at(i) + tb.grad(w).at(i)).epsilon(1e-12));
  }
}

TEST_CASE("watched but unused leaves get zero gradients") {
  Tensor used = Tensor::from({2}, {1.0, 2.0});
  Tensor unused = Tensor::from({2}, {3.0, 4.0});
  Tape tape;
  tape.watch(used);
  tape.watch(unused);
  tape.backward(tape.sum(used));
  CHECK(tape.grad(unused).at(0) == 0.0);
  CHECK(tape.grad(unused).at(1) == 0.0);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0}), DimensionError);
  CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::from({1, 2}, {1.0, 2.0}).value(), ContractError);
}
