// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "trifuse/tensor.hpp"

using namespace trifuse;
using namespace trifuse::testing;

TEST_CASE("matmul matches triple loop exactly on integer inputs") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.below(8), k = 1 + rng.below(8), n = 1 + rng.below(8);
    std::vector<double> a(m * k), b(k * n);
    for (auto& x : a) x = static_cast<double>(static_cast<int>(rng.below(19)) - 9);
    for (auto& x : b) x = static_cast<double>(static_cast<int>(rng.below(19)) - 9);
    Tape tape;
    Tensor c = matmul(tape, Tensor({m, k}, a), Tensor({k, n}, b));
    const auto want = naive_matmul(a, b, m, k, n);
    REQUIRE(c.shape() == Shape{m, n});
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(c.values()[i] == want[i]);
  }
}

TEST_CASE("batched and transposed matmul agree with per-slice oracle") {
  Rng rng(2);
  const std::size_t B = 3, m = 4, k = 5, n = 2;
  Tensor a = random_tensor(rng, {B, m, k});
  Tensor b = random_tensor(rng, {B, k, n});
  Tensor shared = random_tensor(rng, {k, n});
  Tape tape;
  Tensor c = matmul(tape, a, b);
  Tensor cs = matmul(tape, a, shared);
  // A·Bᵀ with B stored [n x k]
  Tensor bt({B, n, k});
  for (std::size_t s = 0; s < B; ++s)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < n; ++j)
        bt.values_mut()[s * n * k + j * k + i] = b.values()[s * k * n + i * n + j];
  Tensor ct = matmul_nt(tape, a, bt);
  for (std::size_t s = 0; s < B; ++s) {
    std::vector<double> as(a.values().begin() + s * m * k, a.values().begin() + (s + 1) * m * k);
    std::vector<double> bs(b.values().begin() + s * k * n, b.values().begin() + (s + 1) * k * n);
    std::vector<double> sh(shared.values().begin(), shared.values().end());
    const auto want = naive_matmul(as, bs, m, k, n);
    const auto want_shared = naive_matmul(as, sh, m, k, n);
    for (std::size_t i = 0; i < m * n; ++i) {
      CHECK(c.values()[s * m * n + i] == doctest::Approx(want[i]).epsilon(1e-14));
      CHECK(ct.values()[s * m * n + i] == doctest::Approx(want[i]).epsilon(1e-14));
      CHECK(cs.values()[s * m * n + i] == doctest::Approx(want_shared[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("matmul rejects mismatched inner dimensions with both shapes named") {
  Tape tape;
  try {
    matmul(tape, Tensor({2, 3}), Tensor({4, 2}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("softmax rows are distributions for random shapes and magnitudes") {
  Rng rng(3);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t r = 1 + rng.below(6), c = 1 + rng.below(9);
    const double mag = std::pow(10.0, rng.uniform(-2.0, 2.5));
    Tape tape;
    Tensor p = softmax_rows(tape, random_tensor(rng, {r, c}, false, -mag, mag));
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        CHECK(p.values()[i * c + j] >= 0.0);
        s += p.values()[i * c + j];
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("masked softmax gives masked columns exactly zero and rejects empty rows") {
  Tape tape;
  Tensor x({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.0, 5.0});
  Mask m = Mask::from_lengths({2}, 3);
  Tensor p = masked_softmax_rows(tape, x, m);
  CHECK(p.values()[2] == 0.0);
  CHECK(p.values()[5] == 0.0);
  CHECK(p.values()[0] + p.values()[1] == doctest::Approx(1.0).epsilon(1e-15));
  Mask none = Mask::from_lengths({0}, 3);
  CHECK_THROWS_AS(masked_softmax_rows(tape, x, none), DegenerateInputError);
}

TEST_CASE("layer_norm matches the two-pass oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = 1 + rng.below(5), d = 2 + rng.below(8);
    Tensor x = random_tensor(rng, {r, d}, false, -3, 3);
    Tensor g = random_tensor(rng, {d});
    Tensor b = random_tensor(rng, {d});
    Tape tape;
    Tensor y = layer_norm(tape, x, g, b);
    const auto want = naive_layer_norm({x.values().begin(), x.values().end()}, r, d,
                                       {g.values().begin(), g.values().end()},
                                       {b.values().begin(), b.values().end()}, 1e-5);
    CHECK(max_abs_diff(y.values(), want) < 1e-12);
  }
}

TEST_CASE("gelu uses the tanh form") {
  Tape tape;
  Tensor y = gelu(tape, Tensor({3}, {-1.0, 0.0, 2.0}));
  auto ref = [](double x) {
    return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
  };
  CHECK(y.values()[0] == doctest::Approx(ref(-1.0)).epsilon(1e-15));
  CHECK(y.values()[1] == 0.0);
  CHECK(y.values()[2] == doctest::Approx(ref(2.0)).epsilon(1e-15));
}

TEST_CASE("gradient check passes for every differentiable op on random inputs") {
  Rng rng(5);
  for (int trial = 0; trial < 8; ++trial) {
    Tensor a = random_tensor(rng, {3, 4}, true);
    Tensor b = random_tensor(rng, {4, 2}, true);
    Tensor c = random_tensor(rng, {3, 4}, true);
    Tensor bias = random_tensor(rng, {4}, true);
    Tensor gain = random_tensor(rng, {4}, true, 0.5, 1.5);
    Tensor w = random_tensor(rng, {3, 2}, true);  // weights the output so the loss is not symmetric
    Tensor w4 = random_tensor(rng, {3, 4}, true);
    Tensor s = random_tensor(rng, {1}, true);
    Tensor table = random_tensor(rng, {5, 4}, true);
    Tensor a3 = random_tensor(rng, {2, 3, 4}, true);
    Tensor b3 = random_tensor(rng, {2, 4, 3}, true);
    Tensor k3 = random_tensor(rng, {2, 3, 4}, true);
    Mask mask = Mask::from_lengths({4, 2}, 4);

    auto weighted = [&](Tape& t, const Tensor& y, const Tensor& weights) {
      return sum(t, hadamard(t, y, weights));
    };
    struct Case {
      const char* name;
      LossFn fn;
      std::vector<Tensor> params;
    };
    std::vector<Case> cases = {
        {"matmul", [&](Tape& t) { return weighted(t, matmul(t, a, b), w); }, {a, b}},
        {"matmul_nt", [&](Tape& t) { return sum(t, matmul_nt(t, a, c)); }, {a, c}},
        {"batched matmul", [&](Tape& t) { return mean(t, matmul(t, a3, b3)); }, {a3, b3}},
        {"batched matmul_nt", [&](Tape& t) { return mean(t, matmul_nt(t, a3, k3)); }, {a3, k3}},
        {"add/sub", [&](Tape& t) { return weighted(t, sub(t, add(t, a, c), c), w4); }, {a, c}},
        {"hadamard", [&](Tape& t) { return sum(t, hadamard(t, a, c)); }, {a, c}},
        {"scale", [&](Tape& t) { return weighted(t, scale(t, a, -1.7), w4); }, {a}},
        {"add_bias", [&](Tape& t) { return weighted(t, add_bias(t, a, bias), w4); }, {a, bias}},
        {"relu", [&](Tape& t) { return weighted(t, relu(t, a), w4); }, {a}},
        {"gelu", [&](Tape& t) { return weighted(t, gelu(t, a), w4); }, {a}},
        {"softmax", [&](Tape& t) { return weighted(t, softmax_rows(t, a), w4); }, {a}},
        {"masked softmax", [&](Tape& t) { return mean(t, hadamard(t, masked_softmax_rows(t, a3, mask), k3)); },
         {a3, k3}},
        {"layer_norm", [&](Tape& t) { return weighted(t, layer_norm(t, a, gain, bias), w4); }, {a, gain, bias}},
        {"concat", [&](Tape& t) { return sum(t, hadamard(t, concat_last(t, {a, c}), concat_last(t, {w4, c}))); },
         {a, c, w4}},
        {"reshape", [&](Tape& t) { return weighted(t, reshape(t, a, {3, 4}), w4); }, {a}},
        {"select/scale_by", [&](Tape& t) { return weighted(t, scale_by(t, a, select(t, bias, 2)), w4); },
         {a, bias}},
        {"scale_by scalar", [&](Tape& t) { return weighted(t, scale_by(t, a, s), w4); }, {a, s}},
        {"embedding", [&](Tape& t) { return mean(t, hadamard(t, embedding(t, table, {0, 2, 2, 4, 1, 0}, 2, 3), k3)); },
         {table, k3}},
    };
    for (auto& cs : cases) {
      INFO(cs.name);
      CHECK(grad_check(cs.fn, cs.params) < 1e-4);
    }
  }
}

TEST_CASE("reusing a tensor accumulates both path gradients") {
  Rng rng(6);
  Tensor x = random_tensor(rng, {2, 3}, true);
  Tensor w = random_tensor(rng, {2, 3});
  // Path 1: sum(x ⊙ w); path 2: sum(gelu(x)).
  auto path1 = [&](Tape& t) { return sum(t, hadamard(t, x, w)); };
  auto path2 = [&](Tape& t) { return sum(t, gelu(t, x)); };
  std::vector<double> g1, g2;
  {
    Tape t;
    Tensor l = path1(t);
    t.backward(l);
    g1.assign(x.grad().begin(), x.grad().end());
    x.zero_grad();
  }
  {
    Tape t;
    Tensor l = path2(t);
    t.backward(l);
    g2.assign(x.grad().begin(), x.grad().end());
    x.zero_grad();
  }
  Tape t;
  Tensor l = add(t, path1(t), path2(t));
  t.backward(l);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(x.grad()[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-15));
}

TEST_CASE("tape refuses a second backward and non-scalar losses") {
  Tensor x({2}, {1.0, 2.0}, true);
  Tape t;
  Tensor y = scale(t, x, 2.0);
  CHECK_THROWS_AS(t.backward(y), TapeError);
  Tensor l = sum(t, y);
  t.backward(l);
  CHECK_THROWS_AS(t.backward(l), TapeError);
  t.reset();
  CHECK(t.size() == 0);
}

TEST_CASE("inference tape records nothing") {
  Tensor x({2}, {1.0, 2.0}, true);
  Tape t(Tape::Mode::inference);
  Tensor l = sum(t, gelu(t, x));
  CHECK(t.size() == 0);
  CHECK(std::isfinite(l.item()));
}

TEST_CASE("non-finite forward values raise NumericError") {
  Tape t;
  Tensor x({2}, {1e308, 1e308});
  CHECK_THROWS_AS(scale(t, x, 10.0), NumericError);
}

TEST_CASE("dropout is identity at inference and keeps expectation in training") {
  Rng rng(7);
  Tensor x = Tensor::filled({10000}, 1.0);
  Tape t;
  Tensor same = dropout(t, x, 0.3, false, &rng);
  CHECK(max_abs_diff(same.values(), x.values()) == 0.0);
  Tensor d = dropout(t, x, 0.3, true, &rng);
  double s = 0.0;
  std::size_t zeros = 0;
  for (double v : d.values()) {
    s += v;
    zeros += v == 0.0;
    if (v != 0.0) CHECK(v == doctest::Approx(1.0 / 0.7).epsilon(1e-15));
  }
  CHECK(std::abs(s / 10000.0 - 1.0) < 0.03);
  CHECK(std::abs(static_cast<double>(zeros) / 10000.0 - 0.3) < 0.02);
}
