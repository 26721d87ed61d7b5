// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "trifuse/branches.hpp"
#include "trifuse/fusion.hpp"

using namespace trifuse;
using namespace trifuse::testing;

TEST_CASE("fusion weights start uniform and stay on the simplex") {
  Rng rng(31);
  CHECK(FusionWeights::zeros().effective()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  for (int trial = 0; trial < 200; ++trial) {
    FusionWeights w{random_tensor(rng, {3}, true, -30, 30)};
    const auto e = w.effective();
    CHECK(std::abs(e[0] + e[1] + e[2] - 1.0) < 1e-12);
    for (double x : e) CHECK(x >= 0.0);
  }
}

TEST_CASE("fuse of identical vectors is that vector") {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor v = random_tensor(rng, {2, 6}, false, -5, 5);
    FusionWeights w{random_tensor(rng, {3}, false, -4, 4)};
    Tape tape;
    CHECK(max_abs_diff(fuse(tape, v, v, v, w).values(), v.values()) <= 1e-10);
  }
}

TEST_CASE("fuse is coordinate-wise convex") {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = random_tensor(rng, {5}), b = random_tensor(rng, {5}), c = random_tensor(rng, {5});
    FusionWeights w{random_tensor(rng, {3}, false, -4, 4)};
    Tape tape;
    Tensor f = fuse(tape, a, b, c, w);
    for (std::size_t i = 0; i < 5; ++i) {
      const double lo = std::min({a.values()[i], b.values()[i], c.values()[i]});
      const double hi = std::max({a.values()[i], b.values()[i], c.values()[i]});
      CHECK(f.values()[i] >= lo - 1e-15);
      CHECK(f.values()[i] <= hi + 1e-15);
    }
  }
}

TEST_CASE("saturated fusion logits select a single branch") {
  Rng rng(34);
  Tensor a = random_tensor(rng, {4}), b = random_tensor(rng, {4}), c = random_tensor(rng, {4});
  const Tensor* branch[] = {&a, &b, &c};
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> logits(3, 0.0);
    logits[k] = 1000.0;
    FusionWeights w{Tensor({3}, logits)};
    Tape tape;
    CHECK(max_abs_diff(fuse(tape, a, b, c, w).values(), branch[k]->values()) <= 1e-10);
  }
}

TEST_CASE("classifier output is a probability distribution") {
  Rng rng(35);
  ModelConfig c = tiny_config(8, 2);
  for (int trial = 0; trial < 120; ++trial) {
    ClassifierHead head = ClassifierHead::init(c, rng);
    head.bias = random_tensor(rng, {7}, true, -3, 3);
    Tape tape;
    Tensor p = classify(tape, random_tensor(rng, {3, 8}, false, -10, 10), head);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) {
        CHECK(p.values()[r * 7 + k] >= 0.0);
        s += p.values()[r * 7 + k];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("cross entropy anchors") {
  Tape tape;
  Tensor uniform = Tensor::filled({2, 7}, 1.0 / 7.0);
  const int labels[] = {0, 5};
  CHECK(std::abs(cross_entropy(tape, uniform, labels).item() - std::log(7.0)) < 1e-9);
  std::vector<double> onehot(7, 0.0);
  onehot[3] = 1.0;
  const int three[] = {3};
  const double near_zero = cross_entropy(tape, Tensor({1, 7}, onehot), three).item();
  CHECK(near_zero >= 0.0);
  CHECK(near_zero < 1e-11);
  // The floor keeps a zero probability finite.
  const int zero[] = {0};
  CHECK(cross_entropy(tape, Tensor({1, 7}, onehot), zero).item() == doctest::Approx(-std::log(1e-12)));
  const int bad[] = {7};
  CHECK_THROWS_AS(cross_entropy(tape, Tensor({1, 7}, onehot), bad), ValidationError);
}

TEST_CASE("cross entropy is non-negative for random distributions") {
  Rng rng(36);
  for (int trial = 0; trial < 100; ++trial) {
    Tape tape;
    Tensor p = softmax_rows(tape, random_tensor(rng, {4, 7}, false, -6, 6));
    std::vector<int> labels(4);
    for (auto& l : labels) l = static_cast<int>(rng.below(7));
    CHECK(cross_entropy(tape, p, labels).item() >= 0.0);
  }
}

TEST_CASE("zero model on zero features predicts uniformly") {
  Rng rng(37);
  ModelConfig c = tiny_config(8, 2);
  Model m = Model::init(c, FusionMode::full, rng);
  for (auto& p : m.parameters())
    for (auto& v : p.tensor.values_mut()) v = 0.0;
  MultimodalSample s = random_sample(rng, c, 3, 3, 2);
  for (auto* f : {&s.image.features, &s.audio.features, &*s.text.embeddings})
    std::fill(f->values.begin(), f->values.end(), 0.0);
  Tape tape;
  Pass pass{tape};
  ForwardResult r = forward_full(pass, m, s);
  for (double p : r.probs.values()) CHECK(p == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  CHECK(std::abs(r.loss.item() - std::log(7.0)) < 1e-9);
}

TEST_CASE("unimodal modes ignore the other branches and pin the weights") {
  Rng rng(38);
  ModelConfig c = tiny_config(8, 2);
  Model m = Model::init(c, FusionMode::audio_only, rng);
  const auto w = m.effective_weights();
  CHECK(w[0] == 0.0);
  CHECK(w[1] == 1.0);
  CHECK(w[2] == 0.0);
  MultimodalSample s = random_sample(rng, c, 2, 5, 1);
  Tape tape;
  Pass pass{tape};
  ForwardResult a = forward_full(pass, m, s);
  MultimodalSample t = s;
  for (auto& v : t.image.features.values) v = rng.uniform(-9, 9);
  for (auto& v : t.text.embeddings->values) v = rng.uniform(-9, 9);
  ForwardResult b = forward_full(pass, m, t);
  CHECK(max_abs_diff(a.probs.values(), b.probs.values()) == 0.0);
}

TEST_CASE("full model passes a gradient check including fusion logits") {
  Rng rng(39);
  ModelConfig c = tiny_config(8, 2);
  Model m = Model::init(c, FusionMode::full, rng);
  m.fusion().logits.values_mut()[0] = 0.3;
  m.fusion().logits.values_mut()[2] = -0.4;
  std::vector<MultimodalSample> samples = {random_sample(rng, c, 2, 3, 1), random_sample(rng, c, 2, 3, 4)};
  const auto ptrs = pointers(samples);
  Batch batch = collate(ptrs, c.text_mode);
  std::vector<Tensor> params;
  for (auto& p : m.parameters()) params.push_back(p.tensor);
  CHECK(grad_check([&](Tape& t) { Pass p{t}; return forward_full(p, m, batch).loss; }, params) < 1e-4);
}

TEST_CASE("clone copies values into independent storage") {
  Rng rng(40);
  ModelConfig c = tiny_config(8, 2);
  c.text_mode = TextMode::tokens;
  c.vocab_size = 5;
  Model m = Model::init(c, FusionMode::full, rng);
  Model k = m.clone();
  const auto a = m.parameters(), b = k.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(max_abs_diff(a[i].tensor.values(), b[i].tensor.values()) == 0.0);
    CHECK(!a[i].tensor.is_same(b[i].tensor));
  }
  a[0].tensor.values_mut()[0] += 1.0;
  CHECK(b[0].tensor.values()[0] != a[0].tensor.values()[0]);
}

TEST_CASE("check_compatible names expected and actual dims") {
  Rng rng(41);
  ModelConfig c = tiny_config(8, 2);
  ModelConfig other = c;
  other.d_audio = c.d_audio + 2;
  MultimodalSample s = random_sample(rng, other, 2, 3, 0);
  try {
    check_compatible(c, s);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("d_audio") != std::string::npos);
    CHECK(msg.find(std::to_string(c.d_audio)) != std::string::npos);
    CHECK(msg.find(std::to_string(other.d_audio)) != std::string::npos);
  }
}
