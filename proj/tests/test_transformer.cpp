// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"
#include "trifuse/branches.hpp"
#include "trifuse/transformer.hpp"

using namespace trifuse;
using namespace trifuse::testing;

namespace {

std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("two-token attention reduces to the logistic mix") {
  // q·k1 = 0, q·k2 = 2 with d_k = 4 -> scores 0 and 1, so weight on row 2 is e/(e+1).
  Tape tape;
  Pass pass{tape};
  Tensor q({1, 4}, {1, 1, 0, 0});
  Tensor k({2, 4}, {0, 0, 0, 0, 1, 1, 0, 0});
  Tensor v({2, 2}, {1, 0, 0, 1});
  Tensor out = scaled_dot_attention(pass, q, k, v, Mask::all_valid(1, 2));
  const double sigma = std::exp(1.0) / (std::exp(1.0) + 1.0);
  CHECK(out.values()[0] == doctest::Approx(1.0 - sigma).epsilon(1e-14));
  CHECK(out.values()[1] == doctest::Approx(sigma).epsilon(1e-14));
}

TEST_CASE("scaled_dot_attention matches the direct formula with masks") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t s = 1 + rng.below(6), d = 1 + rng.below(5), dv = 1 + rng.below(4);
    const std::size_t valid_n = 1 + rng.below(s);
    Tensor q = random_tensor(rng, {s, d}, false, -2, 2);
    Tensor k = random_tensor(rng, {s, d}, false, -2, 2);
    Tensor v = random_tensor(rng, {s, dv}, false, -2, 2);
    std::vector<bool> valid(s);
    for (std::size_t j = 0; j < s; ++j) valid[j] = j < valid_n;
    Tape tape;
    Pass pass{tape};
    Tensor out = scaled_dot_attention(pass, q, k, v, Mask::from_lengths({valid_n}, s));
    const auto want = naive_attention(to_vec(q), to_vec(k), to_vec(v), valid, s, s, d, dv);
    CHECK(max_abs_diff(out.values(), want) < 1e-12);
  }
}

TEST_CASE("multi-head attention equals manual per-head composition") {
  Rng rng(12);
  ModelConfig c = tiny_config(8, 2);
  auto p = AttentionHeadParams::init(c, rng);
  const std::size_t s = 5;
  Tensor x = random_tensor(rng, {s, 8});
  Tape tape;
  Pass pass{tape};
  Tensor out = multi_head_attention(pass, x, p, Mask::all_valid(1, s));

  std::vector<double> joined(s * 8);
  for (std::size_t h = 0; h < 2; ++h) {
    const auto q = naive_matmul(to_vec(x), to_vec(p.w_q[h]), s, 8, 4);
    const auto k = naive_matmul(to_vec(x), to_vec(p.w_k[h]), s, 8, 4);
    const auto v = naive_matmul(to_vec(x), to_vec(p.w_v[h]), s, 8, 4);
    const auto head = naive_attention(q, k, v, std::vector<bool>(s, true), s, s, 4, 4);
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < 4; ++j) joined[i * 8 + h * 4 + j] = head[i * 4 + j];
  }
  const auto want = naive_matmul(joined, to_vec(p.w_o), s, 8, 8);
  CHECK(max_abs_diff(out.values(), want) < 1e-12);
}

TEST_CASE("attention outputs stay inside the span of valid value rows") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t B = 1 + rng.below(3), s = 1 + rng.below(6), d = 1 + rng.below(4);
    std::vector<std::size_t> lens(B);
    for (auto& l : lens) l = 1 + rng.below(s);
    Tensor q = random_tensor(rng, {B, s, d}, false, -3, 3);
    Tensor k = random_tensor(rng, {B, s, d}, false, -3, 3);
    Tensor v = random_tensor(rng, {B, s, d}, false, -3, 3);
    Tape tape;
    Pass pass{tape};
    Tensor out = scaled_dot_attention(pass, q, k, v, Mask::from_lengths(lens, s));
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < d; ++c) {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t j = 0; j < lens[b]; ++j) {
          lo = std::min(lo, v.values()[(b * s + j) * d + c]);
          hi = std::max(hi, v.values()[(b * s + j) * d + c]);
        }
        for (std::size_t i = 0; i < s; ++i) {
          const double o = out.values()[(b * s + i) * d + c];
          CHECK(o >= lo - 1e-12);
          CHECK(o <= hi + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("multi-head attention is permutation equivariant without positions") {
  Rng rng(14);
  ModelConfig c = tiny_config(8, 2);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = AttentionHeadParams::init(c, rng);
    const std::size_t s = 2 + rng.below(5);
    Tensor x = random_tensor(rng, {s, 8});
    std::vector<std::size_t> perm(s);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Tensor xp({s, 8});
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < 8; ++j) xp.values_mut()[i * 8 + j] = x.values()[perm[i] * 8 + j];
    Tape tape;
    Pass pass{tape};
    Tensor y = multi_head_attention(pass, x, p, Mask::all_valid(1, s));
    Tensor yp = multi_head_attention(pass, xp, p, Mask::all_valid(1, s));
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < 8; ++j)
        CHECK(std::abs(yp.values()[i * 8 + j] - y.values()[perm[i] * 8 + j]) < 1e-12);
  }
}

TEST_CASE("masked input rows never influence valid outputs of an encoder layer") {
  Rng rng(15);
  ModelConfig c = tiny_config(8, 2);
  for (int trial = 0; trial < 30; ++trial) {
    auto layer = EncoderLayerParams::init(c, rng);
    const std::size_t s = 2 + rng.below(5), valid = 1 + rng.below(s - 1);
    Tensor zeros = random_tensor(rng, {1, s, 8});
    Tensor noisy = zeros.clone();
    for (std::size_t i = valid; i < s; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        zeros.values_mut()[i * 8 + j] = 0.0;
        noisy.values_mut()[i * 8 + j] = rng.uniform(-50, 50);
      }
    Mask m = Mask::from_lengths({valid}, s);
    Tape tape;
    Pass pass{tape};
    Tensor a = encoder_layer(pass, zeros, layer, m);
    Tensor b = encoder_layer(pass, noisy, layer, m);
    CHECK(max_abs_diff(a.values().subspan(0, valid * 8), b.values().subspan(0, valid * 8)) <= 1e-10);
  }
}

TEST_CASE("encoder stack passes an end-to-end gradient check") {
  Rng rng(16);
  ModelConfig c = tiny_config(8, 2, 2);
  std::vector<EncoderLayerParams> layers = {EncoderLayerParams::init(c, rng), EncoderLayerParams::init(c, rng)};
  Tensor x = random_tensor(rng, {2, 4, 8}, true);
  Tensor w = random_tensor(rng, {2, 4, 8});
  Mask m = Mask::from_lengths({4, 3}, 4);
  std::vector<Tensor> params = {x};
  std::vector<NamedTensor> named;
  for (const auto& l : layers) l.collect("", named);
  for (const auto& n : named) params.push_back(n.tensor);
  auto loss = [&](Tape& t) {
    Pass pass{t};
    Tensor h = x;
    for (const auto& l : layers) h = encoder_layer(pass, h, l, m);
    return sum(t, hadamard(t, h, w));
  };
  CHECK(grad_check(loss, params) < 1e-4);
}

TEST_CASE("positional encoding follows the sinusoid table and enforces the length cap") {
  Tensor pe = positional_encoding(5, 6, 64);
  for (std::size_t p = 0; p < 5; ++p) {
    for (std::size_t i = 0; i < 3; ++i) {
      const double angle = static_cast<double>(p) / std::pow(10000.0, 2.0 * i / 6.0);
      CHECK(pe.values()[p * 6 + 2 * i] == doctest::Approx(std::sin(angle)).epsilon(1e-15));
      CHECK(pe.values()[p * 6 + 2 * i + 1] == doctest::Approx(std::cos(angle)).epsilon(1e-15));
    }
  }
  CHECK_THROWS_AS(positional_encoding(65, 6, 64), ValidationError);
}

TEST_CASE("model config rejects d_model not divisible by heads") {
  ModelConfig c = tiny_config(8, 3);
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("dropout inside attention is off at inference and draws from the rng in training") {
  Rng rng(17);
  ModelConfig c = tiny_config(8, 2);
  auto layer = EncoderLayerParams::init(c, rng);
  Tensor x = random_tensor(rng, {1, 4, 8});
  Mask m = Mask::all_valid(1, 4);
  Tape tape;
  Pass eval_pass{tape, false, 0.5, &rng};
  const auto before = rng.state();
  Tensor a = encoder_layer(eval_pass, x, layer, m);
  Tensor b = encoder_layer(eval_pass, x, layer, m);
  CHECK(rng.state() == before);
  CHECK(max_abs_diff(a.values(), b.values()) == 0.0);
  Pass train_pass{tape, true, 0.5, &rng};
  Tensor t = encoder_layer(train_pass, x, layer, m);
  CHECK(rng.state() != before);
  CHECK(max_abs_diff(a.values(), t.values()) > 0.0);
}

// ---------------------------------------------------------------------------
// branches

TEST_CASE("padding does not change any branch output") {
  Rng rng(21);
  for (TextMode mode : {TextMode::embeddings, TextMode::tokens}) {
    ModelConfig c = tiny_config(8, 2);
    c.text_mode = mode;
    c.vocab_size = 11;
    Model model = Model::init(c, FusionMode::full, rng);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<MultimodalSample> samples;
      for (int i = 0; i < 4; ++i) samples.push_back(random_sample(rng, c, 1, 7, i));
      const auto ptrs = pointers(samples);
      Tape tape;
      Pass pass{tape};
      Batch batch = collate(ptrs, mode);
      Tensor zi = encode_features(pass, model.image(), batch.image.features, batch.image.mask, c);
      Tensor za = encode_features(pass, model.audio(), batch.audio.features, batch.audio.mask, c);
      Tensor zt = mode == TextMode::embeddings
                      ? encode_features(pass, model.text(), batch.text.features, batch.text.mask, c)
                      : encode_tokens(pass, model.text(), batch.text_tokens, batch.text_token_mask, c);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        Tensor ui = encode_image(pass, samples[i].image, model.image(), c);
        Tensor ua = encode_audio(pass, samples[i].audio, model.audio(), c);
        Tensor ut = encode_text(pass, samples[i].text, model.text(), c);
        CHECK(max_abs_diff(zi.values().subspan(i * 8, 8), ui.values()) <= 1e-10);
        CHECK(max_abs_diff(za.values().subspan(i * 8, 8), ua.values()) <= 1e-10);
        CHECK(max_abs_diff(zt.values().subspan(i * 8, 8), ut.values()) <= 1e-10);
      }
    }
  }
}

TEST_CASE("each branch passes a gradient check end to end") {
  Rng rng(22);
  ModelConfig c = tiny_config(8, 2);
  c.text_mode = TextMode::tokens;
  c.vocab_size = 9;
  Model model = Model::init(c, FusionMode::full, rng);
  MultimodalSample s = random_sample(rng, c, 2, 4, 3);
  Tensor w = random_tensor(rng, {8});
  auto params_of = [](const BranchParams& b) {
    std::vector<NamedTensor> named;
    b.collect("", named);
    std::vector<Tensor> out;
    for (auto& n : named) out.push_back(n.tensor);
    return out;
  };
  CHECK(grad_check([&](Tape& t) { Pass p{t}; return sum(t, hadamard(t, encode_image(p, s.image, model.image(), c), w)); },
                   params_of(model.image())) < 1e-4);
  CHECK(grad_check([&](Tape& t) { Pass p{t}; return sum(t, hadamard(t, encode_audio(p, s.audio, model.audio(), c), w)); },
                   params_of(model.audio())) < 1e-4);
  CHECK(grad_check([&](Tape& t) { Pass p{t}; return sum(t, hadamard(t, encode_text(p, s.text, model.text(), c), w)); },
                   params_of(model.text())) < 1e-4);
}

TEST_CASE("branches share no parameters") {
  Rng rng(23);
  ModelConfig c = tiny_config(8, 2);
  Model model = Model::init(c, FusionMode::full, rng);
  MultimodalSample s = random_sample(rng, c, 3, 5, 0);
  Tape tape;
  Pass pass{tape};
  Tensor za = encode_audio(pass, s.audio, model.audio(), c);
  Tensor zt = encode_text(pass, s.text, model.text(), c);
  std::vector<NamedTensor> named;
  model.image().collect("", named);
  for (auto& n : named)
    for (auto& v : n.tensor.values_mut()) v += rng.uniform(-1, 1);
  Tensor za2 = encode_audio(pass, s.audio, model.audio(), c);
  Tensor zt2 = encode_text(pass, s.text, model.text(), c);
  CHECK(max_abs_diff(za.values(), za2.values()) == 0.0);
  CHECK(max_abs_diff(zt.values(), zt2.values()) == 0.0);
}

TEST_CASE("token input equals feeding the embedding rows as precomputed features") {
  Rng rng(24);
  ModelConfig c = tiny_config(8, 2);
  c.text_mode = TextMode::tokens;
  c.vocab_size = 13;
  Model model = Model::init(c, FusionMode::full, rng);
  ModelConfig ce = c;
  ce.text_mode = TextMode::embeddings;
  for (int trial = 0; trial < 10; ++trial) {
    MultimodalSample s = random_sample(rng, c, 1, 6, 0);
    const auto& ids = *s.text.token_ids;
    TextSequence as_features;
    FeatureMatrix m{ids.size(), c.d_text, {}};
    for (int id : ids) {
      auto row = model.text().embedding.values().subspan(static_cast<std::size_t>(id) * c.d_text, c.d_text);
      m.values.insert(m.values.end(), row.begin(), row.end());
    }
    as_features.embeddings = m;
    BranchParams plain = model.text();
    plain.embedding = Tensor();
    Tape tape;
    Pass pass{tape};
    Tensor a = encode_text(pass, s.text, model.text(), c);
    Tensor b = encode_text(pass, as_features, plain, ce);
    CHECK(max_abs_diff(a.values(), b.values()) <= 1e-12);
  }
}

TEST_CASE("text branch rejects the wrong input kind and bad dims") {
  Rng rng(25);
  ModelConfig c = tiny_config(8, 2);
  Model model = Model::init(c, FusionMode::full, rng);
  TextSequence t;
  t.token_ids = std::vector<int>{1, 2};
  Tape tape;
  Pass pass{tape};
  CHECK_THROWS_AS(encode_text(pass, t, model.text(), c), ValidationError);
  ImageSequence img;
  img.features = FeatureMatrix{2, c.d_img + 1, std::vector<double>(2 * (c.d_img + 1), 0.0)};
  CHECK_THROWS_AS(encode_image(pass, img, model.image(), c), DimensionError);
}
