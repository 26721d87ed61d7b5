// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "trifuse/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "trifuse/rng.hpp"

namespace trifuse {

FusionWeights FusionWeights::zeros() { return FusionWeights{Tensor({3}, true)}; }

std::array<double, 3> FusionWeights::effective() const {
  auto l = logits.values();
  const double mx = std::max({l[0], l[1], l[2]});
  std::array<double, 3> w{};
  double z = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    w[i] = std::exp(l[i] - mx);
    z += w[i];
  }
  for (auto& x : w) x /= z;
  return w;
}

ClassifierHead ClassifierHead::init(const ModelConfig& config, Rng& rng) {
  ClassifierHead h;
  h.weight = uniform_param({config.d_model, config.n_classes},
                           1.0 / std::sqrt(static_cast<double>(config.d_model)), rng);
  h.bias = Tensor({config.n_classes}, true);
  return h;
}

std::string_view to_string(FusionMode m) {
  switch (m) {
    case FusionMode::full: return "full";
    case FusionMode::image_only: return "image_only";
    case FusionMode::audio_only: return "audio_only";
    case FusionMode::text_only: return "text_only";
  }
  return "full";
}

FusionMode parse_fusion_mode(std::string_view name) {
  for (auto m : {FusionMode::full, FusionMode::image_only, FusionMode::audio_only, FusionMode::text_only}) {
    if (to_string(m) == name) return m;
  }
  throw ValidationError("unknown ablation mode \"" + std::string(name) +
                        "\" (expected full|image_only|audio_only|text_only)");
}

Tensor fuse(Tape& tape, const Tensor& z_img, const Tensor& z_audio, const Tensor& z_text,
            const FusionWeights& w) {
  if (z_img.shape() != z_audio.shape() || z_img.shape() != z_text.shape()) {
    throw DimensionError("fuse: branch vectors differ in shape (" + shape_string(z_img.shape()) +
                         ", " + shape_string(z_audio.shape()) + ", " + shape_string(z_text.shape()) +
                         ")");
  }
  if (w.logits.size() != 3) throw DimensionError("fuse: fusion logits must have 3 entries");
  Tensor weights = softmax_rows(tape, w.logits);
  Tensor out = scale_by(tape, z_img, select(tape, weights, 0));
  out = add(tape, out, scale_by(tape, z_audio, select(tape, weights, 1)));
  return add(tape, out, scale_by(tape, z_text, select(tape, weights, 2)));
}

Tensor classify(Tape& tape, const Tensor& z_fused, const ClassifierHead& head) {
  if (z_fused.rank() == 1) {
    Tape& t = tape;
    Tensor row = reshape(t, z_fused, {1, z_fused.dim(0)});
    Tensor p = softmax_rows(t, add_bias(t, matmul(t, row, head.weight), head.bias));
    return reshape(t, p, {head.bias.size()});
  }
  return softmax_rows(tape, add_bias(tape, matmul(tape, z_fused, head.weight), head.bias));
}

Tensor cross_entropy(Tape& tape, const Tensor& probs, std::span<const int> labels) {
  const std::size_t classes = probs.shape().back();
  const std::size_t rows = probs.size() / classes;
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for probs " +
                         shape_string(probs.shape()));
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw ValidationError("cross_entropy: label " + std::to_string(l) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
  }
  std::vector<int> ls(labels.begin(), labels.end());
  double total = 0.0;
  auto pv = probs.values();
  for (std::size_t r = 0; r < rows; ++r) {
    total += -std::log(std::max(pv[r * classes + static_cast<std::size_t>(ls[r])], kLogFloor));
  }
  const double n = static_cast<double>(rows);
  Tensor out = Tensor::scalar(total / n);
  require_finite(out, "cross_entropy");
  tape.record({&probs}, out, [probs, out, ls = std::move(ls), classes, n]() mutable {
    const double g = out.grad()[0] / n;
    auto pv = probs.values();
    auto dp = probs.grad_mut();
    for (std::size_t r = 0; r < ls.size(); ++r) {
      const std::size_t i = r * classes + static_cast<std::size_t>(ls[r]);
      if (pv[i] > kLogFloor) dp[i] -= g / pv[i];  // clamped region has zero slope
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Model

Model Model::init(const ModelConfig& config, FusionMode mode, Rng& rng) {
  config.validate();
  Model m;
  m.config_ = config;
  m.mode_ = mode;
  m.image_ = BranchParams::init(config, config.d_img, 0, rng);
  m.audio_ = BranchParams::init(config, config.d_audio, 0, rng);
  const std::size_t vocab = config.text_mode == TextMode::tokens ? config.vocab_size : 0;
  m.text_ = BranchParams::init(config, config.d_text, vocab, rng);
  m.fusion_ = FusionWeights::zeros();
  m.head_ = ClassifierHead::init(config, rng);
  return m;
}

std::array<double, 3> Model::effective_weights() const {
  switch (mode_) {
    case FusionMode::full: return fusion_.effective();
    case FusionMode::image_only: return {1.0, 0.0, 0.0};
    case FusionMode::audio_only: return {0.0, 1.0, 0.0};
    case FusionMode::text_only: return {0.0, 0.0, 1.0};
  }
  return fusion_.effective();
}

std::vector<NamedTensor> Model::parameters() const {
  std::vector<NamedTensor> out;
  image_.collect("image.", out);
  audio_.collect("audio.", out);
  text_.collect("text.", out);
  out.push_back({"fusion.logits", fusion_.logits});
  out.push_back({"head.w", head_.weight});
  out.push_back({"head.b", head_.bias});
  return out;
}

Model Model::clone() const {
  Model m = *this;
  auto src = parameters();
  // Rebind every handle in the copy to fresh storage, matched by position.
  std::vector<Tensor*> slots;
  auto branch_slots = [&](BranchParams& b) {
    if (b.embedding.defined()) slots.push_back(&b.embedding);
    slots.push_back(&b.proj_w);
    slots.push_back(&b.proj_b);
    for (auto& l : b.layers) {
      auto& a = l.attention;
      for (std::size_t h = 0; h < a.w_q.size(); ++h) {
        slots.push_back(&a.w_q[h]);
        slots.push_back(&a.w_k[h]);
        slots.push_back(&a.w_v[h]);
      }
      slots.push_back(&a.w_o);
      for (Tensor* t : {&l.ffn_w1, &l.ffn_b1, &l.ffn_w2, &l.ffn_b2, &l.ln1_gain, &l.ln1_bias,
                        &l.ln2_gain, &l.ln2_bias}) {
        slots.push_back(t);
      }
    }
  };
  branch_slots(m.image_);
  branch_slots(m.audio_);
  branch_slots(m.text_);
  slots.push_back(&m.fusion_.logits);
  slots.push_back(&m.head_.weight);
  slots.push_back(&m.head_.bias);
  for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = src[i].tensor.clone();
  return m;
}

void check_compatible(const ModelConfig& config, const MultimodalSample& s) {
  auto fail = [&](const std::string& what, std::size_t expected, std::size_t actual) {
    throw ValidationError("sample \"" + s.id + "\": " + what + " expected " +
                          std::to_string(expected) + ", got " + std::to_string(actual));
  };
  if (s.image.features.cols != config.d_img) fail("d_img", config.d_img, s.image.features.cols);
  if (s.audio.features.cols != config.d_audio) fail("d_audio", config.d_audio, s.audio.features.cols);
  if (config.text_mode == TextMode::embeddings) {
    if (!s.text.embeddings) throw ValidationError("sample \"" + s.id + "\": model expects text embeddings");
    if (s.text.embeddings->cols != config.d_text) fail("d_text", config.d_text, s.text.embeddings->cols);
  } else {
    if (!s.text.token_ids) throw ValidationError("sample \"" + s.id + "\": model expects text tokens");
    for (int t : *s.text.token_ids) {
      if (t < 0 || static_cast<std::size_t>(t) >= config.vocab_size) {
        throw ValidationError("sample \"" + s.id + "\": token id " + std::to_string(t) +
                              " outside vocab_size " + std::to_string(config.vocab_size));
      }
    }
  }
  const std::size_t longest =
      std::max({s.image.features.rows, s.audio.features.rows, s.text.length()});
  if (longest > config.max_seq_len) fail("max_seq_len at most", config.max_seq_len, longest);
}

namespace {

Tensor encode_text_batch(const Pass& pass, const Model& model, const Batch& batch) {
  if (batch.text_mode != model.config().text_mode) {
    throw ValidationError("batch text mode does not match the model's");
  }
  if (batch.text_mode == TextMode::embeddings) {
    return encode_features(pass, model.text(), batch.text.features, batch.text.mask, model.config());
  }
  return encode_tokens(pass, model.text(), batch.text_tokens, batch.text_token_mask, model.config());
}

}  // namespace

ForwardResult forward_full(const Pass& pass, const Model& model, const Batch& batch) {
  const ModelConfig& c = model.config();
  Tensor fused;
  switch (model.mode()) {
    case FusionMode::full: {
      Tensor zi = encode_features(pass, model.image(), batch.image.features, batch.image.mask, c);
      Tensor za = encode_features(pass, model.audio(), batch.audio.features, batch.audio.mask, c);
      Tensor zt = encode_text_batch(pass, model, batch);
      fused = fuse(pass.tape, zi, za, zt, model.fusion());
      break;
    }
    case FusionMode::image_only:
      fused = encode_features(pass, model.image(), batch.image.features, batch.image.mask, c);
      break;
    case FusionMode::audio_only:
      fused = encode_features(pass, model.audio(), batch.audio.features, batch.audio.mask, c);
      break;
    case FusionMode::text_only:
      fused = encode_text_batch(pass, model, batch);
      break;
  }
  Tensor probs = classify(pass.tape, fused, model.head());
  Tensor loss = cross_entropy(pass.tape, probs, batch.labels);
  return {probs, loss};
}

ForwardResult forward_full(const Pass& pass, const Model& model, const MultimodalSample& sample) {
  check_compatible(model.config(), sample);
  const MultimodalSample* one[] = {&sample};
  Batch batch = collate(one, model.config().text_mode);
  ForwardResult r = forward_full(pass, model, batch);
  r.probs = reshape(pass.tape, r.probs, {model.config().n_classes});
  return r;
}

}  // namespace trifuse
